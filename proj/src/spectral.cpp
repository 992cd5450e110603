#include "sphagg/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "sphagg/error.hpp"

namespace sphagg::spectral {

namespace {

void require_dim(int n) {
  if (n < 2) throw ParameterRangeError("sphere dimension n must be >= 2, got " + std::to_string(n));
}

void require_degree(int L) {
  if (L < 0 || L > kMaxDegree) {
    throw ParameterRangeError("degree must lie in [0, " + std::to_string(kMaxDegree) + "], got " +
                              std::to_string(L));
  }
}

int default_nodes(int L) { return 2 * L + 8; }

}  // namespace

ZonalCoefficients::ZonalCoefficients(int n, std::vector<double> coeffs)
    : n_(n), c_(std::move(coeffs)) {
  require_dim(n_);
  if (c_.empty()) throw ParameterRangeError("zonal coefficients need at least l = 0");
  for (double v : c_) {
    if (!std::isfinite(v)) throw NonFiniteValue("non-finite zonal coefficient");
  }
}

ZonalCoefficients ZonalCoefficients::resized(int L) const {
  std::vector<double> c(c_);
  c.resize(static_cast<std::size_t>(L) + 1, 0.0);
  return ZonalCoefficients(n_, std::move(c));
}

double gegenbauer_eval(double lambda, int l, double t) {
  if (!(lambda > 0.0)) throw ParameterRangeError("gegenbauer_eval needs lambda > 0");
  if (l < 0) throw ParameterRangeError("gegenbauer_eval needs l >= 0");
  double c0 = 1.0;
  if (l == 0) return c0;
  double c1 = 2.0 * lambda * t;
  for (int m = 0; m + 2 <= l; ++m) {
    const double c2 = (2.0 * (lambda + m + 1) * t * c1 - (2.0 * lambda + m) * c0) / (m + 2);
    c0 = c1;
    c1 = c2;
  }
  return c1;
}

std::vector<double> zonal_harmonic_table(int n, int L, double t) {
  require_dim(n);
  std::vector<double> z(static_cast<std::size_t>(L) + 1);
  z[0] = 1.0;
  if (L == 0) return z;
  if (n == 2) {
    double tm = 1.0, tc = t;
    z[1] = 2.0 * t;
    for (int l = 2; l <= L; ++l) {
      const double tn = 2.0 * t * tc - tm;
      tm = tc;
      tc = tn;
      z[l] = 2.0 * tc;
    }
    return z;
  }
  const double lambda = 0.5 * (n - 2);
  double c0 = 1.0, c1 = 2.0 * lambda * t;
  z[1] = (2.0 + n - 2) / (n - 2) * c1;
  for (int m = 0; m + 2 <= L; ++m) {
    const double c2 = (2.0 * (lambda + m + 1) * t * c1 - (2.0 * lambda + m) * c0) / (m + 2);
    c0 = c1;
    c1 = c2;
    const int l = m + 2;
    z[l] = (2.0 * l + n - 2) / (n - 2) * c1;
  }
  return z;
}

std::vector<double> zonal_harmonic_derivative_table(int n, int L, double t) {
  require_dim(n);
  // Z_l' = (2l + n - 2) C_{l-1}^{n/2}, valid for n = 2 as well.
  std::vector<double> dz(static_cast<std::size_t>(L) + 1, 0.0);
  const double lambda = 0.5 * n;
  double c0 = 1.0, c1 = 2.0 * lambda * t;
  for (int l = 1; l <= L; ++l) {
    const int m = l - 1;
    if (m >= 2) {
      const double c2 = (2.0 * (lambda + m - 1) * t * c1 - (2.0 * lambda + m - 2) * c0) / m;
      c0 = c1;
      c1 = c2;
    }
    dz[l] = (2.0 * l + n - 2) * (m == 0 ? c0 : c1);
  }
  return dz;
}

double zonal_harmonic_eval(int n, int l, double t) {
  if (l < 0) throw ParameterRangeError("zonal_harmonic_eval needs l >= 0");
  return zonal_harmonic_table(n, l, t)[static_cast<std::size_t>(l)];
}

double zonal_harmonic_at_one(int n, int l) {
  require_dim(n);
  if (l == 0) return 1.0;
  if (n == 2) return 2.0;
  // C_l^lambda(1) = binom(l + 2 lambda - 1, l)
  double c = 1.0;
  for (int k = 1; k <= l; ++k) c *= (k + n - 3.0) / k;
  return (2.0 * l + n - 2) / (n - 2) * c;
}

QuadratureGrid build_quadrature(int n, int M) {
  require_dim(n);
  if (M < 2) throw ParameterRangeError("build_quadrature needs M >= 2");
  QuadratureGrid g;
  g.dim = n;
  g.nodes.resize(static_cast<std::size_t>(M));
  g.weights.assign(static_cast<std::size_t>(M), 1.0 / M);
  if (n == 2) {
    // Gauss-Chebyshev: equal weights.
    for (int k = 0; k < M; ++k) g.nodes[k] = -std::cos((2.0 * k + 1) * std::numbers::pi / (2.0 * M));
    return g;
  }
  const double lambda = 0.5 * (n - 2);
  // Golub-Welsch on the monic Gegenbauer Jacobi matrix.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd sub(M - 1);
  for (int k = 1; k < M; ++k) {
    const double beta = k * (k + 2.0 * lambda - 1) / (4.0 * (k + lambda) * (k + lambda - 1));
    sub[k - 1] = std::sqrt(beta);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  double total = 0.0;
  for (int i = 0; i < M; ++i) {
    double t = ev[i];
    double dp = 1.0;
    for (int it = 0; it < 3; ++it) {
      const double p = gegenbauer_eval(lambda, M, t);
      dp = 2.0 * lambda * gegenbauer_eval(lambda + 1.0, M - 1, t);
      const double step = p / dp;
      t -= step;
      if (std::abs(step) < 1e-16) break;
    }
    dp = 2.0 * lambda * gegenbauer_eval(lambda + 1.0, M - 1, t);
    g.nodes[i] = t;
    g.weights[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    total += g.weights[i];
  }
  for (double& w : g.weights) w /= total;
  return g;
}

ZonalCoefficients decompose_kernel(const std::function<double(double)>& W, int n, int L, int M) {
  require_dim(n);
  require_degree(L);
  if (M == 0) M = default_nodes(L);
  const QuadratureGrid g = build_quadrature(n, M);
  std::vector<double> values(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    values[i] = W(g.nodes[i]);
    if (!std::isfinite(values[i])) {
      throw NonFiniteValue("decompose_kernel: non-finite kernel value at t = " +
                           std::to_string(g.nodes[i]));
    }
  }
  return decompose_kernel(ZonalFunction{g, std::move(values), std::nullopt}, L);
}

ZonalCoefficients decompose_kernel(const ZonalFunction& f, int L) {
  const QuadratureGrid& g = f.grid;
  require_degree(L);
  if (f.values.size() != g.nodes.size()) {
    throw DimensionMismatch("decompose_kernel: values do not match the grid");
  }
  std::vector<double> c(static_cast<std::size_t>(L) + 1, 0.0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (!std::isfinite(f.values[i])) throw NonFiniteValue("decompose_kernel: non-finite value");
    const std::vector<double> z = zonal_harmonic_table(g.dim, L, g.nodes[i]);
    const double wf = g.weights[i] * f.values[i];
    for (int l = 0; l <= L; ++l) c[l] += wf * z[l];
  }
  for (int l = 0; l <= L; ++l) c[l] /= zonal_harmonic_at_one(g.dim, l);
  return ZonalCoefficients(g.dim, std::move(c));
}

double reconstruct_kernel(const ZonalCoefficients& c, double t) {
  const std::vector<double> z = zonal_harmonic_table(c.dim(), c.degree(), t);
  double s = 0.0;
  for (int l = 0; l <= c.degree(); ++l) s += c[l] * z[l];
  return s;
}

ZonalFunction make_zonal_function(const QuadratureGrid& grid, const ZonalCoefficients& c) {
  if (grid.dim != c.dim()) throw DimensionMismatch("grid and coefficients differ in n");
  std::vector<double> v(grid.nodes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = reconstruct_kernel(c, grid.nodes[i]);
  return ZonalFunction{grid, std::move(v), c};
}

ZonalCoefficients convolve(const ZonalCoefficients& kernel, const ZonalCoefficients& f) {
  if (kernel.dim() != f.dim()) {
    throw DimensionMismatch("convolve: kernel n = " + std::to_string(kernel.dim()) +
                            ", function n = " + std::to_string(f.dim()));
  }
  const int L = std::min(kernel.degree(), f.degree());
  std::vector<double> c(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) c[l] = kernel[l] * f[l];
  return ZonalCoefficients(f.dim(), std::move(c));
}

ZonalCoefficients sqrt_kernel(const ZonalCoefficients& V) {
  std::vector<double> c(V.coeffs().begin(), V.coeffs().end());
  for (std::size_t l = 0; l < c.size(); ++l) {
    if (c[l] < -1e-12) {
      throw NotPositiveSemidefinite("sqrt_kernel: coefficient " + std::to_string(l) + " is " +
                                    std::to_string(c[l]));
    }
    c[l] = std::sqrt(std::max(c[l], 0.0));
  }
  return ZonalCoefficients(V.dim(), std::move(c));
}

double laplacian_eigenvalue(int n, int l) { return -static_cast<double>(l) * (n - 2 + l); }

ZonalCoefficients heat_semigroup_apply(const ZonalCoefficients& f, double s) {
  if (!(s >= 0.0)) throw ParameterRangeError("heat semigroup time must be >= 0");
  std::vector<double> c(f.coeffs().begin(), f.coeffs().end());
  for (int l = 0; l <= f.degree(); ++l) c[l] *= std::exp(s * laplacian_eigenvalue(f.dim(), l));
  return ZonalCoefficients(f.dim(), std::move(c));
}

DirichletCheck dirichlet_identity_check(const ZonalCoefficients& u, const ZonalCoefficients& V,
                                        int M) {
  if (u.dim() != V.dim()) throw DimensionMismatch("dirichlet_identity_check: n differs");
  const int n = u.dim();
  const ZonalCoefficients g = convolve(sqrt_kernel(V), u);
  const int L = g.degree();
  DirichletCheck out;
  for (int l = 0; l <= L; ++l) {
    out.lhs -= laplacian_eigenvalue(n, l) * V[l] * u[l] * u[l] * zonal_harmonic_at_one(n, l);
  }
  if (M == 0) M = default_nodes(L);
  const QuadratureGrid q = build_quadrature(n, M);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double t = q.nodes[i];
    const std::vector<double> dz = zonal_harmonic_derivative_table(n, L, t);
    double dg = 0.0;
    for (int l = 1; l <= L; ++l) dg += g[l] * dz[l];
    // d/dtheta = -sin(theta) d/dt
    out.rhs += q.weights[i] * (1.0 - t * t) * dg * dg;
  }
  return out;
}

double delta_approx_error(const ZonalCoefficients& u, const ZonalCoefficients& V) {
  if (u.dim() != V.dim()) throw DimensionMismatch("delta_approx_error: n differs");
  const ZonalCoefficients s = sqrt_kernel(V.resized(std::max(V.degree(), u.degree())));
  double acc = 0.0;
  for (int l = 0; l <= u.degree(); ++l) {
    const double d = (1.0 - s[l]) * u[l];
    acc += d * d * zonal_harmonic_at_one(u.dim(), l);
  }
  return std::sqrt(acc);
}

UniformApprox uniform_approx_error(const ZonalFunction& u, const ZonalCoefficients& V) {
  if (u.grid.dim != V.dim()) throw DimensionMismatch("uniform_approx_error: n differs");
  const int L = std::max(0, (static_cast<int>(u.grid.nodes.size()) - 8) / 2);
  const ZonalCoefficients uc = u.coeffs ? *u.coeffs : decompose_kernel(u, std::min(L, kMaxDegree));
  const ZonalCoefficients s = sqrt_kernel(V.resized(std::max(V.degree(), uc.degree())));
  const ZonalCoefficients su = convolve(s, uc);
  UniformApprox out;
  for (std::size_t i = 0; i < u.grid.nodes.size(); ++i) {
    out.error = std::max(out.error, std::abs(u.values[i] - reconstruct_kernel(su, u.grid.nodes[i])));
  }
  out.sqrt_min = check_sqrt_positivity(V);
  out.positivity_ok = out.sqrt_min >= -1e-6;
  return out;
}

double check_sqrt_positivity(const ZonalCoefficients& V, int samples) {
  if (samples < 2) throw ParameterRangeError("check_sqrt_positivity needs >= 2 samples");
  const ZonalCoefficients s = sqrt_kernel(V);
  double lo = INFINITY;
  for (int i = 0; i < samples; ++i) {
    const double t = -1.0 + 2.0 * i / (samples - 1);
    lo = std::min(lo, reconstruct_kernel(s, t));
  }
  return lo;
}

bool sqrt_is_nonnegative(const ZonalCoefficients& V, int samples) {
  const ZonalCoefficients s = sqrt_kernel(V);
  double scale = 0.0;
  for (int l = 0; l <= s.degree(); ++l) scale += std::abs(s[l]) * zonal_harmonic_at_one(s.dim(), l);
  return check_sqrt_positivity(V, samples) >= -64.0 * std::numeric_limits<double>::epsilon() * scale;
}

bool AdmissibilityReport::passed() const {
  if (!monotone_limit || entries.empty()) return false;
  return std::all_of(entries.begin(), entries.end(), [](const AdmissibilityEntry& e) {
    return e.nonnegative && e.normalized && e.bounded && e.tail_summable;
  });
}

AdmissibilityReport check_admissibility(const std::function<ZonalCoefficients(double)>& family,
                                        std::vector<double> eps_list, double C) {
  AdmissibilityReport rep;
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  std::vector<ZonalCoefficients> tables;
  for (double eps : eps_list) {
    const ZonalCoefficients V = family(eps);
    const int n = V.dim(), L = V.degree();
    AdmissibilityEntry e;
    e.eps = eps;
    e.nonnegative = std::all_of(V.coeffs().begin(), V.coeffs().end(), [](double v) { return v >= 0.0; });
    e.normalized = std::abs(V[0] - 1.0) <= 1e-10;
    e.max_coeff = *std::max_element(V.coeffs().begin(), V.coeffs().end());
    e.bounded = e.max_coeff <= C + 1e-12;
    for (int l = 1; l <= L; ++l) e.weighted_tail += std::pow(l, n) * V[l];

    // Least-squares slope of log(l^n V_l) over the last ten degrees. Entries that
    // underflowed to zero count as decayed.
    const int l0 = std::max(1, L - 9);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    bool underflow = false;
    for (int l = l0; l <= L; ++l) {
      if (V[l] <= 0.0) {
        underflow = true;
        continue;
      }
      const double y = n * std::log(static_cast<double>(l)) + std::log(V[l]);
      sx += l;
      sy += y;
      sxx += static_cast<double>(l) * l;
      sxy += l * y;
      ++cnt;
    }
    if (cnt >= 2) {
      e.tail_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
      e.tail_summable = std::isfinite(e.weighted_tail) && e.tail_slope < 0.0;
    } else {
      e.tail_slope = -INFINITY;
      e.tail_summable = underflow && e.nonnegative;
    }
    rep.entries.push_back(e);
    tables.push_back(V);
  }
  rep.monotone_limit = !tables.empty();
  for (std::size_t k = 1; k < tables.size(); ++k) {
    const int L = std::min(tables[k].degree(), tables[k - 1].degree());
    for (int l = 0; l <= L; ++l) {
      if (std::abs(1.0 - tables[k][l]) > std::abs(1.0 - tables[k - 1][l]) + 1e-15) {
        rep.monotone_limit = false;
      }
    }
  }
  return rep;
}

void write_coefficients_csv(std::ostream& os, const ZonalCoefficients& c) {
  char buf[64];
  os << "n,L\n" << c.dim() << ',' << c.degree() << '\n';
  for (int l = 0; l <= c.degree(); ++l) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", l, c[l]);
    os << buf;
  }
}

ZonalCoefficients read_coefficients_csv(std::istream& is) {
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) {
    throw ParameterRangeError("coefficient CSV line " + std::to_string(lineno) + ": " + what);
  };
  if (!next() || line != "n,L") fail("expected header 'n,L'");
  if (!next()) fail("missing n,L values");
  int n = 0, L = 0;
  {
    char comma = 0;
    std::istringstream ss(line);
    if (!(ss >> n >> comma >> L) || comma != ',') fail("malformed n,L row");
  }
  require_dim(n);
  require_degree(L);
  std::vector<double> c(static_cast<std::size_t>(L) + 1, 0.0);
  std::vector<bool> seen(c.size(), false);
  while (next()) {
    const auto pos = line.find(',');
    if (pos == std::string::npos) fail("expected 'l,value'");
    std::size_t used = 0;
    int l = 0;
    double v = 0.0;
    try {
      l = std::stoi(line.substr(0, pos), &used);
      v = std::stod(line.substr(pos + 1));
    } catch (const std::exception&) {
      fail("unparsable row '" + line + "'");
    }
    if (l < 0 || l > L) fail("degree " + std::to_string(l) + " outside [0, L]");
    if (seen[l]) fail("duplicate degree " + std::to_string(l));
    seen[l] = true;
    c[l] = v;
  }
  for (int l = 0; l <= L; ++l) {
    if (!seen[l]) throw ParameterRangeError("coefficient CSV is missing degree " + std::to_string(l));
  }
  return ZonalCoefficients(n, std::move(c));
}

}  // namespace sphagg::spectral
