#include "sphagg/ot.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "sphagg/error.hpp"
#include "sphagg/kernels.hpp"

namespace sphagg::ot {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMassTol = 1e-12;
constexpr double kInvPhi = 0.6180339887498949;

using Piece = CircularDistribution::Piece;

// Lifted quantile u -> Q(u) with Q(u + 1) = Q(u) + 1, in turns.
class Quantile {
 public:
  explicit Quantile(const CircularDistribution& d) : p_(d.pieces()), cum_(d.cumulative()) {}

  // Piece containing u in [0, 1].
  std::size_t locate(double u) const {
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    const std::ptrdiff_t i = (it - cum_.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
        i, 0, static_cast<std::ptrdiff_t>(p_.size()) - 1));
  }
  // Linear formula of piece i evaluated at the (unlifted) level u.
  double at(std::size_t i, double u) const {
    const Piece& p = p_[i];
    if (p.b == p.a) return p.a;
    return p.a + (u - cum_[i]) / p.mass * (p.b - p.a);
  }
  // Q on an interval [u0, u1] on which it is linear; the piece is picked at the midpoint.
  std::pair<double, double> ends(double u0, double u1) const {
    const double um = 0.5 * (u0 + u1);
    const double k = std::floor(um);
    const std::size_t i = locate(um - k);
    return {at(i, u0 - k) + k, at(i, u1 - k) + k};
  }
  const std::vector<double>& cum() const { return cum_; }

 private:
  const std::vector<Piece>& p_;
  const std::vector<double>& cum_;
};

double cdf_turns(const CircularDistribution& d, double s) {
  const auto& P = d.pieces();
  const auto it = std::partition_point(P.begin(), P.end(), [s](const Piece& p) { return p.a < s; });
  if (it == P.begin()) return 0.0;
  const std::size_t i = static_cast<std::size_t>(it - P.begin()) - 1;
  const Piece& p = P[i];
  double part = p.mass;
  if (p.b > p.a) part *= std::min(1.0, (s - p.a) / (p.b - p.a));
  return d.cumulative()[i] + part;
}

// int over an interval of length len of |d|^p with d linear from d0 to d1.
double linear_power_integral(double d0, double d1, double len, int p) {
  if (p == 2) return len * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
  const double a0 = std::abs(d0), a1 = std::abs(d1);
  if ((d0 >= 0.0) == (d1 >= 0.0) || a0 + a1 == 0.0) return 0.5 * len * (a0 + a1);
  return 0.5 * len * (d0 * d0 + d1 * d1) / (a0 + a1);
}

// int_0^1 |Q_mu(t) - Q_nu(t + alpha)|^p dt, in turns^p.
double quantile_cost(const Quantile& qm, const Quantile& qn, double alpha, int p) {
  std::vector<double> ts;
  ts.reserve(qm.cum().size() + 3 * qn.cum().size() + 2);
  ts.push_back(0.0);
  ts.push_back(1.0);
  for (std::size_t i = 1; i + 1 < qm.cum().size(); ++i) ts.push_back(qm.cum()[i]);
  const double fa = std::floor(alpha);
  for (double k = fa - 1.0; k <= fa + 1.0; k += 1.0) {
    for (double c : qn.cum()) {
      const double t = c + k - alpha;
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());
  double cost = 0.0;
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double t0 = ts[i - 1], t1 = ts[i];
    if (!(t1 > t0)) continue;
    const auto [m0, m1] = qm.ends(t0, t1);
    const auto [n0, n1] = qn.ends(t0 + alpha, t1 + alpha);
    cost += linear_power_integral(m0 - n0, m1 - n1, t1 - t0, p);
  }
  return cost;
}

// int_0^1 |F_mu(s) - F_nu(s) - alpha| ds, in turns.
double cdf_cost(const CircularDistribution& mu, const CircularDistribution& nu,
                const std::vector<double>& breaks, double alpha) {
  double cost = 0.0;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const double s0 = breaks[i - 1], s1 = breaks[i];
    if (!(s1 > s0)) continue;
    // The difference is linear inside; evaluate at interior points and extrapolate.
    const double len = s1 - s0;
    const double ha = cdf_turns(mu, s0 + 0.25 * len) - cdf_turns(nu, s0 + 0.25 * len);
    const double hb = cdf_turns(mu, s0 + 0.75 * len) - cdf_turns(nu, s0 + 0.75 * len);
    const double h0 = 1.5 * ha - 0.5 * hb, h1 = 1.5 * hb - 0.5 * ha;
    cost += linear_power_integral(h0 - alpha, h1 - alpha, len, 1);
  }
  return cost;
}

template <class Fn>
double golden_section(const Fn& f, double lo, double hi) {
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-10) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

void require_grid(const CircularDistribution& d, const char* what) {
  if (!d.is_grid()) throw ParameterRangeError(std::string(what) + " must be a grid distribution");
}

// Real DFT of samples on the uniform grid, modes 0..N/2, a_l + i b_l = mean(v e^{-i l theta}).
struct RealDft {
  explicit RealDft(int n) : N(n), c(static_cast<std::size_t>(n)), s(static_cast<std::size_t>(n)) {
    for (int j = 0; j < N; ++j) {
      c[j] = std::cos(kTwoPi * j / N);
      s[j] = std::sin(kTwoPi * j / N);
    }
  }
  void forward(const std::vector<double>& v, std::vector<double>& a, std::vector<double>& b) const {
    const int H = N / 2;
    a.assign(static_cast<std::size_t>(H) + 1, 0.0);
    b.assign(static_cast<std::size_t>(H) + 1, 0.0);
    for (int l = 0; l <= H; ++l) {
      double sa = 0.0, sb = 0.0;
      for (int j = 0; j < N; ++j) {
        const std::size_t r = static_cast<std::size_t>((static_cast<long>(l) * j) % N);
        sa += v[j] * c[r];
        sb += v[j] * s[r];
      }
      a[l] = sa / N;
      b[l] = sb / N;
    }
  }
  // Trigonometric interpolant with the given coefficients, sampled on the grid.
  std::vector<double> inverse(const std::vector<double>& a, const std::vector<double>& b) const {
    const int H = N / 2;
    std::vector<double> v(static_cast<std::size_t>(N), 0.0);
    for (int j = 0; j < N; ++j) {
      double sum = a[0];
      for (int l = 1; l <= H; ++l) {
        const std::size_t r = static_cast<std::size_t>((static_cast<long>(l) * j) % N);
        const double w = (2 * l == N) ? 1.0 : 2.0;
        sum += w * (a[l] * c[r] + b[l] * s[r]);
      }
      v[j] = sum;
    }
    return v;
  }
  int N;
  std::vector<double> c, s;
};

// Rescales to mean exactly 1 after round-off drift.
std::vector<double> renormalize(std::vector<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x /= mean;
  return v;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// CircularDistribution

CircularDistribution CircularDistribution::from_atoms(std::vector<double> angles,
                                                      std::vector<double> weights) {
  if (angles.size() != weights.size()) {
    throw DimensionMismatch("atom angles and weights differ in length");
  }
  if (angles.empty()) throw ParameterRangeError("a distribution needs at least one atom");
  double total = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (!std::isfinite(angles[i]) || !std::isfinite(weights[i])) {
      throw NonFiniteValue("non-finite atom");
    }
    if (weights[i] < 0.0) throw ParameterRangeError("atom weights must be >= 0");
    total += weights[i];
    double a = std::fmod(angles[i], kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a = 0.0;
    angles[i] = a;
  }
  if (std::abs(total - 1.0) > kMassTol) {
    throw ParameterRangeError("atom weights sum to " + std::to_string(total) + ", not 1");
  }
  std::vector<std::size_t> order(angles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return angles[i] < angles[j]; });
  CircularDistribution d;
  for (std::size_t i : order) {
    d.angles_.push_back(angles[i]);
    d.weights_.push_back(weights[i]);
  }
  d.build_pieces();
  return d;
}

CircularDistribution CircularDistribution::from_grid(std::vector<double> density) {
  if (density.empty()) throw ParameterRangeError("a grid distribution needs at least one cell");
  double total = 0.0;
  for (double v : density) {
    if (!std::isfinite(v)) throw NonFiniteValue("non-finite grid density");
    if (v < 0.0) throw ParameterRangeError("grid density must be >= 0");
    total += v;
  }
  const double mean = total / static_cast<double>(density.size());
  if (std::abs(mean - 1.0) > kMassTol) {
    throw ParameterRangeError("grid density has mass " + std::to_string(mean) + ", not 1");
  }
  CircularDistribution d;
  d.grid_ = true;
  d.density_ = std::move(density);
  d.build_pieces();
  return d;
}

void CircularDistribution::build_pieces() {
  pieces_.clear();
  if (grid_) {
    const double N = static_cast<double>(density_.size());
    const double h = 1.0 / N;
    if (density_[0] > 0.0) pieces_.push_back({0.0, 0.5 * h, 0.5 * density_[0] * h});
    for (std::size_t j = 1; j < density_.size(); ++j) {
      if (density_[j] > 0.0) {
        pieces_.push_back({(static_cast<double>(j) - 0.5) * h, (static_cast<double>(j) + 0.5) * h,
                           density_[j] * h});
      }
    }
    if (density_[0] > 0.0) pieces_.push_back({1.0 - 0.5 * h, 1.0, 0.5 * density_[0] * h});
  } else {
    for (std::size_t i = 0; i < angles_.size(); ++i) {
      if (weights_[i] > 0.0) pieces_.push_back({angles_[i] / kTwoPi, angles_[i] / kTwoPi, weights_[i]});
    }
  }
  cum_.assign(pieces_.size() + 1, 0.0);
  for (std::size_t i = 0; i < pieces_.size(); ++i) cum_[i + 1] = cum_[i] + pieces_[i].mass;
  const double total = cum_.back();
  for (double& c : cum_) c /= total;
  for (Piece& p : pieces_) p.mass /= total;
  cum_.back() = 1.0;
}

double CircularDistribution::cdf(double theta) const {
  if (!(theta >= 0.0 && theta <= kTwoPi)) throw ParameterRangeError("cdf angle outside [0, 2 pi]");
  return cdf_turns(*this, theta / kTwoPi);
}

// Transport

namespace {

bool piece_order(const CircularDistribution& x, const CircularDistribution& y) {
  const auto& a = x.pieces();
  const auto& b = y.pieces();
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].a != b[i].a) return a[i].a < b[i].a;
    if (a[i].b != b[i].b) return a[i].b < b[i].b;
    if (a[i].mass != b[i].mass) return a[i].mass < b[i].mass;
  }
  return false;
}

TransportResult transport(const CircularDistribution& mu, const CircularDistribution& nu, int p);

}  // namespace

TransportResult wasserstein_circle_detail(const CircularDistribution& mu,
                                          const CircularDistribution& nu, int p) {
  if (p != 1 && p != 2) throw ParameterRangeError("wasserstein_circle supports p = 1 or 2");
  // A canonical argument order makes the distance exactly symmetric; swapping
  // the arguments negates the shift.
  if (piece_order(nu, mu)) {
    TransportResult r = transport(nu, mu, p);
    r.shift = -r.shift;
    return r;
  }
  return transport(mu, nu, p);
}

namespace {

// Minimizes a convex cost over alpha. Golden section brackets the minimizer;
// kinks (where the minimum of a piecewise-smooth cost usually sits) are then
// tried exactly.
template <class Cost, class Kinks>
TransportResult minimize_shift(const Cost& cost, const Kinks& kinks) {
  TransportResult out;
  double a = golden_section(cost, -1.0, 1.0);
  double c = cost(a);
  for (double k : kinks(a, 1e-7)) {
    const double ck = cost(k);
    if (ck < c) {
      c = ck;
      a = k;
    }
  }
  const double slack = 1e-13 * std::max(c, 1e-3);
  out.shift = a;
  out.certificate_ok = cost(a - 1e-6) >= c - slack && cost(a + 1e-6) >= c - slack;
  out.distance = std::max(c, 0.0);
  return out;
}

TransportResult transport(const CircularDistribution& mu, const CircularDistribution& nu, int p) {
  if (p == 2) {
    const Quantile qm(mu), qn(nu);
    std::vector<double> lifted;
    for (double k = -2.0; k <= 2.0; k += 1.0) {
      for (double c : qn.cum()) lifted.push_back(c + k);
    }
    std::sort(lifted.begin(), lifted.end());
    // Shifts at which a breakpoint of Q_mu meets one of Q_nu(. + alpha).
    auto kinks = [&](double a, double delta) {
      std::vector<double> out;
      for (double cm : qm.cum()) {
        const double v = cm + a;
        for (auto it = std::lower_bound(lifted.begin(), lifted.end(), v - delta);
             it != lifted.end() && *it <= v + delta; ++it) {
          out.push_back(*it - cm);
        }
      }
      return out;
    };
    TransportResult r =
        minimize_shift([&](double a) { return quantile_cost(qm, qn, a, 2); }, kinks);
    r.distance = kTwoPi * std::sqrt(r.distance);
    return r;
  }
  std::vector<double> breaks{0.0, 1.0};
  for (const auto* d : {&mu, &nu}) {
    for (const Piece& pc : d->pieces()) {
      breaks.push_back(pc.a);
      breaks.push_back(pc.b);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  // The cost is piecewise linear where the CDF difference is piecewise
  // constant; its kinks are those constant values (a weighted median).
  auto kinks = [&](double a, double delta) {
    std::vector<double> out;
    for (std::size_t i = 1; i < breaks.size(); ++i) {
      const double s = 0.5 * (breaks[i - 1] + breaks[i]);
      const double h = cdf_turns(mu, s) - cdf_turns(nu, s);
      if (std::abs(h - a) <= delta) out.push_back(h);
    }
    return out;
  };
  TransportResult r = minimize_shift([&](double a) { return cdf_cost(mu, nu, breaks, a); }, kinks);
  r.distance *= kTwoPi;
  return r;
}

}  // namespace

double wasserstein_circle(const CircularDistribution& mu, const CircularDistribution& nu, int p) {
  return wasserstein_circle_detail(mu, nu, p).distance;
}

CircularDistribution cell_average(const pde::DensityState& rho, int N) {
  const pde::Discretization& d = rho.disc();
  if (d.dim() != 2) throw DimensionMismatch("cell_average needs an S^1 density");
  if (N < 1) throw ParameterRangeError("cell count must be >= 1");
  const int L = d.degree();
  const Eigen::VectorXd& c = rho.coeffs();
  std::vector<double> v(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) {
    const double th = kTwoPi * j / N;
    double s = c[0];
    for (int l = 1; l <= L; ++l) {
      const double x = std::numbers::pi * l / N;
      const double sinc = std::sin(x) / x;
      s += 2.0 * sinc * (c[l] * std::cos(l * th) + c[L + l] * std::sin(l * th));
    }
    if (s < 0.0) {
      throw NumericalError("cell average is negative at cell " + std::to_string(j));
    }
    v[j] = s;
  }
  return CircularDistribution::from_grid(renormalize(std::move(v)));
}

// InteractionEnergy

InteractionEnergy::InteractionEnergy(int cells, const ZonalCoefficients& W,
                                     std::optional<ZonalCoefficients> V)
    : N_(cells), W_(W), V_(std::move(V)) {
  if (W.dim() != 2 || (V_ && V_->dim() != 2)) {
    throw DimensionMismatch("the grid energy is defined on S^1 only");
  }
  if (cells < 4) throw ParameterRangeError("grid energy needs at least 4 cells");
  L_ = std::min(W.degree(), cells / 2 - 1);
  if (V_) L_ = std::min(L_, V_->degree());
  disc_ = pde::Discretization::create(2, L_, std::max(4 * L_, 2 * L_ + 8));
  mult_ = disc_->multiplier(W_);
  if (V_) mult_ += disc_->multiplier(*V_);
  const int K = disc_->modes();
  avg_.resize(K, N_);
  for (int j = 0; j < N_; ++j) {
    const double th = kTwoPi * j / N_;
    avg_(0, j) = 1.0;
    for (int l = 1; l <= L_; ++l) {
      const double x = std::numbers::pi * l / N_;
      const double sinc = std::sin(x) / x;
      avg_(l, j) = 2.0 * sinc * std::cos(l * th);
      avg_(L_ + l, j) = 2.0 * sinc * std::sin(l * th);
    }
  }
  const ZonalCoefficients& Wc = W_;
  lower_ = -0.5 * kernels::linf_norm(
                      [&Wc](double t) { return spectral::reconstruct_kernel(Wc, t); });
}

Eigen::VectorXd InteractionEnergy::coefficients(std::span<const double> density) const {
  if (static_cast<int>(density.size()) != N_) {
    throw DimensionMismatch("density has " + std::to_string(density.size()) + " cells, expected " +
                            std::to_string(N_));
  }
  const Eigen::Map<const Eigen::VectorXd> rho(density.data(), N_);
  // Cell masses are rho_j / N; divide by the mode norms.
  return (avg_ * rho / static_cast<double>(N_)).cwiseQuotient(disc_->norms());
}

double InteractionEnergy::value(std::span<const double> density) const {
  Eigen::VectorXd c = coefficients(density);
  c[0] = 1.0;
  const pde::DensityState state(disc_, c);
  pde::EnergyValue e = pde::energy(state, W_, V_);
  return e.F_double;
}

std::vector<double> InteractionEnergy::gradient(std::span<const double> density) const {
  const Eigen::VectorXd xi = mult_.cwiseProduct(coefficients(density));
  const Eigen::VectorXd g = avg_.transpose() * xi;
  return std::vector<double>(g.data(), g.data() + g.size());
}

std::function<double(double)> InteractionEnergy::slope(std::span<const double> density) const {
  const Eigen::VectorXd xi = mult_.cwiseProduct(coefficients(density));
  return [xi, L = L_](double th) {
    double s = 0.0;
    for (int l = 1; l <= L; ++l) {
      s += 2.0 * l * (xi[L + l] * std::cos(l * th) - xi[l] * std::sin(l * th));
    }
    return s;
  };
}

// JKO

namespace {

struct JkoEval {
  double J = 0.0, F = 0.0, w2 = 0.0, stationarity = 0.0, gbar = 0.0;
  std::vector<double> g;
};

// Cell averages of the Kantorovich potential phi (radians), phi' = 2 (x - T(x)) with
// T the optimal map from rho to prev.
std::vector<double> potential_averages(const std::vector<double>& rho,
                                       const CircularDistribution& prev, double alpha) {
  const int N = static_cast<int>(rho.size());
  const double h = 1.0 / N;
  const Quantile qn(prev);
  std::vector<double> lifted;
  const double fa = std::floor(alpha);
  for (double k = fa - 2.0; k <= fa + 2.0; k += 1.0) {
    for (double c : qn.cum()) lifted.push_back(c + k);
  }
  std::sort(lifted.begin(), lifted.end());
  std::vector<double> avg(static_cast<std::size_t>(N));
  double phi = 0.0;
  double Fa = -0.5 * rho[0] * h;
  for (int j = 0; j < N; ++j) {
    const double ya = (j - 0.5) * h, yb = (j + 0.5) * h;
    const double m = rho[j] * h;
    std::vector<double> ys{ya};
    if (m > 0.0) {
      const double u0 = Fa + alpha, u1 = Fa + m + alpha;
      auto it = std::upper_bound(lifted.begin(), lifted.end(), u0);
      for (; it != lifted.end() && *it < u1; ++it) ys.push_back(ya + (*it - u0) / rho[j]);
    }
    ys.push_back(yb);
    double integral = 0.0;
    for (std::size_t i = 1; i < ys.size(); ++i) {
      const double y0 = ys[i - 1], y1 = std::max(ys[i], ys[i - 1]);
      double t0, t1;
      if (m > 0.0) {
        const double u0 = Fa + alpha + rho[j] * (y0 - ya);
        const double u1 = Fa + alpha + rho[j] * (y1 - ya);
        std::tie(t0, t1) = qn.ends(u0, u1);
      } else {
        const double u = Fa + alpha;
        std::tie(t0, t1) = qn.ends(u, u);
      }
      const double D0 = kTwoPi * (y0 - t0), D1 = kTwoPi * (y1 - t1);
      const double dr = kTwoPi * (y1 - y0);
      integral += phi * dr + 2.0 * (0.5 * D0 * dr * dr + (D1 - D0) * dr * dr / 6.0);
      phi += dr * (D0 + D1);
    }
    avg[j] = integral / (kTwoPi * h);
    Fa += m;
  }
  return avg;
}

JkoEval evaluate(const std::vector<double>& rho, const CircularDistribution& prev, double tau,
                 const GridFunctional& F) {
  JkoEval e;
  const CircularDistribution cur = CircularDistribution::from_grid(rho);
  const TransportResult tr = wasserstein_circle_detail(cur, prev, 2);
  e.F = F.value(rho);
  e.w2 = tr.distance;
  e.J = e.F + tr.distance * tr.distance / (2.0 * tau);
  e.g = F.gradient(rho);
  const std::vector<double> phi = potential_averages(rho, prev, tr.shift);
  const double N = static_cast<double>(rho.size());
  for (std::size_t j = 0; j < rho.size(); ++j) {
    e.g[j] += phi[j] / (2.0 * tau);
    e.gbar += rho[j] / N * e.g[j];
  }
  double s = 0.0;
  for (std::size_t j = 0; j < rho.size(); ++j) {
    s += rho[j] / N * (e.g[j] - e.gbar) * (e.g[j] - e.gbar);
  }
  e.stationarity = std::sqrt(s);
  return e;
}

// Implicit Lagrangian step: rho is the pullback of prev through x + tau xi'(x).
std::vector<double> warm_start(const CircularDistribution& prev, double tau,
                               const GridFunctional& F) {
  const std::vector<double>& p = prev.density();
  const int N = static_cast<int>(p.size());
  const double h = 1.0 / N;
  auto lifted_cdf = [&](double s) {
    const double k = std::floor(s);
    return k + cdf_turns(prev, s - k);
  };
  std::vector<double> rho = p;
  for (int it = 0; it < 30; ++it) {
    const auto slope = F.slope(rho);
    std::vector<double> Tb(static_cast<std::size_t>(N) + 1);
    for (int j = 0; j <= N; ++j) {
      const double b = (j - 0.5) * h;
      Tb[j] = lifted_cdf(b + tau * slope(kTwoPi * b) / kTwoPi);
    }
    std::vector<double> next(static_cast<std::size_t>(N));
    double change = 0.0;
    for (int j = 0; j < N; ++j) {
      next[j] = std::max(0.0, (Tb[j + 1] - Tb[j]) * N);
      change = std::max(change, std::abs(next[j] - rho[j]));
    }
    rho = renormalize(std::move(next));
    if (change < 1e-13) break;
  }
  return rho;
}

}  // namespace

JkoStepResult jko_step(const CircularDistribution& prev, double tau, const GridFunctional& F,
                       const JkoConfig& config) {
  require_grid(prev, "JKO input");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterRangeError("tau must be positive");
  if (config.max_iter < 0) throw ParameterRangeError("max_iter must be >= 0");
  const std::vector<double>& p = prev.density();
  const double N = static_cast<double>(p.size());

  JkoEval at_prev = evaluate(p, prev, tau, F);
  std::vector<double> rho = warm_start(prev, tau, F);
  JkoEval cur = evaluate(rho, prev, tau, F);
  if (!(cur.J <= at_prev.J)) {
    rho = p;
    cur = std::move(at_prev);
  }

  JkoStepResult out;
  double eta = 1.0;
  int iter = 0;
  bool converged = cur.stationarity <= config.tol;
  while (!converged && iter < config.max_iter) {
    ++iter;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      std::vector<double> trial(rho.size());
      double total = 0.0;
      for (std::size_t j = 0; j < rho.size(); ++j) {
        trial[j] = rho[j] * std::exp(-eta * (cur.g[j] - cur.gbar));
        total += trial[j];
      }
      for (double& v : trial) v *= N / total;
      JkoEval next = evaluate(trial, prev, tau, F);
      if (next.J <= cur.J - 1e-4 * eta * cur.stationarity * cur.stationarity) {
        rho = std::move(trial);
        cur = std::move(next);
        accepted = true;
        eta *= 2.0;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    converged = cur.stationarity <= config.tol;
  }
  out.rho = CircularDistribution::from_grid(renormalize(rho));
  out.objective = cur.J;
  out.F = cur.F;
  out.w2 = cur.w2;
  out.stationarity = cur.stationarity;
  out.iterations = iter;
  out.converged = converged;
  return out;
}

JkoTrajectory jko_trajectory(const CircularDistribution& rho0, const JkoConfig& config,
                             const GridFunctional& F) {
  require_grid(rho0, "JKO initial state");
  if (!(config.tau > 0.0)) throw ParameterRangeError("JkoConfig.tau must be positive");
  if (config.K < 1) throw ParameterRangeError("JkoConfig.K must be >= 1");
  if (static_cast<int>(rho0.density().size()) != config.grid) {
    throw DimensionMismatch("initial state has " + std::to_string(rho0.density().size()) +
                            " cells but JkoConfig.grid is " + std::to_string(config.grid));
  }
  JkoTrajectory tr;
  tr.states.push_back(rho0);
  tr.F.push_back(F.value(rho0.density()));
  double sum_sq = 0.0;
  for (int k = 1; k <= config.K; ++k) {
    JkoStepResult step = jko_step(tr.states.back(), config.tau, F, config);
    tr.w2_increments.push_back(step.w2);
    tr.converged.push_back(step.converged);
    tr.F.push_back(step.F);
    tr.states.push_back(std::move(step.rho));
    sum_sq += step.w2 * step.w2;
  }
  const double budget = tr.F.front() - F.lower_bound();
  tr.summability_lhs = sum_sq / (2.0 * config.tau);
  tr.summability_rhs = budget;
  tr.summability_ok = tr.summability_lhs <= budget * (1.0 + 1e-12) + 1e-15;
  tr.holder_c = std::sqrt(2.0 * std::max(budget, 0.0));

  // Rows j on a stride against all later k; s in step j and t in step k give
  // t - s > (k - j - 1) tau.
  const int K = config.K;
  const int stride = std::max(1, K / 20);
  for (int j = 0; j <= K; j += stride) {
    for (int k = j + 1; k <= K; ++k) {
      const double d = wasserstein_circle(tr.states[j], tr.states[k], 2);
      const double bound =
          tr.holder_c * (std::sqrt(config.tau) + std::sqrt((k - j - 1) * config.tau));
      const double ratio = bound > 0.0 ? d / bound : (d > 0.0 ? INFINITY : 0.0);
      tr.holder_max_ratio = std::max(tr.holder_max_ratio, ratio);
    }
  }
  tr.holder_ok = tr.holder_max_ratio <= 1.0;
  return tr;
}

// Heat flow and EVI

CircularDistribution heat_flow(const CircularDistribution& rho, double t) {
  require_grid(rho, "heat_flow input");
  if (!(t >= 0.0)) throw ParameterRangeError("heat flow time must be >= 0");
  const RealDft dft(static_cast<int>(rho.density().size()));
  std::vector<double> a, b;
  dft.forward(rho.density(), a, b);
  for (std::size_t l = 0; l < a.size(); ++l) {
    const double f = std::exp(-static_cast<double>(l * l) * t);
    a[l] *= f;
    b[l] *= f;
  }
  std::vector<double> v = dft.inverse(a, b);
  for (double& x : v) {
    if (x < 0.0) {
      if (x < -1e-12) throw NumericalError("heat flow produced a negative cell value");
      x = 0.0;
    }
  }
  return CircularDistribution::from_grid(renormalize(std::move(v)));
}

double grid_entropy(const CircularDistribution& rho) {
  require_grid(rho, "entropy input");
  double s = 0.0;
  for (double v : rho.density()) {
    if (!(v > 0.0)) throw EntropyUndefined("entropy undefined: density has an empty cell");
    s += v * std::log(v);
  }
  return s / static_cast<double>(rho.density().size());
}

EviReport evi_check(const CircularDistribution& rho0, const CircularDistribution& nu,
                    const std::vector<double>& times, double h) {
  require_grid(rho0, "EVI start");
  require_grid(nu, "EVI reference");
  if (!(h > 0.0)) throw ParameterRangeError("EVI step h must be positive");
  const double E_nu = grid_entropy(nu);
  EviReport r;
  r.max_violation = -INFINITY;
  for (double t : times) {
    const CircularDistribution a = heat_flow(rho0, t);
    const CircularDistribution b = heat_flow(rho0, t + h);
    const double w0 = wasserstein_circle(a, nu, 2), w1 = wasserstein_circle(b, nu, 2);
    const double lhs = (w1 * w1 - w0 * w0) / (2.0 * h);
    const double rhs = E_nu - grid_entropy(a);
    r.times.push_back(t);
    r.lhs.push_back(lhs);
    r.rhs.push_back(rhs);
    r.max_violation = std::max(r.max_violation, lhs - rhs);
  }
  return r;
}

// Contraction

CircularDistribution convolve_grid(const ZonalCoefficients& V, const CircularDistribution& rho) {
  require_grid(rho, "convolution input");
  if (V.dim() != 2) throw DimensionMismatch("grid convolution needs an S^1 kernel");
  if (std::abs(V[0] - 1.0) > 1e-12) throw ParameterRangeError("kernel must have unit mass");
  const RealDft dft(static_cast<int>(rho.density().size()));
  std::vector<double> a, b;
  dft.forward(rho.density(), a, b);
  for (std::size_t l = 0; l < a.size(); ++l) {
    const double f = static_cast<int>(l) <= V.degree() ? V[static_cast<int>(l)] : 0.0;
    a[l] *= f;
    b[l] *= f;
  }
  std::vector<double> v = dft.inverse(a, b);
  for (double& x : v) {
    if (x < 0.0) {
      if (x < -1e-12) throw NumericalError("convolution produced a negative cell value");
      x = 0.0;
    }
  }
  return CircularDistribution::from_grid(renormalize(std::move(v)));
}

CircularDistribution random_von_mises_mixture(std::uint64_t seed, int N) {
  if (N < 1) throw ParameterRangeError("cell count must be >= 1");
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_real_distribution<double> centre(0.0, kTwoPi), kappa(1.0, 20.0), weight(0.2, 1.0);
  const int m = count(gen);
  std::vector<double> v(static_cast<std::size_t>(N), 0.0);
  for (int i = 0; i < m; ++i) {
    const double c = centre(gen), k = kappa(gen), w = weight(gen);
    for (int j = 0; j < N; ++j) v[j] += w * std::exp(k * (std::cos(kTwoPi * j / N - c) - 1.0));
  }
  return CircularDistribution::from_grid(renormalize(std::move(v)));
}

ContractionReport convolution_contraction_check(const ZonalCoefficients& V, int pairs, int p,
                                                std::uint64_t seed, int N) {
  if (pairs < 1) throw ParameterRangeError("pairs must be >= 1");
  if (p != 1 && p != 2) throw ParameterRangeError("p must be 1 or 2");
  auto ratio = [&](int i) {
    const std::uint64_t s = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i)));
    const CircularDistribution mu = random_von_mises_mixture(s, N);
    const CircularDistribution nu = random_von_mises_mixture(splitmix(s), N);
    const double d = wasserstein_circle(mu, nu, p);
    if (d < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    return wasserstein_circle(convolve_grid(V, mu), convolve_grid(V, nu), p) / d;
  };
  const int workers =
      std::max(1, std::min(pairs, static_cast<int>(std::thread::hardware_concurrency())));
  std::vector<std::future<std::vector<double>>> futures;
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      std::vector<double> r;
      for (int i = w; i < pairs; i += workers) r.push_back(ratio(i));
      return r;
    }));
  }
  std::vector<double> all(static_cast<std::size_t>(pairs));
  for (int w = 0; w < workers; ++w) {
    const std::vector<double> r = futures[w].get();
    for (std::size_t k = 0; k < r.size(); ++k) all[static_cast<std::size_t>(w) + k * workers] = r[k];
  }
  ContractionReport rep;
  rep.seed = seed;
  for (double r : all) {
    if (std::isnan(r)) continue;
    rep.ratios.push_back(r);
    rep.max_ratio = std::max(rep.max_ratio, r);
  }
  rep.samples = static_cast<int>(rep.ratios.size());
  return rep;
}

}  // namespace sphagg::ot
