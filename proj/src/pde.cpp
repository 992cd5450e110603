#include "sphagg/pde.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>

namespace sphagg::pde {

namespace {

constexpr double kMassTol = 1e-10;
constexpr double kBlowUp = 1e6;

Eigen::VectorXd weak_rhs(const Discretization& d, const Eigen::VectorXd& c,
                         const Eigen::VectorXd& mult, bool diffusion) {
  Eigen::VectorXd xi = mult.cwiseProduct(c);
  if (diffusion) xi += c;
  const Eigen::VectorXd rho = d.basis().transpose() * c;
  const Eigen::VectorXd dxi = d.dbasis().transpose() * xi;
  const Eigen::VectorXd flux = d.weights().cwiseProduct(rho).cwiseProduct(dxi);
  return -(d.dbasis() * flux).cwiseQuotient(d.norms());
}

bool stable(const Eigen::VectorXd& c) {
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (!std::isfinite(c[i]) || std::abs(c[i]) > kBlowUp) return false;
  }
  return true;
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
  return s;
}

}  // namespace

std::shared_ptr<const Discretization> Discretization::create(int n, int L, int M) {
  if (n < 2) throw ParameterRangeError("n must be >= 2");
  if (L < 0 || L > spectral::kMaxDegree) throw ParameterRangeError("L out of range");
  if (M == 0) M = n == 2 ? std::max(4 * L, 2 * L + 8) : 2 * L + 8;
  if (M < 2 * L + 8) {
    throw ParameterRangeError("M = " + std::to_string(M) + " is below 2L + 8 = " +
                              std::to_string(2 * L + 8));
  }
  std::shared_ptr<Discretization> d(new Discretization());
  d->n_ = n;
  d->L_ = L;
  const int K = n == 2 ? 2 * L + 1 : L + 1;
  d->degree_.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) d->degree_[k] = k <= L ? k : k - L;
  d->theta_.resize(static_cast<std::size_t>(M));
  d->w_.resize(M);
  d->N_.resize(K);
  d->B_.resize(K, M);
  d->dB_.resize(K, M);
  if (n == 2) {
    for (int j = 0; j < M; ++j) {
      const double th = 2.0 * std::numbers::pi * j / M;
      d->theta_[j] = th;
      d->w_[j] = 1.0 / M;
      for (int l = 0; l <= L; ++l) {
        d->B_(l, j) = l == 0 ? 1.0 : 2.0 * std::cos(l * th);
        d->dB_(l, j) = -2.0 * l * std::sin(l * th);
      }
      for (int l = 1; l <= L; ++l) {
        d->B_(L + l, j) = 2.0 * std::sin(l * th);
        d->dB_(L + l, j) = 2.0 * l * std::cos(l * th);
      }
    }
  } else {
    const spectral::QuadratureGrid q = spectral::build_quadrature(n, M);
    for (int i = 0; i < M; ++i) {
      const double t = q.nodes[i];
      d->theta_[i] = std::acos(t);
      d->w_[i] = q.weights[i];
      const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
      const std::vector<double> z = spectral::zonal_harmonic_table(n, L, t);
      const std::vector<double> dz = spectral::zonal_harmonic_derivative_table(n, L, t);
      for (int l = 0; l <= L; ++l) {
        d->B_(l, i) = z[l];
        d->dB_(l, i) = -s * dz[l];
      }
    }
  }
  for (int k = 0; k < K; ++k) d->N_[k] = spectral::zonal_harmonic_at_one(n, d->degree_[k]);
  return d;
}

Eigen::VectorXd Discretization::multiplier(const ZonalCoefficients& K) const {
  if (K.dim() != n_) throw DimensionMismatch("kernel dimension does not match the discretization");
  if (K.degree() < L_) {
    throw ParameterRangeError("kernel degree " + std::to_string(K.degree()) + " is below L = " +
                              std::to_string(L_));
  }
  Eigen::VectorXd m(modes());
  for (int k = 0; k < modes(); ++k) m[k] = K[degree_[k]];
  return m;
}

Eigen::VectorXd Discretization::synthesize(const Eigen::VectorXd& c) const {
  if (c.size() != modes()) throw DimensionMismatch("coefficient vector has the wrong length");
  return B_.transpose() * c;
}

Eigen::VectorXd Discretization::project(const Eigen::VectorXd& values) const {
  if (values.size() != nodes()) throw DimensionMismatch("value vector has the wrong length");
  return (B_ * w_.cwiseProduct(values)).cwiseQuotient(N_);
}

double Discretization::evaluate(const Eigen::VectorXd& c, double theta) const {
  if (c.size() != modes()) throw DimensionMismatch("coefficient vector has the wrong length");
  if (n_ == 2) {
    double s = c[0];
    for (int l = 1; l <= L_; ++l) s += 2.0 * (c[l] * std::cos(l * theta) + c[L_ + l] * std::sin(l * theta));
    return s;
  }
  const std::vector<double> z = spectral::zonal_harmonic_table(n_, L_, std::cos(theta));
  double s = 0.0;
  for (int l = 0; l <= L_; ++l) s += c[l] * z[l];
  return s;
}

DensityState::DensityState(DiscretizationPtr disc, Eigen::VectorXd coeffs, double time)
    : disc_(std::move(disc)), c_(std::move(coeffs)), t_(time) {
  if (!disc_) throw ParameterRangeError("density state needs a discretization");
  if (c_.size() != disc_->modes()) throw DimensionMismatch("coefficient vector has the wrong length");
  if (!std::isfinite(c_.sum())) throw NonFiniteValue("density coefficients are not finite");
  if (std::abs(c_[0] - 1.0) > kMassTol) {
    throw ParameterRangeError("density mass is " + std::to_string(c_[0]) + ", expected 1");
  }
  v_ = disc_->synthesize(c_);
}

DensityState DensityState::from_function(DiscretizationPtr disc,
                                         const std::function<double(double)>& rho, double time) {
  Eigen::VectorXd v(disc->nodes());
  for (int i = 0; i < disc->nodes(); ++i) v[i] = rho(disc->theta()[i]);
  Eigen::VectorXd c = disc->project(v);
  if (!(c[0] > 0.0)) throw ParameterRangeError("initial density has nonpositive mass");
  c /= c[0];
  c[0] = 1.0;
  return DensityState(std::move(disc), std::move(c), time);
}

DensityState DensityState::uniform(DiscretizationPtr disc) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(disc->modes());
  c[0] = 1.0;
  return DensityState(std::move(disc), std::move(c));
}

ZonalCoefficients DensityState::zonal() const {
  const int L = disc_->degree();
  return ZonalCoefficients(disc_->dim(), std::vector<double>(c_.data(), c_.data() + L + 1));
}

EnergyValue energy(const DensityState& rho, const ZonalCoefficients& W,
                   const std::optional<ZonalCoefficients>& V) {
  const Discretization& d = rho.disc();
  const Eigen::VectorXd& c = rho.coeffs();
  const Eigen::VectorXd wm = d.multiplier(W);
  EnergyValue e;
  const Eigen::VectorXd c2n = c.cwiseProduct(c).cwiseProduct(d.norms());
  e.F_double = 0.5 * wm.dot(c2n);
  const Eigen::VectorXd wr = d.synthesize(wm.cwiseProduct(c));
  e.F_sqrt = 0.5 * d.weights().dot(rho.values().cwiseProduct(wr));
  if (V) {
    const Eigen::VectorXd vm = d.multiplier(*V);
    e.F_double += 0.5 * vm.dot(c2n);
    const ZonalCoefficients sv = spectral::sqrt_kernel(*V);
    const Eigen::VectorXd g = d.synthesize(d.multiplier(sv).cwiseProduct(c));
    e.F_sqrt += 0.5 * d.weights().dot(g.cwiseProduct(g));
  }
  return e;
}

double entropy(const DensityState& rho) {
  if (!(rho.min_value() > 0.0)) {
    throw EntropyUndefined("entropy needs a positive density; minimum grid value is " +
                           std::to_string(rho.min_value()));
  }
  const Eigen::VectorXd& v = rho.values();
  return rho.disc().weights().dot(v.cwiseProduct(v.array().log().matrix()));
}

double entropy_clipped(const DensityState& rho, bool* clipped) {
  const Eigen::VectorXd& v = rho.values();
  double s = 0.0;
  bool any = false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double x = v[i];
    if (x < 1e-14) {
      x = 1e-14;
      any = true;
    }
    s += rho.disc().weights()[i] * x * std::log(x);
  }
  if (clipped) *clipped = any;
  return s;
}

Eigen::VectorXd rhs_aggregation(const DensityState& rho, const ZonalCoefficients& W,
                                const ZonalCoefficients& V) {
  const Discretization& d = rho.disc();
  const Eigen::VectorXd r = weak_rhs(d, rho.coeffs(), d.multiplier(W) + d.multiplier(V), false);
  if (!r.allFinite()) throw NonFiniteValue("aggregation flux is not finite");
  return r;
}

Eigen::VectorXd rhs_ade(const DensityState& rho, const ZonalCoefficients& W) {
  const Discretization& d = rho.disc();
  const Eigen::VectorXd r = weak_rhs(d, rho.coeffs(), d.multiplier(W), true);
  if (!r.allFinite()) throw NonFiniteValue("aggregation-diffusion flux is not finite");
  return r;
}

void SolverConfig::validate() const {
  if (L < 0 || L > spectral::kMaxDegree) throw ParameterRangeError("L: must lie in [0, 256]");
  if (M != 0 && M < 2 * L + 8) throw ParameterRangeError("M: must be 0 (auto) or >= 2L + 8");
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw ParameterRangeError("dt: must be positive (or 0 for auto)");
  if (!(T > 0.0) || !std::isfinite(T)) throw ParameterRangeError("T: must be positive");
  if (diagnostics_every < 1) throw ParameterRangeError("diagnostics_every: must be >= 1");
  if (max_halvings < 0) throw ParameterRangeError("max_halvings: must be >= 0");
}

double default_time_step(const DensityState& rho) {
  const Discretization& d = rho.disc();
  const double lam = std::max(1.0, -spectral::laplacian_eigenvalue(d.dim(), d.degree()));
  const double sup = rho.values().cwiseAbs().maxCoeff();
  return 0.25 / (lam * std::max(sup, 2.0));
}

SolveResult solve(const DensityState& initial, const ZonalCoefficients& W,
                  const std::optional<ZonalCoefficients>& V, const SolverConfig& config) {
  config.validate();
  const Discretization& d = initial.disc();
  if (config.L != d.degree()) {
    throw DimensionMismatch("config L = " + std::to_string(config.L) +
                            " does not match the initial state (L = " + std::to_string(d.degree()) + ")");
  }
  const bool ade = !V.has_value();
  const Eigen::VectorXd mult = ade ? d.multiplier(W) : Eigen::VectorXd(d.multiplier(W) + d.multiplier(*V));
  const ZonalCoefficients Vdiag =
      ade ? ZonalCoefficients(d.dim(), std::vector<double>(static_cast<std::size_t>(d.degree()) + 1, 1.0))
          : *V;

  SolveResult out;
  out.dt = config.dt > 0.0 ? config.dt : default_time_step(initial);
  const double sample_dt = out.dt * config.diagnostics_every;
  std::vector<double> sample_times{initial.time()};
  const double t_end = initial.time() + config.T;
  for (long k = 1;; ++k) {
    const double t = initial.time() + k * sample_dt;
    if (t >= t_end - 1e-12 * config.T) break;
    sample_times.push_back(t);
  }
  sample_times.push_back(t_end);

  const Eigen::VectorXd vmult = d.multiplier(Vdiag);
  auto record = [&](const DensityState& s) {
    const EnergyValue e = energy(s, W, Vdiag);
    EnergyReport& r = out.energy;
    r.time.push_back(s.time());
    r.F_double.push_back(e.F_double);
    r.F_sqrt.push_back(e.F_sqrt);
    bool clipped = false;
    double ent;
    if (config.clip_negative) {
      ent = entropy_clipped(s, &clipped);
    } else {
      ent = s.min_value() > 0.0 ? entropy(s) : NAN;
      clipped = !(s.min_value() > 0.0);
    }
    r.entropy_clipped = r.entropy_clipped || clipped;
    r.entropy.push_back(ent);
    r.mass.push_back(s.mass());
    r.min_density.push_back(s.min_value());
    r.conv_l2.push_back(vmult.dot(s.coeffs().cwiseProduct(s.coeffs()).cwiseProduct(d.norms())));
    out.trajectory.states.push_back(s);
  };

  auto f = [&](const Eigen::VectorXd& c) { return weak_rhs(d, c, mult, ade); };
  record(initial);
  Eigen::VectorXd c = initial.coeffs();
  double h = out.dt;
  for (std::size_t k = 1; k < sample_times.size(); ++k) {
    const double t0 = sample_times[k - 1], t1 = sample_times[k];
    for (;;) {
      const long steps = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / h - 1e-9)));
      const double hh = (t1 - t0) / steps;
      Eigen::VectorXd y = c;
      bool ok = true;
      for (long s = 0; s < steps && ok; ++s) {
        if (config.scheme == Scheme::rk4) {
          const Eigen::VectorXd k1 = f(y);
          const Eigen::VectorXd k2 = f(y + 0.5 * hh * k1);
          const Eigen::VectorXd k3 = f(y + 0.5 * hh * k2);
          const Eigen::VectorXd k4 = f(y + hh * k3);
          y += hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } else {
          const Eigen::VectorXd k1 = f(y);
          const Eigen::VectorXd k2 = f(y + hh * k1);
          y += 0.5 * hh * (k1 + k2);
        }
        ok = stable(y);
      }
      if (ok) {
        c = y;
        break;
      }
      if (out.halvings >= config.max_halvings) {
        throw InstabilityError("solver unstable after " + std::to_string(out.halvings) +
                                   " step halvings near t = " + std::to_string(t0),
                               out.trajectory, t0);
      }
      ++out.halvings;
      h *= 0.5;
    }
    record(DensityState(initial.disc_ptr(), c, t1));
  }
  return out;
}

double residual_norm(const DensityState& rho, const ZonalCoefficients& V,
                     const std::function<double(double)>& dphi) {
  const Discretization& d = rho.disc();
  if (d.dim() != 2) throw ParameterRangeError("residual_norm supports n = 2 only");
  if (V.dim() != 2) throw DimensionMismatch("residual kernel must have n = 2");
  const int M = d.nodes();
  const int Lr = std::min(V.degree(), M / 2 - 1);
  const ZonalCoefficients sv = spectral::sqrt_kernel(V);
  const std::vector<double>& th = d.theta();
  std::vector<double> dp(static_cast<std::size_t>(M)), g(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) {
    dp[j] = dphi(th[j]);
    g[j] = rho.values()[j] * dp[j];
  }
  // sqrt(V) * (rho phi') through its Fourier coefficients up to Lr.
  std::vector<double> conv(static_cast<std::size_t>(M), 0.0);
  for (int l = 0; l <= Lr; ++l) {
    double a = 0.0, b = 0.0;
    for (int j = 0; j < M; ++j) {
      a += g[j] * std::cos(l * th[j]);
      b += g[j] * std::sin(l * th[j]);
    }
    a *= sv[l] / M;
    b *= sv[l] / M;
    for (int j = 0; j < M; ++j) {
      conv[j] += l == 0 ? a : 2.0 * (a * std::cos(l * th[j]) + b * std::sin(l * th[j]));
    }
  }
  const Eigen::VectorXd srho = d.synthesize(d.multiplier(sv).cwiseProduct(rho.coeffs()));
  double s = 0.0;
  for (int j = 0; j < M; ++j) s += std::abs(conv[j] - srho[j] * dp[j]);
  return s / M;
}

ConvergenceTable convergence_study(const std::vector<double>& eps_list, const ZonalCoefficients& W,
                                   const KernelFamily& family, const DensityState& initial,
                                   SolverConfig config, int jobs) {
  if (eps_list.empty()) throw ParameterRangeError("eps list is empty");
  for (double e : eps_list) {
    if (!(e > 0.0)) throw ParameterRangeError("eps values must be positive");
  }
  if (jobs < 1) throw ParameterRangeError("jobs must be >= 1");
  const Discretization& d = initial.disc();
  if (config.dt <= 0.0) config.dt = default_time_step(initial);
  const bool circle = d.dim() == 2;
  auto dphi = [](double th) { return -std::sin(th); };

  struct Run {
    std::optional<SolveResult> result;
    std::string error;
  };
  auto run = [&](std::optional<ZonalCoefficients> V) {
    Run r;
    try {
      r.result = solve(initial, W, V, config);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };

  // Job 0 is the ADE reference, job i the AE solve for eps_list[i - 1].
  const std::size_t total = eps_list.size() + 1;
  std::vector<Run> runs(total);
  for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<Run>> batch;
    const std::size_t stop = std::min(total, start + static_cast<std::size_t>(jobs));
    for (std::size_t i = start; i < stop; ++i) {
      std::optional<ZonalCoefficients> V;
      if (i > 0) V = family(eps_list[i - 1], d.degree());
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run, V));
    }
    for (std::size_t i = start; i < stop; ++i) runs[i] = batch[i - start].get();
  }

  ConvergenceTable table;
  table.ade_ok = runs[0].result.has_value();
  table.ade_message = runs[0].error;
  for (std::size_t i = 1; i < total; ++i) {
    ConvergenceRow row;
    row.eps = eps_list[i - 1];
    if (!table.ade_ok) {
      row.message = "reference ADE solve failed: " + table.ade_message;
    } else if (!runs[i].result) {
      row.message = runs[i].error;
    } else {
      const auto& ae = runs[i].result->trajectory.states;
      const auto& ref = runs[0].result->trajectory.states;
      const ZonalCoefficients V = family(row.eps, d.degree());
      const Eigen::VectorXd sv = d.multiplier(spectral::sqrt_kernel(V));
      const ZonalCoefficients Vr = circle ? family(row.eps, d.degree() + 8) : V;
      std::vector<double> t, gap2, res;
      for (std::size_t s = 0; s < ae.size() && s < ref.size(); ++s) {
        const Eigen::VectorXd diff = sv.cwiseProduct(ae[s].coeffs()) - ref[s].coeffs();
        t.push_back(ae[s].time());
        gap2.push_back(diff.cwiseProduct(diff).dot(d.norms()));
        if (circle) res.push_back(residual_norm(ae[s], Vr, dphi));
      }
      row.error = std::sqrt(trapezoid(t, gap2));
      row.sup_gap = std::sqrt(*std::max_element(gap2.begin(), gap2.end()));
      if (circle) {
        row.residual_mean = trapezoid(t, res) / (t.back() - t.front());
        row.residual_final = res.back();
      } else {
        row.residual_mean = row.residual_final = NAN;
      }
      row.ok = true;
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace sphagg::pde
