#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sphagg/error.hpp"
#include "sphagg/spectral.hpp"

namespace sphagg::pde {

using spectral::ZonalCoefficients;

/// Modal basis and theta grid. For n >= 3 the modes are the zonal harmonics
/// Z_0..Z_L on Gauss nodes; for n = 2 they are 1, 2cos(l theta), 2sin(l theta)
/// on a uniform grid, so that the cosine part coincides with the Z_l basis.
class Discretization {
 public:
  /// M = 0 picks 2L + 8 (n >= 3) or max(4L, 2L + 8) (n = 2).
  static std::shared_ptr<const Discretization> create(int n, int L, int M = 0);

  int dim() const { return n_; }
  int degree() const { return L_; }
  int nodes() const { return static_cast<int>(theta_.size()); }
  int modes() const { return static_cast<int>(degree_.size()); }
  int mode_degree(int k) const { return degree_[static_cast<std::size_t>(k)]; }
  bool mode_is_sine(int k) const { return k > L_; }

  const std::vector<double>& theta() const { return theta_; }
  const Eigen::VectorXd& weights() const { return w_; }
  const Eigen::MatrixXd& basis() const { return B_; }    // modes x nodes
  const Eigen::MatrixXd& dbasis() const { return dB_; }  // d/dtheta, modes x nodes
  const Eigen::VectorXd& norms() const { return N_; }    // int B_k^2 dsigma

  /// Per-mode multiplier of a zonal kernel (degree must be >= L).
  Eigen::VectorXd multiplier(const ZonalCoefficients& K) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& c) const;
  Eigen::VectorXd project(const Eigen::VectorXd& values) const;
  /// Pointwise value of the modal expansion at polar angle theta.
  double evaluate(const Eigen::VectorXd& c, double theta) const;

 private:
  Discretization() = default;
  int n_ = 0, L_ = 0;
  std::vector<int> degree_;
  std::vector<double> theta_;
  Eigen::VectorXd w_, N_;
  Eigen::MatrixXd B_, dB_;
};

using DiscretizationPtr = std::shared_ptr<const Discretization>;

/// Probability density (against sigma) in modal form with cached grid values.
class DensityState {
 public:
  /// Throws ParameterRangeError unless the mass is 1 within 1e-10.
  DensityState(DiscretizationPtr disc, Eigen::VectorXd coeffs, double time = 0.0);

  /// Projects rho(theta) and rescales to unit mass.
  static DensityState from_function(DiscretizationPtr disc, const std::function<double(double)>& rho,
                                    double time = 0.0);
  static DensityState uniform(DiscretizationPtr disc);

  const Discretization& disc() const { return *disc_; }
  const DiscretizationPtr& disc_ptr() const { return disc_; }
  const Eigen::VectorXd& coeffs() const { return c_; }
  const Eigen::VectorXd& values() const { return v_; }
  double time() const { return t_; }
  double mass() const { return c_[0]; }
  double min_value() const { return v_.minCoeff(); }
  /// The zonal (cosine) part as Z_l coefficients.
  ZonalCoefficients zonal() const;

 private:
  DiscretizationPtr disc_;
  Eigen::VectorXd c_, v_;
  double t_ = 0.0;
};

struct EnergyValue {
  double F_double = 0.0;  // spectral double integral
  double F_sqrt = 0.0;    // grid quadrature of (sqrt(V) * rho)^2 plus the W term
};

/// V = nullopt drops the V term.
EnergyValue energy(const DensityState& rho, const ZonalCoefficients& W,
                   const std::optional<ZonalCoefficients>& V);

/// int rho log rho dsigma; throws EntropyUndefined if any grid value is <= 0.
double entropy(const DensityState& rho);

/// As entropy(), with grid values clipped to 1e-14; sets *clipped when clipping happened.
double entropy_clipped(const DensityState& rho, bool* clipped);

/// Weak Galerkin time derivative of the modal coefficients with xi = (W + V) * rho.
Eigen::VectorXd rhs_aggregation(const DensityState& rho, const ZonalCoefficients& W,
                                const ZonalCoefficients& V);

/// Same with xi = W * rho + rho.
Eigen::VectorXd rhs_ade(const DensityState& rho, const ZonalCoefficients& W);

enum class Scheme { rk4, heun };

struct SolverConfig {
  int L = 32;
  int M = 0;           // 0: discretization default
  double dt = 0.0;     // 0: default_time_step
  double T = 1.0;
  Scheme scheme = Scheme::rk4;
  bool clip_negative = true;  // entropy diagnostics only; stepping never clips
  int diagnostics_every = 10;
  int max_halvings = 6;

  /// Throws ParameterRangeError naming the offending field.
  void validate() const;
};

/// 0.25 / (|lambda_L| max(||rho||_inf, 2)).
double default_time_step(const DensityState& rho);

struct EnergyReport {
  std::vector<double> time, F_double, F_sqrt, entropy, mass, min_density, conv_l2;
  bool entropy_clipped = false;
};

struct Trajectory {
  std::vector<DensityState> states;
};

struct SolveResult {
  Trajectory trajectory;
  EnergyReport energy;
  double dt = 0.0;    // base step before any halving
  int halvings = 0;
};

class InstabilityError : public NumericalError {
 public:
  InstabilityError(const std::string& what, Trajectory partial, double last_stable_time)
      : NumericalError(what), partial_(std::move(partial)), last_stable_(last_stable_time) {}
  const Trajectory& partial() const { return partial_; }
  double last_stable_time() const { return last_stable_; }

 private:
  Trajectory partial_;
  double last_stable_;
};

/// Solves (AE) when V is given and (ADE) when V is nullopt. Samples are taken
/// at multiples of diagnostics_every * dt and at T.
SolveResult solve(const DensityState& initial, const ZonalCoefficients& W,
                  const std::optional<ZonalCoefficients>& V, const SolverConfig& config);

/// int |sqrt(V) * (rho phi') - (sqrt(V) * rho) phi'| dsigma on S^1.
/// dphi is the theta-derivative of the test function.
double residual_norm(const DensityState& rho, const ZonalCoefficients& V,
                     const std::function<double(double)>& dphi);

struct ConvergenceRow {
  double eps = 0.0;
  double error = 0.0;           // L^2(0,T;L^2) distance of sqrt(V) * rho^eps to rho^ADE
  double sup_gap = 0.0;         // max over samples of the L^2 distance
  double residual_mean = 0.0;   // time average of int |r|
  double residual_final = 0.0;  // int |r| at T
  bool ok = false;
  std::string message;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  bool ade_ok = false;
  std::string ade_message;
};

using KernelFamily = std::function<ZonalCoefficients(double eps, int L)>;

/// All solves share one step size and sample grid. The residual (n = 2 only)
/// uses phi = cos(theta). Up to `jobs` solves run concurrently.
ConvergenceTable convergence_study(const std::vector<double>& eps_list, const ZonalCoefficients& W,
                                   const KernelFamily& family, const DensityState& initial,
                                   SolverConfig config, int jobs = 1);

}  // namespace sphagg::pde
