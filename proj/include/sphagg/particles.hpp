#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sphagg/error.hpp"
#include "sphagg/geom.hpp"
#include "sphagg/spectral.hpp"

namespace sphagg::particles {

using geom::SpherePoint;
using geom::TangentVector;

/// d tokens on S^{n-1}, stored as the columns of an n x d matrix.
class ParticleEnsemble {
 public:
  explicit ParticleEnsemble(const std::vector<SpherePoint>& points);
  /// Columns are normalized; zero columns are rejected.
  explicit ParticleEnsemble(Eigen::MatrixXd columns);

  /// Uniform on the sphere, reflected into the hemisphere x_n >= 0.
  static ParticleEnsemble hemisphere(int n, int d, std::uint64_t seed);
  static ParticleEnsemble uniform(int n, int d, std::uint64_t seed);

  int dim() const { return static_cast<int>(X_.rows()); }
  int size() const { return static_cast<int>(X_.cols()); }
  const Eigen::MatrixXd& matrix() const { return X_; }
  SpherePoint point(int i) const;
  std::vector<SpherePoint> points() const;

 private:
  Eigen::MatrixXd X_;
};

struct Head {
  double alpha = 1.0;  // weight; negative for repulsion
  double beta = 1.0;   // inverse temperature, > 0
};

struct HeadConfig {
  std::vector<Head> heads;

  /// Throws ParameterRangeError unless every beta is positive and finite.
  void validate() const;

  static HeadConfig attraction(double beta = 1.0, double alpha = 1.0);
  /// Attractive head (1, beta) plus a repulsive head (-alpha_eps, 1/eps), where
  /// alpha_eps normalizes exp(<x, y>/eps) to unit mass on S^{n-1}.
  static HeadConfig attraction_repulsion(int n, double beta, double eps);
};

/// v_i = P_{x_i}((1/d) sum_m alpha_m sum_j exp(beta_m <x_i, x_j>) x_j), as columns.
Eigen::MatrixXd multihead_velocity(const ParticleEnsemble& X, const HeadConfig& heads);

std::vector<TangentVector> multihead_rhs(const ParticleEnsemble& X, const HeadConfig& heads);

struct ClusteringMetrics {
  double min_pair_inner = 1.0;
  double max_pair_inner = 1.0;
  std::vector<double> head_energy;  // (1/2d^2) sum_ij U_m(<x_i, x_j>), U_m = -(alpha_m/beta_m) e^{beta_m t}
  double energy = 0.0;              // sum over heads
};

/// Requires d >= 2.
ClusteringMetrics clustering_metrics(const ParticleEnsemble& X, const HeadConfig& heads);

struct SimulationConfig {
  double T = 50.0;
  double dt = 0.01;
  bool renormalize = true;
  int record_every = 100;  // steps between stored snapshots

  void validate() const;
};

struct ParticleTrajectory {
  std::vector<double> times;
  std::vector<ParticleEnsemble> snapshots;
  std::vector<ClusteringMetrics> metrics;
  /// max over all steps of (E_{k+1} - E_k) / (1 + |E_k|).
  double max_energy_increase = 0.0;
  /// max over all steps of | |x_i| - 1 |.
  double max_norm_drift = 0.0;
};

class InstabilityError : public NumericalError {
 public:
  InstabilityError(const std::string& what, double last_stable_time)
      : NumericalError(what), last_stable_(last_stable_time) {}
  double last_stable_time() const { return last_stable_; }

 private:
  double last_stable_;
};

/// RK4 in ambient coordinates with optional renormalization after each step.
ParticleTrajectory simulate(const ParticleEnsemble& X0, const HeadConfig& heads,
                            const SimulationConfig& config);

struct SphereQuadrature {
  std::vector<SpherePoint> points;
  std::vector<double> weights;  // sum to 1
};

/// Product rule on S^1 (m points) or S^2 (m Gauss-Legendre latitudes x 2m longitudes).
SphereQuadrature sphere_quadrature(int n, int m);

struct SmoothedDensity {
  std::vector<double> values;
  bool positivity_ok = true;  // sqrt(V) reconstructed nonnegative
};

/// (1/d) sum_j sqrt(V)(<y, x_j>) at each grid point y.
SmoothedDensity smoothed_density(const ParticleEnsemble& X, const spectral::ZonalCoefficients& V,
                                 const std::vector<SpherePoint>& grid);

}  // namespace sphagg::particles
