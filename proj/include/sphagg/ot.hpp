#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sphagg/pde.hpp"
#include "sphagg/spectral.hpp"

namespace sphagg::ot {

using spectral::ZonalCoefficients;

/// Probability measure on S^1, either weighted atoms or a piecewise-constant
/// density on N uniform cells centred at 2 pi j / N.
class CircularDistribution {
 public:
  /// Angles are wrapped into [0, 2 pi); weights must be >= 0 and sum to 1 within 1e-12.
  static CircularDistribution from_atoms(std::vector<double> angles, std::vector<double> weights);
  /// Cell densities against d theta / 2 pi; their mean must be 1 within 1e-12.
  static CircularDistribution from_grid(std::vector<double> density);

  bool is_grid() const { return grid_; }
  /// Cell densities (grid) or empty.
  const std::vector<double>& density() const { return density_; }
  /// Sorted atom angles and weights (atoms) or empty.
  const std::vector<double>& angles() const { return angles_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Mass of [0, theta), theta in [0, 2 pi].
  double cdf(double theta) const;

  /// Support pieces in units s = theta / 2 pi; a == b for atoms.
  struct Piece {
    double a, b, mass;
  };
  const std::vector<Piece>& pieces() const { return pieces_; }
  /// cum[i] = mass of pieces before i; cum.back() == 1.
  const std::vector<double>& cumulative() const { return cum_; }

 private:
  void build_pieces();
  bool grid_ = false;
  std::vector<double> density_, angles_, weights_;
  std::vector<Piece> pieces_;
  std::vector<double> cum_;
};

struct TransportResult {
  double distance = 0.0;  // W_p in radians
  double shift = 0.0;     // optimal quantile shift alpha, in units of a full turn
  bool certificate_ok = false;
};

TransportResult wasserstein_circle_detail(const CircularDistribution& mu,
                                          const CircularDistribution& nu, int p);
double wasserstein_circle(const CircularDistribution& mu, const CircularDistribution& nu, int p);

/// Cell averages of a spectral S^1 density on N uniform cells.
CircularDistribution cell_average(const pde::DensityState& rho, int N);

/// Energy functional on grid densities, with its first variation per cell.
class GridFunctional {
 public:
  virtual ~GridFunctional() = default;
  virtual double value(std::span<const double> density) const = 0;
  /// dF/dm_j, with m_j = density_j / N the cell masses.
  virtual std::vector<double> gradient(std::span<const double> density) const = 0;
  /// theta-derivative of the first variation, for the warm start.
  virtual std::function<double(double)> slope(std::span<const double> density) const = 0;
  /// A lower bound on F over probability densities.
  virtual double lower_bound() const = 0;
};

/// 1/2 int int (W + V) rho rho on S^1, using the degree-L Fourier coefficients of
/// the piecewise-constant density.
class InteractionEnergy : public GridFunctional {
 public:
  /// Lower bound -1/2 ||W||_inf (the V part is nonnegative for admissible V).
  InteractionEnergy(int cells, const ZonalCoefficients& W, std::optional<ZonalCoefficients> V);

  double value(std::span<const double> density) const override;
  std::vector<double> gradient(std::span<const double> density) const override;
  std::function<double(double)> slope(std::span<const double> density) const override;
  double lower_bound() const override { return lower_; }
  int degree() const { return L_; }

 private:
  /// Coefficients (a_0..a_L, b_1..b_L) in the 1, 2cos, 2sin basis.
  Eigen::VectorXd coefficients(std::span<const double> density) const;
  int N_, L_;
  ZonalCoefficients W_;
  std::optional<ZonalCoefficients> V_;
  pde::DiscretizationPtr disc_;
  Eigen::VectorXd mult_;
  Eigen::MatrixXd avg_;  // modes x cells: cell averages of the basis
  double lower_ = 0.0;
};

struct JkoConfig {
  double tau = 1e-3;
  int K = 100;
  int grid = 128;
  double tol = 1e-6;  // stationarity tolerance of the inner solve
  int max_iter = 400;
};

struct JkoStepResult {
  CircularDistribution rho;
  double objective = 0.0;  // F(rho) + W_2^2(rho, prev) / (2 tau)
  double F = 0.0;
  double w2 = 0.0;
  double stationarity = 0.0;
  int iterations = 0;
  bool converged = false;
};

JkoStepResult jko_step(const CircularDistribution& prev, double tau, const GridFunctional& F,
                       const JkoConfig& config);

struct JkoTrajectory {
  std::vector<CircularDistribution> states;  // rho_{tau,0..K}
  std::vector<double> F;
  std::vector<double> w2_increments;         // W_2(rho_k, rho_{k-1}), k = 1..K
  std::vector<bool> converged;
  double summability_lhs = 0.0;  // sum W_2^2 / (2 tau)
  double summability_rhs = 0.0;  // F(rho_0) - lower bound
  bool summability_ok = false;
  double holder_c = 0.0;
  double holder_max_ratio = 0.0;  // max W_2(rho_j, rho_k) / (c (sqrt(tau) + sqrt((k - j) tau)))
  bool holder_ok = false;
};

JkoTrajectory jko_trajectory(const CircularDistribution& rho0, const JkoConfig& config,
                             const GridFunctional& F);

struct EviReport {
  std::vector<double> times, lhs, rhs;
  double max_violation = 0.0;
};

/// Heat flow of rho0 (grid) against nu (grid, positive), n = 2.
EviReport evi_check(const CircularDistribution& rho0, const CircularDistribution& nu,
                    const std::vector<double>& times, double h);

/// Heat flow S^t of a grid density, returned as cell averages on the same grid.
CircularDistribution heat_flow(const CircularDistribution& rho, double t);

/// Entropy of a piecewise-constant density; throws EntropyUndefined on empty cells.
double grid_entropy(const CircularDistribution& rho);

/// V * rho for a grid density, as cell averages on the same grid.
CircularDistribution convolve_grid(const ZonalCoefficients& V, const CircularDistribution& rho);

/// Seeded mixture of 1-4 von Mises bumps sampled at N cell centres.
CircularDistribution random_von_mises_mixture(std::uint64_t seed, int N);

struct ContractionReport {
  double max_ratio = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> ratios;
};

ContractionReport convolution_contraction_check(const ZonalCoefficients& V, int pairs, int p,
                                                std::uint64_t seed, int N = 256);

}  // namespace sphagg::ot
