#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sphagg::geom {

// Antipodal tolerance on 1 + <x, y>; below it log/transport refuse to work.
inline constexpr double kCutLocusTol = 1e-8;

/// Unit vector in R^n, n >= 2. Renormalized on construction.
class SpherePoint {
 public:
  explicit SpherePoint(std::vector<double> coords);

  /// Standard basis vector e_{axis} in R^n.
  static SpherePoint basis(std::size_t n, std::size_t axis);

  std::size_t dim() const { return coords_.size(); }
  std::span<const double> coords() const { return coords_; }
  double operator[](std::size_t i) const { return coords_[i]; }

 private:
  std::vector<double> coords_;
};

/// A vector in the tangent plane at `base`.
class TangentVector {
 public:
  /// Projects `vec` onto T_base so the orthogonality invariant holds exactly.
  TangentVector(SpherePoint base, std::vector<double> vec);

  static TangentVector zero(const SpherePoint& base);

  const SpherePoint& base() const { return base_; }
  std::span<const double> vec() const { return vec_; }
  double norm() const;

 private:
  SpherePoint base_;
  std::vector<double> vec_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Great-circle distance in [0, pi].
double geodesic_distance(const SpherePoint& x, const SpherePoint& y);

SpherePoint exp_map(const SpherePoint& x, const TangentVector& v);

/// Inverse of exp_map; throws CutLocusError near the antipode.
TangentVector log_map(const SpherePoint& x, const SpherePoint& y);

/// w - <w, x> x.
TangentVector tangent_project(const SpherePoint& x, std::span<const double> w);

/// Transports v in T_x to T_y along the minimizing geodesic.
TangentVector parallel_transport(const SpherePoint& x, const SpherePoint& y,
                                 const TangentVector& v);

/// dist(exp_x(t v), exp_y(t P v)) / dist(x, y), with P the transport x -> y.
double geodesic_divergence_ratio(const SpherePoint& x, const SpherePoint& y,
                                 const TangentVector& v, double t);

struct DivergenceCheck {
  double max_ratio = 0.0;
  /// max |ratio - 1| over the same samples with v along log_x y.
  double max_parallel_deviation = 0.0;
  long samples = 0;
  std::uint64_t seed = 0;
};

/// Monte-Carlo sup of the divergence ratio on S^{n-1}: x, y uniform, v a
/// uniform unit tangent at x, t uniform in [0, 2 pi). Near-antipodal pairs
/// are redrawn.
DivergenceCheck geodesic_divergence_check(int n, long samples, std::uint64_t seed);

}  // namespace sphagg::geom
