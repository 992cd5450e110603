#include "sphagg/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "sphagg/error.hpp"

namespace sphagg::geom {

namespace {

void require_same_dim(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionMismatch("dimension mismatch: " + std::to_string(a) + " vs " +
                            std::to_string(b));
  }
}

// Results of exact-arithmetic formulas are unit vectors up to round-off.
// Anything else means a formula was applied outside its domain.
SpherePoint from_arithmetic(std::vector<double> v) {
  const double r = norm(v);
  if (std::abs(r - 1.0) > 1e-6) {
    throw std::logic_error("sphere point drifted off the sphere by " + std::to_string(r - 1.0));
  }
  return SpherePoint(std::move(v));
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

SpherePoint::SpherePoint(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.size() < 2) throw ParameterRangeError("sphere points need n >= 2");
  const double r = norm(coords_);
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw ParameterRangeError("cannot place a zero or non-finite vector on the sphere");
  }
  for (double& c : coords_) c /= r;
}

SpherePoint SpherePoint::basis(std::size_t n, std::size_t axis) {
  if (axis >= n) throw ParameterRangeError("basis axis out of range");
  std::vector<double> e(n, 0.0);
  e[axis] = 1.0;
  return SpherePoint(std::move(e));
}

TangentVector::TangentVector(SpherePoint base, std::vector<double> vec)
    : base_(std::move(base)), vec_(std::move(vec)) {
  require_same_dim(base_.dim(), vec_.size());
  const double radial = dot(vec_, base_.coords());
  for (std::size_t i = 0; i < vec_.size(); ++i) vec_[i] -= radial * base_[i];
}

TangentVector TangentVector::zero(const SpherePoint& base) {
  return TangentVector(base, std::vector<double>(base.dim(), 0.0));
}

double TangentVector::norm() const { return geom::norm(vec_); }

double geodesic_distance(const SpherePoint& x, const SpherePoint& y) {
  require_same_dim(x.dim(), y.dim());
  // 2 atan2(|x - y|, |x + y|) equals arccos(<x, y>) but keeps full relative
  // precision near 0 and pi, where arccos loses half the digits.
  double dm = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const double a = x[i] - y[i], b = x[i] + y[i];
    dm += a * a;
    dp += b * b;
  }
  return std::clamp(2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp)), 0.0, std::numbers::pi);
}

SpherePoint exp_map(const SpherePoint& x, const TangentVector& v) {
  require_same_dim(x.dim(), v.vec().size());
  const double r = v.norm();
  if (r < 1e-14) return x;
  const double c = std::cos(r), s = std::sin(r) / r;
  std::vector<double> out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = c * x[i] + s * v.vec()[i];
  return from_arithmetic(std::move(out));
}

TangentVector log_map(const SpherePoint& x, const SpherePoint& y) {
  require_same_dim(x.dim(), y.dim());
  const double c = dot(x.coords(), y.coords());
  if (1.0 + c < kCutLocusTol) throw CutLocusError("log_map: points are antipodal");
  std::vector<double> u(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) u[i] = y[i] - c * x[i];
  const double un = norm(u);
  if (un == 0.0) return TangentVector::zero(x);
  const double d = geodesic_distance(x, y);
  for (double& ui : u) ui *= d / un;
  return TangentVector(x, std::move(u));
}

TangentVector tangent_project(const SpherePoint& x, std::span<const double> w) {
  require_same_dim(x.dim(), w.size());
  return TangentVector(x, std::vector<double>(w.begin(), w.end()));
}

TangentVector parallel_transport(const SpherePoint& x, const SpherePoint& y,
                                 const TangentVector& v) {
  require_same_dim(x.dim(), y.dim());
  require_same_dim(x.dim(), v.vec().size());
  const double c = dot(x.coords(), y.coords());
  if (1.0 + c < kCutLocusTol) throw CutLocusError("parallel_transport: points are antipodal");
  const double k = dot(v.vec(), y.coords()) / (1.0 + c);
  std::vector<double> out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = v.vec()[i] - k * (x[i] + y[i]);
  return TangentVector(y, std::move(out));
}

double geodesic_divergence_ratio(const SpherePoint& x, const SpherePoint& y,
                                 const TangentVector& v, double t) {
  const double d0 = geodesic_distance(x, y);
  if (d0 == 0.0) throw std::domain_error("geodesic_divergence_ratio: x == y");
  const TangentVector vy = parallel_transport(x, y, v);
  std::vector<double> tx(v.vec().begin(), v.vec().end());
  std::vector<double> ty(vy.vec().begin(), vy.vec().end());
  for (double& a : tx) a *= t;
  for (double& a : ty) a *= t;
  const SpherePoint gx = exp_map(x, TangentVector(x, std::move(tx)));
  const SpherePoint gy = exp_map(y, TangentVector(y, std::move(ty)));
  return geodesic_distance(gx, gy) / d0;
}

DivergenceCheck geodesic_divergence_check(int n, long samples, std::uint64_t seed) {
  if (n < 2) throw ParameterRangeError("sphere dimension n must be >= 2");
  if (samples < 1) throw ParameterRangeError("samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> ut(0.0, 2.0 * std::numbers::pi);
  auto gaussian = [&] {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& c : v) c = g(rng);
    return v;
  };
  auto unit = [](const TangentVector& v) {
    std::vector<double> u(v.vec().begin(), v.vec().end());
    const double r = v.norm();
    for (double& c : u) c /= r;
    return TangentVector(v.base(), std::move(u));
  };
  DivergenceCheck out;
  out.samples = samples;
  out.seed = seed;
  for (long k = 0; k < samples; ++k) {
    SpherePoint x(gaussian()), y(gaussian());
    while (1.0 + dot(x.coords(), y.coords()) < 1e-6 || geodesic_distance(x, y) < 1e-6) {
      y = SpherePoint(gaussian());
    }
    TangentVector v(x, gaussian());
    while (v.norm() < 1e-8) v = TangentVector(x, gaussian());
    const double t = ut(rng);
    out.max_ratio = std::max(out.max_ratio, geodesic_divergence_ratio(x, y, unit(v), t));
    const double par = geodesic_divergence_ratio(x, y, unit(log_map(x, y)), t);
    out.max_parallel_deviation = std::max(out.max_parallel_deviation, std::abs(par - 1.0));
  }
  return out;
}

}  // namespace sphagg::geom
