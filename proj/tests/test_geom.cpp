#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sphagg/error.hpp"
#include "sphagg/geom.hpp"

using namespace sphagg;
using namespace sphagg::geom;

namespace {

SpherePoint random_point(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& c : v) c = g(rng);
  return SpherePoint(v);
}

TangentVector random_tangent(std::mt19937_64& rng, const SpherePoint& x) {
  std::normal_distribution<double> g;
  std::vector<double> v(x.dim());
  for (double& c : v) c = g(rng);
  return TangentVector(x, v);
}

void check_vec(std::span<const double> a, std::vector<double> b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("sphere points are normalized and validated") {
  SpherePoint p({3.0, 4.0});
  CHECK(p[0] == doctest::Approx(0.6));
  CHECK(p[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(SpherePoint({1.0}), ParameterRangeError);
  CHECK_THROWS_AS(SpherePoint({0.0, 0.0, 0.0}), ParameterRangeError);
  CHECK_THROWS_AS(SpherePoint({NAN, 1.0}), ParameterRangeError);
}

TEST_CASE("geodesic distance") {
  const auto e1 = SpherePoint::basis(3, 0), e2 = SpherePoint::basis(3, 1);
  CHECK(geodesic_distance(e1, e2) == doctest::Approx(std::numbers::pi / 2));
  CHECK(geodesic_distance(e1, e1) == 0.0);
  SpherePoint y({std::cos(0.3), std::sin(0.3), 0.0});
  CHECK(geodesic_distance(e1, y) == doctest::Approx(0.3).epsilon(1e-14));
  SpherePoint anti({-1.0, 0.0, 0.0});
  CHECK(geodesic_distance(e1, anti) == doctest::Approx(std::numbers::pi));
  // Tiny separation keeps relative accuracy where arccos would not.
  SpherePoint close({std::cos(1e-9), std::sin(1e-9), 0.0});
  CHECK(geodesic_distance(e1, close) == doctest::Approx(1e-9).epsilon(1e-6));
  CHECK_THROWS_AS(geodesic_distance(e1, SpherePoint::basis(2, 0)), DimensionMismatch);
}

TEST_CASE("exp map examples") {
  const auto e1 = SpherePoint::basis(3, 0);
  const double h = std::numbers::pi / 2;
  check_vec(exp_map(e1, TangentVector(e1, {0, h, 0})).coords(), {0, 1, 0}, 1e-15);
  check_vec(exp_map(e1, TangentVector(e1, {0, std::numbers::pi, 0})).coords(), {-1, 0, 0}, 1e-15);
  check_vec(exp_map(e1, TangentVector::zero(e1)).coords(), {1, 0, 0}, 0);
}

TEST_CASE("log map examples and cut locus") {
  const auto e1 = SpherePoint::basis(3, 0), e2 = SpherePoint::basis(3, 1);
  check_vec(log_map(e1, e2).vec(), {0, std::numbers::pi / 2, 0}, 1e-15);
  CHECK(log_map(e1, e1).norm() == 0.0);
  CHECK_THROWS_AS(log_map(e1, SpherePoint({-1.0, 0.0, 0.0})), CutLocusError);
  CHECK_THROWS_AS(log_map(e1, SpherePoint({-1.0, 1e-5, 0.0})), CutLocusError);
}

TEST_CASE("exp/log round trip on S^4") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 500; ++k) {
    const auto x = random_point(rng, 5), y = random_point(rng, 5);
    const auto v = log_map(x, y);
    CHECK(v.norm() == doctest::Approx(geodesic_distance(x, y)).epsilon(1e-12));
    CHECK(std::abs(dot(v.vec(), x.coords())) < 1e-12);
    const auto z = exp_map(x, v);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(z[i] - y[i]) < 1e-10);
  }
}

TEST_CASE("tangent projection") {
  const auto e1 = SpherePoint::basis(3, 0);
  const std::vector<double> a{1, 0, 0}, b{0, 1, 0}, c{1, 2, 0};
  check_vec(tangent_project(e1, a).vec(), {0, 0, 0}, 0);
  check_vec(tangent_project(e1, b).vec(), {0, 1, 0}, 0);
  check_vec(tangent_project(e1, c).vec(), {0, 2, 0}, 0);
  const std::vector<double> bad{1, 2};
  CHECK_THROWS_AS(tangent_project(e1, bad), DimensionMismatch);
}

TEST_CASE("parallel transport matches the planar rotation") {
  const double th = 0.7;
  const auto e1 = SpherePoint::basis(3, 0);
  SpherePoint y({std::cos(th), std::sin(th), 0.0});
  check_vec(parallel_transport(e1, y, TangentVector(e1, {0, 1, 0})).vec(),
            {-std::sin(th), std::cos(th), 0}, 1e-15);
  check_vec(parallel_transport(e1, y, TangentVector(e1, {0, 0, 1})).vec(), {0, 0, 1}, 1e-15);
  check_vec(parallel_transport(e1, e1, TangentVector(e1, {0, 0.3, -2})).vec(), {0, 0.3, -2}, 0);
  CHECK_THROWS_AS(parallel_transport(e1, SpherePoint({-1.0, 0.0, 0.0}), TangentVector::zero(e1)),
                  CutLocusError);
}

TEST_CASE("parallel transport equals the rotation matrix on S^2") {
  // Rotation about the axis x cross y by the angle between them.
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto x = random_point(rng, 3), y = random_point(rng, 3);
    const auto v = random_tangent(rng, x);
    double a[3] = {x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]};
    const double s = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double c = dot(x.coords(), y.coords());
    for (double& ai : a) ai /= s;
    // Rodrigues formula.
    const auto& w = v.vec();
    const double adw = a[0] * w[0] + a[1] * w[1] + a[2] * w[2];
    const double axw[3] = {a[1] * w[2] - a[2] * w[1], a[2] * w[0] - a[0] * w[2], a[0] * w[1] - a[1] * w[0]};
    std::vector<double> rot(3);
    for (int i = 0; i < 3; ++i) rot[i] = w[i] * c + axw[i] * s + a[i] * adw * (1 - c);
    const auto pt = parallel_transport(x, y, v);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(pt.vec()[i] - rot[i]) < 1e-12);
  }
}

TEST_CASE("transport is an isometry and reverses") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    const std::size_t n = 2 + k % 6;
    const auto x = random_point(rng, n), y = random_point(rng, n);
    const auto u = random_tangent(rng, x), v = random_tangent(rng, x);
    const auto pu = parallel_transport(x, y, u), pv = parallel_transport(x, y, v);
    CHECK(std::abs(dot(pu.vec(), y.coords())) < 1e-12);
    CHECK(std::abs(pv.norm() - v.norm()) < 1e-12);
    CHECK(std::abs(dot(pu.vec(), pv.vec()) - dot(u.vec(), v.vec())) < 1e-12);
    const auto back = parallel_transport(y, x, pv);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(back.vec()[i] - v.vec()[i]) < 1e-10);
  }
}

TEST_CASE("gradient of squared distance is -2 log") {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 100; ++k) {
    const auto x = random_point(rng, 4), y = random_point(rng, 4);
    if (geodesic_distance(x, y) > 3.0) continue;
    const auto g = log_map(y, x);
    const auto dir = random_tangent(rng, y);
    const double h = 1e-6;
    auto f = [&](double s) {
      std::vector<double> w(dir.vec().begin(), dir.vec().end());
      for (double& c : w) c *= s;
      const double d = geodesic_distance(x, exp_map(y, TangentVector(y, w)));
      return d * d;
    };
    const double fd = (f(h) - f(-h)) / (2 * h);
    CHECK(std::abs(fd + 2 * dot(g.vec(), dir.vec())) < 1e-6 * (1 + dir.norm()));
  }
}

TEST_CASE("geodesic divergence ratio") {
  std::mt19937_64 rng(13);
  const auto x = random_point(rng, 3), y = random_point(rng, 3);
  const auto l = log_map(x, y);
  std::vector<double> unit(l.vec().begin(), l.vec().end());
  for (double& c : unit) c /= l.norm();
  const TangentVector v(x, unit);
  for (double t : {0.1, 1.0, 2.5, 5.0}) {
    CHECK(geodesic_divergence_ratio(x, y, v, t) == doctest::Approx(1.0).epsilon(1e-9));
  }
  const auto w = random_tangent(rng, x);
  CHECK(geodesic_divergence_ratio(x, y, w, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(geodesic_divergence_ratio(x, x, w, 1.0));
  double worst = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const auto a = random_point(rng, 3), b = random_point(rng, 3);
    if (1.0 + dot(a.coords(), b.coords()) < 1e-6) continue;
    auto d = random_tangent(rng, a);
    std::vector<double> u(d.vec().begin(), d.vec().end());
    for (double& c : u) c /= d.norm();
    const double t = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
    worst = std::max(worst, geodesic_divergence_ratio(a, b, TangentVector(a, u), t));
  }
  CHECK(worst <= 3.0);
}

TEST_CASE("divergence check") {
  const DivergenceCheck a = geodesic_divergence_check(3, 2000, 7);
  CHECK(a.samples == 2000);
  CHECK(a.seed == 7);
  CHECK(a.max_ratio > 0.5);
  CHECK(a.max_ratio <= 3.0);
  CHECK(a.max_parallel_deviation < 1e-9);
  const DivergenceCheck b = geodesic_divergence_check(3, 2000, 7);
  CHECK(a.max_ratio == b.max_ratio);
  CHECK(geodesic_divergence_check(5, 500, 1).max_ratio <= 3.0);
  CHECK_THROWS_AS(geodesic_divergence_check(1, 10, 1), ParameterRangeError);
  CHECK_THROWS_AS(geodesic_divergence_check(3, 0, 1), ParameterRangeError);
}
