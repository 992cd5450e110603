#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sphagg/error.hpp"
#include "sphagg/kernels.hpp"
#include "sphagg/particles.hpp"

using namespace sphagg;
using namespace sphagg::particles;

namespace {

ParticleEnsemble from_columns(std::initializer_list<std::vector<double>> cols) {
  std::vector<SpherePoint> pts;
  for (const auto& c : cols) pts.emplace_back(c);
  return ParticleEnsemble(pts);
}

// Quasi-uniform spiral points on S^2.
ParticleEnsemble fibonacci(int d) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Eigen::MatrixXd X(3, d);
  for (int i = 0; i < d; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / d, r = std::sqrt(1.0 - z * z);
    X(0, i) = r * std::cos(golden * i);
    X(1, i) = r * std::sin(golden * i);
    X(2, i) = z;
  }
  return ParticleEnsemble(X);
}

}  // namespace

TEST_CASE("ensembles and heads") {
  const auto h = ParticleEnsemble::hemisphere(3, 50, 4);
  CHECK(h.size() == 50);
  CHECK(h.dim() == 3);
  for (int i = 0; i < 50; ++i) {
    CHECK(h.matrix().col(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(h.matrix()(2, i) >= 0.0);
  }
  CHECK(ParticleEnsemble::hemisphere(3, 50, 4).matrix() == h.matrix());
  CHECK(ParticleEnsemble::hemisphere(3, 50, 5).matrix() != h.matrix());
  CHECK(h.point(3)[2] == h.matrix()(2, 3));
  CHECK_THROWS_AS(h.point(50), ParameterRangeError);
  CHECK_THROWS_AS(ParticleEnsemble(Eigen::MatrixXd::Zero(3, 2)), ParameterRangeError);
  CHECK_THROWS_AS(ParticleEnsemble(std::vector<SpherePoint>{}), ParameterRangeError);
  CHECK_THROWS_AS(from_columns({{1, 0, 0}, {1, 0}}), DimensionMismatch);

  const HeadConfig zero_beta{{{1.0, 0.0}}};
  CHECK_THROWS_AS(zero_beta.validate(), ParameterRangeError);
  CHECK_THROWS_AS(HeadConfig::attraction(-1.0), ParameterRangeError);
  const HeadConfig ar = HeadConfig::attraction_repulsion(3, 1.0, 0.05);
  REQUIRE(ar.heads.size() == 2);
  CHECK(ar.heads[1].beta == doctest::Approx(20.0));
  // alpha_eps = 1 / int exp(20 t) dsigma = 20 / sinh(20) on S^2.
  CHECK(ar.heads[1].alpha == doctest::Approx(-20.0 / std::sinh(20.0)).epsilon(1e-12));
}

TEST_CASE("velocity field") {
  const HeadConfig one = HeadConfig::attraction(1.0, 1.0);
  // Single particle: the self-term is radial.
  const auto single = from_columns({{0.3, 0.4, 0.5}});
  CHECK(multihead_velocity(single, one).norm() < 1e-15);
  // Antipodal pair.
  const auto anti = from_columns({{0, 0, 1}, {0, 0, -1}});
  CHECK(multihead_velocity(anti, one).norm() < 1e-15);
  // Hand evaluation: x1 = e1, x2 = e2 gives v1 = e2 / 2 and v2 = e1 / 2.
  const auto pair = from_columns({{1, 0, 0}, {0, 1, 0}});
  const std::vector<TangentVector> v = multihead_rhs(pair, one);
  CHECK(v[0].vec()[0] == doctest::Approx(0.0));
  CHECK(v[0].vec()[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v[1].vec()[0] == doctest::Approx(0.5).epsilon(1e-15));
  // Two heads add linearly.
  const HeadConfig two{{{1.0, 1.0}, {2.0, 3.0}}};
  const auto X = ParticleEnsemble::uniform(4, 9, 2);
  const Eigen::MatrixXd sum = multihead_velocity(X, HeadConfig{{{1.0, 1.0}}}) +
                              multihead_velocity(X, HeadConfig{{{2.0, 3.0}}});
  CHECK((multihead_velocity(X, two) - sum).norm() < 1e-13);

  // Tangency and permutation equivariance.
  const Eigen::MatrixXd V = multihead_velocity(X, two);
  for (int i = 0; i < X.size(); ++i) CHECK(std::abs(V.col(i).dot(X.matrix().col(i))) < 1e-12);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(9);
  perm.setIdentity();
  std::swap(perm.indices()[0], perm.indices()[5]);
  std::swap(perm.indices()[2], perm.indices()[7]);
  const ParticleEnsemble Xp(X.matrix() * perm);
  CHECK((multihead_velocity(Xp, two) - V * perm).norm() < 1e-13);
}

TEST_CASE("clustering metrics") {
  const HeadConfig one = HeadConfig::attraction();
  const auto same = from_columns({{1, 0, 0}, {1, 0, 0}});
  const ClusteringMetrics m = clustering_metrics(same, one);
  CHECK(m.min_pair_inner == 1.0);
  CHECK(m.max_pair_inner == 1.0);
  // (1 / 8) * 4 * (-e).
  CHECK(m.energy == doctest::Approx(-std::exp(1.0) / 2.0).epsilon(1e-14));
  const auto anti = from_columns({{1, 0, 0}, {-1, 0, 0}});
  CHECK(clustering_metrics(anti, one).min_pair_inner == -1.0);
  const HeadConfig two{{{1.0, 1.0}, {-0.5, 2.0}}};
  const ClusteringMetrics t = clustering_metrics(ParticleEnsemble::uniform(3, 6, 1), two);
  REQUIRE(t.head_energy.size() == 2);
  CHECK(t.head_energy[1] > 0.0);
  CHECK(t.energy == doctest::Approx(t.head_energy[0] + t.head_energy[1]));
  CHECK_THROWS_AS(clustering_metrics(from_columns({{1, 0}}), one), ParameterRangeError);
}

TEST_CASE("simulation") {
  SimulationConfig c;
  c.T = 1.0;
  c.dt = 0.01;
  c.record_every = 10;
  const auto X = ParticleEnsemble::hemisphere(3, 8, 3);

  const ParticleTrajectory frozen = simulate(X, HeadConfig{}, c);
  CHECK(frozen.snapshots.size() == 11);
  CHECK(frozen.times.back() == doctest::Approx(1.0));
  CHECK((frozen.snapshots.back().matrix() - X.matrix()).norm() < 1e-15);

  // A reflection-symmetric pair stays symmetric.
  const auto pair = from_columns({{0.6, 0.0, 0.8}, {-0.6, 0.0, 0.8}});
  const ParticleTrajectory sym = simulate(pair, HeadConfig::attraction(), c);
  for (const auto& s : sym.snapshots) {
    CHECK(s.matrix()(0, 0) == doctest::Approx(-s.matrix()(0, 1)).epsilon(1e-14));
    CHECK(s.matrix()(2, 0) == doctest::Approx(s.matrix()(2, 1)).epsilon(1e-14));
  }

  // Attraction clusters and dissipates.
  c.T = 20.0;
  const ParticleTrajectory a = simulate(X, HeadConfig::attraction(), c);
  for (std::size_t k = 1; k < a.metrics.size(); ++k) {
    CHECK(a.metrics[k].energy <= a.metrics[k - 1].energy + 1e-12);
  }
  CHECK(a.metrics.back().min_pair_inner > a.metrics.front().min_pair_inner);
  CHECK(a.metrics.back().min_pair_inner > 0.99);
  CHECK(a.max_energy_increase <= 1e-6);
  CHECK(a.max_norm_drift < 1e-6);

  // Without renormalization the drift is visible but the field stays tangent.
  SimulationConfig raw = c;
  raw.renormalize = false;
  raw.dt = 0.1;
  const ParticleTrajectory r = simulate(X, HeadConfig::attraction(), raw);
  CHECK(r.max_norm_drift > 0.0);

  SimulationConfig bad = c;
  bad.dt = 0.0;
  CHECK_THROWS_AS(simulate(X, HeadConfig::attraction(), bad), ParameterRangeError);
  bad = c;
  bad.record_every = 0;
  CHECK_THROWS_AS(simulate(X, HeadConfig::attraction(), bad), ParameterRangeError);
}

TEST_CASE("repulsive head keeps tokens apart") {
  SimulationConfig c;
  c.T = 10.0;
  c.record_every = 50;
  const auto X = ParticleEnsemble::hemisphere(3, 16, 8);
  const ParticleTrajectory r = simulate(X, HeadConfig::attraction_repulsion(3, 1.0, 0.05), c);
  for (const auto& m : r.metrics) CHECK(m.min_pair_inner < 0.99);
  CHECK(r.max_energy_increase <= 1e-6);
}

TEST_CASE("sphere quadrature") {
  for (int n : {2, 3}) {
    const SphereQuadrature q = sphere_quadrature(n, 16);
    double w = 0.0, second = 0.0;
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      w += q.weights[i];
      second += q.weights[i] * q.points[i][n - 1] * q.points[i][n - 1];
    }
    CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(second == doctest::Approx(1.0 / n).epsilon(1e-13));
  }
  CHECK_THROWS_AS(sphere_quadrature(4, 8), ParameterRangeError);
}

TEST_CASE("smoothed density") {
  const auto V = kernels::heat_kernel_coeffs(3, 0.1, 64);
  const SphereQuadrature q = sphere_quadrature(3, 48);
  const auto X = ParticleEnsemble::hemisphere(3, 20, 9);
  const SmoothedDensity s = smoothed_density(X, V, q.points);
  CHECK(s.positivity_ok);
  double mass = 0.0;
  for (std::size_t i = 0; i < q.points.size(); ++i) {
    CHECK(s.values[i] >= -1e-12);
    mass += q.weights[i] * s.values[i];
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

  // Near-uniform tokens give a near-uniform density.
  const SmoothedDensity u = smoothed_density(fibonacci(256), V, q.points);
  for (double v : u.values) CHECK(std::abs(v - 1.0) <= 0.15);

  // One token and a narrow kernel: a sharp bump at the token.
  const auto one = from_columns({{0, 0, 1}});
  const auto narrow = kernels::heat_kernel_coeffs(3, 0.005, 128);
  const SmoothedDensity b = smoothed_density(
      one, narrow, {SpherePoint({0, 0, 1}), SpherePoint({0, 1, 1}), SpherePoint({0, 0, -1})});
  CHECK(b.values[0] > 20.0);
  CHECK(b.values[1] < 1e-3 * b.values[0]);
  CHECK(std::abs(b.values[2]) < 1e-6);

  // A kernel whose square root changes sign is flagged.
  const spectral::ZonalCoefficients bad(2, {1.0, 0.9});
  const SmoothedDensity f = smoothed_density(ParticleEnsemble::uniform(2, 4, 1), bad, sphere_quadrature(2, 8).points);
  CHECK_FALSE(f.positivity_ok);
  CHECK_THROWS_AS(smoothed_density(X, bad, q.points), DimensionMismatch);
}
