#include "sphagg/particles.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sphagg/kernels.hpp"

namespace sphagg::particles {

namespace {

// sum_m alpha_m exp(beta_m G) without overflowing for large beta and tiny alpha.
Eigen::MatrixXd weighted_exp(const Eigen::MatrixXd& G, const HeadConfig& heads) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(G.rows(), G.cols());
  for (const Head& h : heads.heads) {
    if (h.alpha == 0.0) continue;
    const double la = std::log(std::abs(h.alpha));
    const double s = h.alpha > 0.0 ? 1.0 : -1.0;
    K.array() += s * (h.beta * G.array() + la).exp();
  }
  return K;
}

Eigen::MatrixXd velocity(const Eigen::MatrixXd& X, const HeadConfig& heads) {
  const Eigen::MatrixXd G = X.transpose() * X;
  const Eigen::MatrixXd S = X * weighted_exp(G, heads) / static_cast<double>(X.cols());
  // Project column i onto the tangent plane at x_i.
  const Eigen::RowVectorXd radial = (S.cwiseProduct(X)).colwise().sum();
  return S - X * radial.asDiagonal();
}

double energy_of(const Eigen::MatrixXd& G, const Head& h) {
  if (h.alpha == 0.0) return 0.0;
  const double la = std::log(std::abs(h.alpha)) - std::log(h.beta);
  const double s = h.alpha > 0.0 ? -1.0 : 1.0;
  const double d = static_cast<double>(G.rows());
  return s * (h.beta * G.array() + la).exp().sum() / (2.0 * d * d);
}

void normalize_columns(Eigen::MatrixXd& X) {
  for (Eigen::Index i = 0; i < X.cols(); ++i) X.col(i).normalize();
}

}  // namespace

ParticleEnsemble::ParticleEnsemble(const std::vector<SpherePoint>& points) {
  if (points.empty()) throw ParameterRangeError("ensemble needs at least one particle");
  const std::size_t n = points.front().dim();
  X_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].dim() != n) throw DimensionMismatch("particles live in different dimensions");
    for (std::size_t k = 0; k < n; ++k) X_(k, i) = points[i][k];
  }
}

ParticleEnsemble::ParticleEnsemble(Eigen::MatrixXd columns) : X_(std::move(columns)) {
  if (X_.cols() < 1) throw ParameterRangeError("ensemble needs at least one particle");
  if (X_.rows() < 2) throw ParameterRangeError("sphere dimension n must be >= 2");
  if (!X_.allFinite()) throw NonFiniteValue("particle coordinates are not finite");
  for (Eigen::Index i = 0; i < X_.cols(); ++i) {
    const double r = X_.col(i).norm();
    if (!(r > 0.0)) throw ParameterRangeError("particle " + std::to_string(i) + " is the zero vector");
    X_.col(i) /= r;
  }
}

ParticleEnsemble ParticleEnsemble::uniform(int n, int d, std::uint64_t seed) {
  if (n < 2 || d < 1) throw ParameterRangeError("uniform ensemble needs n >= 2 and d >= 1");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < d; ++i) {
    do {
      for (int k = 0; k < n; ++k) X(k, i) = g(gen);
    } while (X.col(i).norm() < 1e-12);
  }
  return ParticleEnsemble(std::move(X));
}

ParticleEnsemble ParticleEnsemble::hemisphere(int n, int d, std::uint64_t seed) {
  Eigen::MatrixXd X = uniform(n, d, seed).matrix();
  for (int i = 0; i < d; ++i) {
    if (X(n - 1, i) < 0.0) X(n - 1, i) = -X(n - 1, i);
  }
  return ParticleEnsemble(std::move(X));
}

SpherePoint ParticleEnsemble::point(int i) const {
  if (i < 0 || i >= size()) throw ParameterRangeError("particle index out of range");
  return SpherePoint(std::vector<double>(X_.col(i).data(), X_.col(i).data() + X_.rows()));
}

std::vector<SpherePoint> ParticleEnsemble::points() const {
  std::vector<SpherePoint> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) out.push_back(point(i));
  return out;
}

void HeadConfig::validate() const {
  for (std::size_t m = 0; m < heads.size(); ++m) {
    if (!(heads[m].beta > 0.0) || !std::isfinite(heads[m].beta)) {
      throw ParameterRangeError("head " + std::to_string(m) + ": beta must be positive");
    }
    if (!std::isfinite(heads[m].alpha)) {
      throw ParameterRangeError("head " + std::to_string(m) + ": alpha must be finite");
    }
  }
}

HeadConfig HeadConfig::attraction(double beta, double alpha) {
  HeadConfig h{{{alpha, beta}}};
  h.validate();
  return h;
}

HeadConfig HeadConfig::attraction_repulsion(int n, double beta, double eps) {
  HeadConfig h{{{1.0, beta}, {-kernels::exponential_normalization(n, eps), 1.0 / eps}}};
  h.validate();
  return h;
}

Eigen::MatrixXd multihead_velocity(const ParticleEnsemble& X, const HeadConfig& heads) {
  heads.validate();
  return velocity(X.matrix(), heads);
}

std::vector<TangentVector> multihead_rhs(const ParticleEnsemble& X, const HeadConfig& heads) {
  const Eigen::MatrixXd V = multihead_velocity(X, heads);
  std::vector<TangentVector> out;
  out.reserve(static_cast<std::size_t>(X.size()));
  for (int i = 0; i < X.size(); ++i) {
    out.emplace_back(X.point(i), std::vector<double>(V.col(i).data(), V.col(i).data() + V.rows()));
  }
  return out;
}

ClusteringMetrics clustering_metrics(const ParticleEnsemble& X, const HeadConfig& heads) {
  if (X.size() < 2) throw ParameterRangeError("clustering metrics need at least two particles");
  heads.validate();
  const Eigen::MatrixXd G = X.matrix().transpose() * X.matrix();
  ClusteringMetrics m;
  m.min_pair_inner = INFINITY;
  m.max_pair_inner = -INFINITY;
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const double g = std::clamp(G(i, j), -1.0, 1.0);
      m.min_pair_inner = std::min(m.min_pair_inner, g);
      m.max_pair_inner = std::max(m.max_pair_inner, g);
    }
  }
  for (const Head& h : heads.heads) {
    m.head_energy.push_back(energy_of(G, h));
    m.energy += m.head_energy.back();
  }
  return m;
}

void SimulationConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterRangeError("dt: must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) throw ParameterRangeError("T: must be >= 0");
  if (record_every < 1) throw ParameterRangeError("record_every: must be >= 1");
}

ParticleTrajectory simulate(const ParticleEnsemble& X0, const HeadConfig& heads,
                            const SimulationConfig& config) {
  config.validate();
  heads.validate();
  ParticleTrajectory tr;
  const long steps = static_cast<long>(std::ceil(config.T / config.dt - 1e-9));
  const double h = steps > 0 ? config.T / steps : 0.0;
  const bool metrics = X0.size() >= 2;
  Eigen::MatrixXd X = X0.matrix();
  auto record = [&](double t) {
    const ParticleEnsemble e(X);
    tr.times.push_back(t);
    if (metrics) tr.metrics.push_back(clustering_metrics(e, heads));
    tr.snapshots.push_back(e);
  };
  auto energy = [&](const Eigen::MatrixXd& Y) {
    const Eigen::MatrixXd G = Y.transpose() * Y;
    double e = 0.0;
    for (const Head& hd : heads.heads) e += energy_of(G, hd);
    return e;
  };
  record(0.0);
  double E = metrics ? energy(X) : 0.0;
  for (long k = 1; k <= steps; ++k) {
    const Eigen::MatrixXd k1 = velocity(X, heads);
    const Eigen::MatrixXd k2 = velocity(X + 0.5 * h * k1, heads);
    const Eigen::MatrixXd k3 = velocity(X + 0.5 * h * k2, heads);
    const Eigen::MatrixXd k4 = velocity(X + h * k3, heads);
    Eigen::MatrixXd Y = X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!Y.allFinite()) {
      throw InstabilityError("particle state became non-finite at step " + std::to_string(k),
                             (k - 1) * h);
    }
    for (Eigen::Index i = 0; i < Y.cols(); ++i) {
      tr.max_norm_drift = std::max(tr.max_norm_drift, std::abs(Y.col(i).norm() - 1.0));
    }
    if (config.renormalize) normalize_columns(Y);
    X = std::move(Y);
    if (metrics) {
      const double En = energy(X);
      tr.max_energy_increase = std::max(tr.max_energy_increase, (En - E) / (1.0 + std::abs(E)));
      E = En;
    }
    if (k % config.record_every == 0 || k == steps) record(k * h);
  }
  return tr;
}

SphereQuadrature sphere_quadrature(int n, int m) {
  if (m < 1) throw ParameterRangeError("quadrature size must be >= 1");
  SphereQuadrature q;
  const double two_pi = 2.0 * std::numbers::pi;
  if (n == 2) {
    for (int j = 0; j < m; ++j) {
      const double p = two_pi * j / m;
      q.points.emplace_back(std::vector<double>{std::cos(p), std::sin(p)});
      q.weights.push_back(1.0 / m);
    }
    return q;
  }
  if (n != 3) throw ParameterRangeError("sphere_quadrature supports n = 2 and n = 3");
  // Gauss nodes for the uniform measure in t = x_3 on S^2.
  const spectral::QuadratureGrid g = spectral::build_quadrature(3, m);
  double wsum = 0.0;
  for (double w : g.weights) wsum += w;
  for (int i = 0; i < m; ++i) {
    const double t = g.nodes[i], s = std::sqrt(std::max(0.0, 1.0 - t * t));
    for (int j = 0; j < 2 * m; ++j) {
      const double p = two_pi * j / (2 * m);
      q.points.emplace_back(std::vector<double>{s * std::cos(p), s * std::sin(p), t});
      q.weights.push_back(g.weights[i] / wsum / (2 * m));
    }
  }
  return q;
}

SmoothedDensity smoothed_density(const ParticleEnsemble& X, const spectral::ZonalCoefficients& V,
                                 const std::vector<SpherePoint>& grid) {
  if (V.dim() != X.dim()) throw DimensionMismatch("kernel dimension does not match the particles");
  const spectral::ZonalCoefficients sv = spectral::sqrt_kernel(V);
  SmoothedDensity out;
  out.positivity_ok = spectral::sqrt_is_nonnegative(V);
  out.values.reserve(grid.size());
  const Eigen::MatrixXd& P = X.matrix();
  for (const SpherePoint& y : grid) {
    if (static_cast<int>(y.dim()) != X.dim()) throw DimensionMismatch("grid point has the wrong dimension");
    const Eigen::Map<const Eigen::VectorXd> yv(y.coords().data(), X.dim());
    const Eigen::VectorXd g = P.transpose() * yv;
    double s = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      s += spectral::reconstruct_kernel(sv, std::clamp(g[j], -1.0, 1.0));
    }
    out.values.push_back(s / X.size());
  }
  return out;
}

}  // namespace sphagg::particles
