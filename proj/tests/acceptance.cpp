// Acceptance suite: one PASS/FAIL line per criterion AC-1..AC-11.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sphagg/geom.hpp"
#include "sphagg/kernels.hpp"
#include "sphagg/ot.hpp"
#include "sphagg/particles.hpp"
#include "sphagg/pde.hpp"
#include "sphagg/spectral.hpp"

using namespace sphagg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

spectral::ZonalCoefficients random_smooth(std::mt19937_64& rng, int n, int L, double decay = 0.3) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> c(L + 1);
  c[0] = 1.0;
  for (int l = 1; l <= L; ++l) c[l] = u(rng) * std::exp(-decay * l) / spectral::zonal_harmonic_at_one(n, l);
  return spectral::ZonalCoefficients(n, c);
}

// (K * f)(s) = int K(<x, y>) f(<p, y>) dsigma(y) with <p, x> = s, by direct quadrature.
double direct_convolution(const std::function<double(double)>& K, const spectral::ZonalCoefficients& f,
                          int n, double s) {
  double sum = 0.0, norm = 0.0;
  if (n == 2) {
    const int m = 512;
    const double phx = std::acos(s);
    for (int j = 0; j < m; ++j) {
      const double ph = 2 * std::numbers::pi * j / m;
      sum += K(std::cos(ph - phx)) * spectral::reconstruct_kernel(f, std::cos(ph));
      norm += 1.0;
    }
    return sum / norm;
  }
  const auto [a, wa] = oracle::gauss_legendre(96, 0.0, std::numbers::pi);
  const auto [b, wb] = oracle::gauss_legendre(96, 0.0, std::numbers::pi);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = std::cos(a[i]), st = std::sin(a[i]);
    const double ft = spectral::reconstruct_kernel(f, t);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double w = wa[i] * std::pow(st, n - 2) * wb[j] * std::pow(std::sin(b[j]), n - 3);
      sum += w * K(t * s + st * std::sqrt(1 - s * s) * std::cos(b[j])) * ft;
      norm += w;
    }
  }
  return sum / norm;
}

Outcome ac1() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0.0;
  for (int n : {2, 3, 5}) {
    for (int pair = 0; pair < 20; ++pair) {
      const double beta = 0.5 + 2.0 * u(rng), gamma = u(rng);
      auto K = [beta, gamma](double t) { return std::exp(beta * t) + gamma * t * t * t; };
      const auto Kc = spectral::decompose_kernel(K, n, 32, 72);
      const auto f = random_smooth(rng, n, 32);
      const auto spec = spectral::convolve(Kc, f);
      double err = 0.0, scale = 0.0;
      for (int k = 0; k < 4; ++k) {
        const double s = -1.0 + 2.0 * u(rng);
        const double d = direct_convolution(K, f, n, s);
        err = std::max(err, std::abs(spectral::reconstruct_kernel(spec, s) - d));
        scale = std::max(scale, std::abs(d));
      }
      worst = std::max(worst, err / scale);
    }
  }
  return {worst <= 1e-8, "max relative error " + fmt(worst) + " (tol 1e-8), 60 pairs, n = 2, 3, 5"};
}

Outcome ac2() {
  double pointwise = 0.0, coeff_ulps = 0.0;
  for (int n : {2, 3}) {
    for (double eps : {0.5, 0.1}) {
      for (bool heat : {true, false}) {
        const int L = 64;
        const auto V = heat ? kernels::heat_kernel_coeffs(n, eps, L) : kernels::exponential_kernel_coeffs(n, eps, L);
        const auto s = spectral::sqrt_kernel(V);
        const auto ss = spectral::convolve(s, s);
        for (int l = 0; l <= L; ++l) {
          if (V[l] == 0.0) continue;
          coeff_ulps = std::max(coeff_ulps, std::abs(ss[l] - V[l]) / (std::numeric_limits<double>::epsilon() * V[l]));
        }
        for (int i = 0; i <= 2000; ++i) {
          const double t = -1.0 + i / 1000.0;
          pointwise = std::max(pointwise,
                               std::abs(spectral::reconstruct_kernel(ss, t) - spectral::reconstruct_kernel(V, t)));
        }
      }
    }
  }
  const bool ok = pointwise <= 1e-8 && coeff_ulps <= 1.0;
  return {ok, "max pointwise error " + fmt(pointwise) + " (tol 1e-8), coefficient identity within " +
                  fmt(coeff_ulps) + " ulp (tol 1 ulp)"};
}

Outcome ac3() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int n : {2, 3}) {
    const auto V = kernels::heat_kernel_coeffs(n, 0.05, 32);
    for (int k = 0; k < 20; ++k) {
      const auto u = random_smooth(rng, n, 32);
      const auto r = spectral::dirichlet_identity_check(u, V);
      worst = std::max(worst, std::abs(r.lhs - r.rhs) / std::abs(r.lhs));
    }
  }
  return {worst <= 1e-6, "max relative gap " + fmt(worst) + " (tol 1e-6), 20 u per n = 2, 3"};
}

ot::CircularDistribution benchmark_cells(int N) {
  const auto disc = pde::Discretization::create(2, 32);
  return ot::cell_average(pde::DensityState::from_function(disc, [](double t) { return 1.0 + 0.5 * std::cos(t); }),
                          N);
}

Outcome ac4() {
  std::mt19937_64 rng(404);
  double semigroup = 0.0;
  for (int n : {2, 3}) {
    const auto f = random_smooth(rng, n, 32);
    for (auto [s, t] : {std::pair{0.01, 0.02}, std::pair{0.1, 0.25}, std::pair{0.3, 0.05}}) {
      const auto a = spectral::heat_semigroup_apply(spectral::heat_semigroup_apply(f, s), t);
      const auto b = spectral::heat_semigroup_apply(f, s + t);
      for (int l = 0; l <= 32; ++l) {
        if (b[l] != 0.0) semigroup = std::max(semigroup, std::abs(a[l] - b[l]) / std::abs(b[l]));
      }
    }
  }
  bool entropy_ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rho = ot::random_von_mises_mixture(seed, 128);
    double prev = ot::grid_entropy(rho);
    for (int k = 1; k <= 10; ++k) {
      const double e = ot::grid_entropy(ot::heat_flow(rho, 0.05 * k));
      entropy_ok = entropy_ok && e < prev;
      prev = e;
    }
  }
  std::vector<double> times;
  for (int k = 0; k <= 10; ++k) times.push_back(0.05 * k);
  const std::vector<double> one(128, 1.0);
  const ot::EviReport evi =
      ot::evi_check(benchmark_cells(128), ot::CircularDistribution::from_grid(one), times, 1e-3);
  const bool ok = semigroup <= 1e-13 && entropy_ok && evi.max_violation <= 1e-3;
  return {ok, "semigroup relative gap " + fmt(semigroup) + ", entropy strictly decreasing from 5 starts: " +
                  (entropy_ok ? "yes" : "no") + ", EVI max violation " + fmt(evi.max_violation) + " (tol 1e-3)"};
}

struct Benchmark {
  pde::DiscretizationPtr disc = pde::Discretization::create(2, 32);
  pde::DensityState rho0 =
      pde::DensityState::from_function(disc, [](double t) { return 1.0 + 0.5 * std::cos(t); });
  kernels::KernelWithEvaluator W = kernels::attraction_kernel(2, 1.0, 32);
  spectral::ZonalCoefficients V = kernels::heat_kernel_coeffs(2, 0.1, 32);
};

Outcome ac5() {
  const Benchmark b;
  pde::SolverConfig cfg;
  cfg.T = 1.0;
  const pde::SolveResult r = pde::solve(b.rho0, b.W.coeffs, b.V, cfg);
  const auto& e = r.energy;
  const double bound = e.conv_l2.front() + 2.0 * kernels::linf_norm(b.W.eval);
  double mass = 0.0, increase = -INFINITY, forms = 0.0, conv = 0.0;
  for (std::size_t k = 0; k < e.time.size(); ++k) {
    mass = std::max(mass, std::abs(e.mass[k] - 1.0));
    if (k > 0) increase = std::max(increase, (e.F_double[k] - e.F_double[k - 1]) / (1.0 + std::abs(e.F_double[k - 1])));
    forms = std::max(forms, std::abs(e.F_double[k] - e.F_sqrt[k]) / std::abs(e.F_double[k]));
    conv = std::max(conv, e.conv_l2[k]);
  }
  const bool ok = mass <= 1e-10 && increase <= 1e-6 && forms <= 1e-7 && conv <= bound;
  return {ok, "mass drift " + fmt(mass) + ", max relative F increase " + fmt(increase) + ", F forms gap " +
                  fmt(forms) + ", max ||sqrt(V)*rho||^2 " + fmt(conv) + " <= " + fmt(bound) + " (" +
                  std::to_string(e.time.size()) + " samples)"};
}

Outcome ac6() {
  const Benchmark b;
  pde::SolverConfig cfg;
  cfg.T = 1.0;
  const auto family = [](double eps, int L) { return kernels::heat_kernel_coeffs(2, eps, L); };
  const pde::ConvergenceTable t = pde::convergence_study({0.2, 0.1, 0.05, 0.025}, b.W.coeffs, family, b.rho0, cfg);
  bool ok = t.ade_ok, err_dec = true, res_dec = true;
  std::string errs, ress;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    ok = ok && t.rows[k].ok;
    errs += (k ? ", " : "") + fmt(t.rows[k].error);
    ress += (k ? ", " : "") + fmt(t.rows[k].residual_mean);
    if (k > 0) {
      err_dec = err_dec && t.rows[k].error < t.rows[k - 1].error;
      res_dec = res_dec && t.rows[k].residual_mean < t.rows[k - 1].residual_mean;
    }
  }
  const double ratio = ok ? t.rows.front().error / t.rows.back().error : 0.0;
  ok = ok && err_dec && res_dec && ratio >= 3.0;
  return {ok, "e(eps) = [" + errs + "], e(0.2)/e(0.025) = " + fmt(ratio) + " (need >= 3), residual = [" + ress + "]"};
}

Outcome ac7() {
  const Benchmark b;
  const int N = 128;
  const ot::InteractionEnergy F(N, b.W.coeffs, b.V);
  const ot::CircularDistribution g0 = ot::cell_average(b.rho0, N);
  std::vector<double> sups;
  bool summable = true;
  std::string detail;
  for (double tau : {4e-3, 2e-3, 1e-3}) {
    ot::JkoConfig cfg;
    cfg.tau = tau;
    cfg.K = static_cast<int>(std::lround(0.1 / tau));
    cfg.grid = N;
    const int sub = 32;
    pde::SolverConfig sc;
    sc.T = 0.1;
    sc.dt = tau / sub;
    sc.diagnostics_every = sub;
    const pde::SolveResult ae = pde::solve(b.rho0, b.W.coeffs, b.V, sc);
    const ot::JkoTrajectory tr = ot::jko_trajectory(g0, cfg, F);
    // The piecewise-constant interpolant holds rho_k on [k tau, (k + 1) tau).
    double sup = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
      for (int j : {k, k + 1}) {
        const auto ref = ot::cell_average(ae.trajectory.states[static_cast<std::size_t>(j)], N);
        sup = std::max(sup, ot::wasserstein_circle(tr.states[static_cast<std::size_t>(k)], ref, 2));
      }
    }
    sups.push_back(sup);
    summable = summable && tr.summability_ok;
    detail += (detail.empty() ? "" : ", ") + std::string("tau ") + fmt(tau) + ": sup W2 " + fmt(sup) +
              ", summability " + fmt(tr.summability_lhs) + " <= " + fmt(tr.summability_rhs);
  }
  const bool ok = sups.back() <= 5e-2 && sups[1] < sups[0] && sups[2] < sups[1] && summable;
  return {ok, detail};
}

Outcome ac8() {
  const auto V = kernels::heat_kernel_coeffs(2, 0.1, 64);
  const ot::ContractionReport r = ot::convolution_contraction_check(V, 100, 2, 42);
  return {r.max_ratio <= 3.0, "empirical max W2 ratio " + fmt(r.max_ratio) + " over " + std::to_string(r.samples) +
                                  " pairs, seed " + std::to_string(r.seed) + " (bound 3)"};
}

Outcome ac9() {
  const geom::DivergenceCheck s2 = geom::geodesic_divergence_check(3, 100000, 9);
  const geom::DivergenceCheck s4 = geom::geodesic_divergence_check(5, 100000, 9);
  const double worst = std::max(s2.max_ratio, s4.max_ratio);
  const double par = std::max(s2.max_parallel_deviation, s4.max_parallel_deviation);
  return {worst <= 3.0 && par <= 1e-9, "max ratio S2 " + fmt(s2.max_ratio) + ", S4 " + fmt(s4.max_ratio) +
                                           " (bound 3); parallel case |ratio - 1| <= " + fmt(par) + " (tol 1e-9)"};
}

Outcome ac10() {
  using namespace sphagg::particles;
  const auto V = kernels::exponential_kernel_coeffs(3, 0.05, 64);
  const SphereQuadrature q = sphere_quadrature(3, 24);
  int synchronized = 0, separated = 0, bounded = 0, dissipative = 0;
  double worst_ratio = 0.0, worst_min = -1.0, worst_increase = 0.0;
  for (int s = 0; s < 20; ++s) {
    const auto X = ParticleEnsemble::hemisphere(3, 32, 1000 + static_cast<std::uint64_t>(s));
    SimulationConfig c;
    c.T = 50.0;
    c.dt = 0.01;
    c.record_every = 100;
    const ParticleTrajectory a = simulate(X, HeadConfig::attraction(1.0), c);
    const ParticleTrajectory r = simulate(X, HeadConfig::attraction_repulsion(3, 1.0, 0.05), c);
    synchronized += a.metrics.back().min_pair_inner >= 0.99;
    double max_min = -1.0;
    for (const auto& m : r.metrics) max_min = std::max(max_min, m.min_pair_inner);
    separated += max_min < 0.99;
    worst_min = std::max(worst_min, max_min);
    // Sup over a quadrature grid plus the particle positions themselves.
    double sup0 = 0.0, sup = 0.0;
    for (std::size_t k = 0; k < r.snapshots.size(); ++k) {
      std::vector<geom::SpherePoint> grid = q.points;
      for (auto& p : r.snapshots[k].points()) grid.push_back(p);
      const SmoothedDensity d = smoothed_density(r.snapshots[k], V, grid);
      const double m = *std::max_element(d.values.begin(), d.values.end());
      if (k == 0) sup0 = m;
      sup = std::max(sup, m);
    }
    bounded += sup <= 10.0 * sup0;
    worst_ratio = std::max(worst_ratio, sup / sup0);
    const double inc = std::max(a.max_energy_increase, r.max_energy_increase);
    dissipative += inc <= 1e-6;
    worst_increase = std::max(worst_increase, inc);
  }
  const bool ok = synchronized >= 19 && separated == 20 && bounded == 20 && dissipative == 20;
  return {ok, "attraction synchronized " + std::to_string(synchronized) + "/20 (need 19); with repulsion " +
                  std::to_string(separated) + "/20 stay apart (max min-inner " + fmt(worst_min) + "), sup ratio <= " +
                  fmt(worst_ratio) + " (bound 10); max energy increase " + fmt(worst_increase)};
}

Outcome ac11() {
  const std::vector<double> eps = {0.5, 0.2, 0.1, 0.05};
  bool ok = true;
  double sqrt_min = INFINITY;
  std::string failed;
  for (bool heat : {true, false}) {
    for (int n : {2, 3}) {
      const auto family = [heat, n](double e) {
        return heat ? kernels::heat_kernel_coeffs(n, e, 64) : kernels::exponential_kernel_coeffs(n, e, 64);
      };
      const bool adm = spectral::check_admissibility(family, eps).passed();
      bool pos = true;
      for (double e : eps) {
        const auto V = family(e);
        pos = pos && spectral::sqrt_is_nonnegative(V);
        sqrt_min = std::min(sqrt_min, spectral::check_sqrt_positivity(V));
      }
      if (!adm || !pos) {
        ok = false;
        failed += std::string(" ") + (heat ? "heat" : "exp") + "/n=" + std::to_string(n);
      }
    }
  }
  return {ok, "heat and exp, n = 2, 3, L = 64: " + std::string(ok ? "all admissible" : "failed:" + failed) +
                  "; min reconstructed sqrt(V) " + fmt(sqrt_min) + " (round-off level)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4},  {"AC-5", ac5},  {"AC-6", ac6},
      {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9}, {"AC-10", ac10}, {"AC-11", ac11}};
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %s %s [%.1f s]\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
