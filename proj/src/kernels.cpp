#include "sphagg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "sphagg/error.hpp"

namespace sphagg::kernels {

namespace {

constexpr double kMaxBesselArg = 1e6;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ParameterRangeError(std::string(what) + " must be positive and finite");
  }
}

// 1 / (b_k + 1 / (b_{k+1} + ...)) with b_j = 2 (nu + j) / x, modified Lentz.
double bessel_ratio_cf(double nu, double x, int k) {
  constexpr double tiny = 1e-300;
  auto b = [&](long j) { return 2.0 * (nu + static_cast<double>(j)) / x; };
  double f = b(k);
  if (f == 0.0) f = tiny;
  double C = f, D = 0.0;
  const long cap = 10'000'000;
  for (long j = k + 1; j < k + cap; ++j) {
    D = b(j) + D;
    if (D == 0.0) D = tiny;
    C = b(j) + 1.0 / C;
    if (C == 0.0) C = tiny;
    D = 1.0 / D;
    const double delta = C * D;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) return 1.0 / f;
  }
  throw NumericalError("Bessel ratio continued fraction did not converge");
}

}  // namespace

std::vector<double> bessel_ratios(double nu, double x, int count) {
  require_positive(x, "Bessel argument");
  if (x > kMaxBesselArg) {
    throw ParameterRangeError("Bessel argument 1/eps exceeds 1e6; eps is too small");
  }
  if (count < 0) throw ParameterRangeError("bessel_ratios needs count >= 0");
  const int top = count + 20;
  std::vector<double> r(static_cast<std::size_t>(top) + 1, 0.0);
  r[top] = bessel_ratio_cf(nu, x, top);
  for (int k = top - 1; k >= 1; --k) r[k] = 1.0 / (2.0 * (nu + k) / x + r[k + 1]);
  return std::vector<double>(r.begin() + 1, r.begin() + 1 + count);
}

ZonalCoefficients heat_kernel_coeffs(int n, double eps, int L) {
  require_positive(eps, "heat kernel eps");
  std::vector<double> c(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) c[l] = std::exp(spectral::laplacian_eigenvalue(n, l) * eps);
  return ZonalCoefficients(n, std::move(c));
}

ZonalCoefficients exponential_kernel_coeffs(int n, double eps, int L) {
  require_positive(eps, "exponential kernel eps");
  if (L < 0) throw ParameterRangeError("degree must be >= 0");
  const std::vector<double> r = bessel_ratios(0.5 * (n - 2), 1.0 / eps, L);
  std::vector<double> c(static_cast<std::size_t>(L) + 1);
  c[0] = 1.0;
  for (int l = 1; l <= L; ++l) c[l] = c[l - 1] * r[l - 1];
  return ZonalCoefficients(n, std::move(c));
}

double exponential_log_partition(int n, double x) {
  // log int exp(x t) dsigma = log(Gamma(n/2) (2/x)^nu I_nu(x)).
  if (n < 2) throw ParameterRangeError("sphere dimension n must be >= 2");
  require_positive(x, "exponential kernel argument");
  const double nu = 0.5 * (n - 2);
  double log_i;
  if (x <= 500.0) {
    log_i = std::log(std::cyl_bessel_i(nu, x));
  } else {
    // Large-argument expansion of exp(-x) I_nu(x) sqrt(2 pi x).
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 12; ++k) {
      term *= -(mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
      sum += term;
    }
    log_i = x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
  }
  return std::lgamma(0.5 * n) + nu * std::log(2.0 / x) + log_i;
}

double exponential_normalization(int n, double eps) {
  require_positive(eps, "exponential kernel eps");
  return std::exp(-exponential_log_partition(n, 1.0 / eps));
}

KernelWithEvaluator attraction_kernel(int n, double beta, int L, double alpha) {
  require_positive(beta, "attraction beta");
  auto eval = [beta, alpha](double t) { return -alpha / beta * std::exp(beta * t); };
  // Closed form of the decomposition: the partition function times the Bessel
  // ratios. Quadrature loses the sign of coefficients below round-off.
  const double scale = -alpha / beta * std::exp(exponential_log_partition(n, beta));
  ZonalCoefficients r = exponential_kernel_coeffs(n, 1.0 / beta, L);
  std::vector<double> c(r.coeffs().begin(), r.coeffs().end());
  for (double& v : c) v *= scale;
  return {ZonalCoefficients(n, std::move(c)), eval};
}

KernelWithEvaluator make_kernel(const KernelFamilySpec& spec, int L) {
  switch (spec.kind) {
    case KernelKind::heat: {
      ZonalCoefficients c = heat_kernel_coeffs(spec.n, spec.scale, L);
      // The pointwise heat kernel is only known through its series.
      ZonalCoefficients fine = heat_kernel_coeffs(spec.n, spec.scale, spectral::kMaxDegree);
      return {c, [fine](double t) { return spectral::reconstruct_kernel(fine, t); }};
    }
    case KernelKind::exponential: {
      const double x = 1.0 / spec.scale;
      const double logz = exponential_log_partition(spec.n, x);
      return {exponential_kernel_coeffs(spec.n, spec.scale, L),
              [x, logz](double t) { return std::exp(x * t - logz); }};
    }
    case KernelKind::attraction:
      return attraction_kernel(spec.n, spec.scale, L, spec.alpha);
    case KernelKind::custom_table: {
      if (!spec.table) throw ParameterRangeError("custom-table kernel has no loaded table");
      if (spec.table->dim() != spec.n) {
        throw DimensionMismatch("custom-table kernel dimension does not match n");
      }
      ZonalCoefficients c = spec.table->resized(L);
      ZonalCoefficients full = *spec.table;
      return {c, [full](double t) { return spectral::reconstruct_kernel(full, t); }};
    }
  }
  throw ParameterRangeError("unknown kernel kind");
}

double linf_norm(const std::function<double(double)>& W, int samples) {
  if (samples < 2) throw ParameterRangeError("linf_norm needs >= 2 samples");
  double m = 0.0;
  for (int i = 0; i < samples; ++i) {
    m = std::max(m, std::abs(W(-1.0 + 2.0 * i / (samples - 1))));
  }
  return m;
}

LaplacianNorm laplacian_linf(const ZonalCoefficients& W, int samples) {
  if (samples < 2) throw ParameterRangeError("laplacian_linf needs >= 2 samples");
  const int n = W.dim(), L = W.degree();
  std::vector<double> lc(static_cast<std::size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) lc[l] = spectral::laplacian_eigenvalue(n, l) * W[l];
  const ZonalCoefficients lap(n, lc);
  LaplacianNorm out;
  for (int i = 0; i < samples; ++i) {
    out.value = std::max(out.value,
                         std::abs(spectral::reconstruct_kernel(lap, -1.0 + 2.0 * i / (samples - 1))));
  }
  const double tail = std::abs(lc[L] * spectral::zonal_harmonic_at_one(n, L));
  out.truncation_warning = L > 0 && tail > 1e-8 * out.value;
  return out;
}

}  // namespace sphagg::kernels
