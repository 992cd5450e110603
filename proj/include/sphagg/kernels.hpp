#pragma once

#include <functional>
#include <optional>
#include <string>

#include "sphagg/spectral.hpp"

namespace sphagg::kernels {

using spectral::ZonalCoefficients;

enum class KernelKind { heat, exponential, attraction, custom_table };

struct KernelFamilySpec {
  KernelKind kind = KernelKind::heat;
  int n = 2;
  double scale = 0.1;  // eps for heat/exponential, beta for attraction
  double alpha = 1.0;  // head weight; only used by attraction
  std::string table_path;  // custom_table only
  std::optional<ZonalCoefficients> table;
};

/// exp(-l (l + n - 2) eps).
ZonalCoefficients heat_kernel_coeffs(int n, double eps, int L);

/// I_{l+nu}(1/eps) / I_nu(1/eps), nu = (n - 2) / 2.
ZonalCoefficients exponential_kernel_coeffs(int n, double eps, int L);

/// Ratios r_k = I_{nu+k}(x) / I_{nu+k-1}(x) for k = 1..count.
std::vector<double> bessel_ratios(double nu, double x, int count);

/// log of int exp(x t) dsigma(t) over S^{n-1}.
double exponential_log_partition(int n, double x);

/// alpha_eps = 1 / int exp(t / eps) dsigma, the prefactor that makes the
/// exponential kernel a probability kernel.
double exponential_normalization(int n, double eps);

struct KernelWithEvaluator {
  ZonalCoefficients coeffs;
  std::function<double(double)> eval;
};

/// alpha * (-1/beta) exp(beta t).
KernelWithEvaluator attraction_kernel(int n, double beta, int L, double alpha = 1.0);

/// Coefficients and pointwise values for any family spec at degree L.
KernelWithEvaluator make_kernel(const KernelFamilySpec& spec, int L);

/// max |W(t)| on a dense uniform t grid including both endpoints.
double linf_norm(const std::function<double(double)>& W, int samples = 4001);

struct LaplacianNorm {
  double value = 0.0;
  bool truncation_warning = false;
};

/// max |sum lambda_l W_l Z_l(t)| on a dense t grid.
LaplacianNorm laplacian_linf(const ZonalCoefficients& W, int samples = 4001);

}  // namespace sphagg::kernels
