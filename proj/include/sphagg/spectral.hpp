#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace sphagg::spectral {

inline constexpr int kMaxDegree = 256;

/// Coefficients (c_l), 0 <= l <= L, of a zonal kernel or function in the Z_l basis.
class ZonalCoefficients {
 public:
  ZonalCoefficients(int n, std::vector<double> coeffs);

  int dim() const { return n_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  std::span<const double> coeffs() const { return c_; }
  double operator[](int l) const { return c_[static_cast<std::size_t>(l)]; }

  /// Copy truncated (or zero padded) to degree L.
  ZonalCoefficients resized(int L) const;

  bool operator==(const ZonalCoefficients&) const = default;

 private:
  int n_;
  std::vector<double> c_;
};

/// Gauss nodes for the pushforward of sigma under x -> <p, x>, weights summing to 1.
struct QuadratureGrid {
  int dim = 0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

struct ZonalFunction {
  QuadratureGrid grid;
  std::vector<double> values;
  std::optional<ZonalCoefficients> coeffs;
};

/// C_l^lambda(t) by the three-term recursion. Throws for lambda <= 0.
double gegenbauer_eval(double lambda, int l, double t);

/// Z_l(t); for n = 2 the Chebyshev limit Z_0 = 1, Z_l = 2 T_l.
double zonal_harmonic_eval(int n, int l, double t);

/// Z_l(1), the dimension of the degree-l harmonic space.
double zonal_harmonic_at_one(int n, int l);

/// Z_0(t), ..., Z_L(t) in one recursion.
std::vector<double> zonal_harmonic_table(int n, int L, double t);

/// Z_0'(t), ..., Z_L'(t).
std::vector<double> zonal_harmonic_derivative_table(int n, int L, double t);

QuadratureGrid build_quadrature(int n, int M);

/// M = 0 picks the default 2L + 8.
ZonalCoefficients decompose_kernel(const std::function<double(double)>& W, int n, int L,
                                   int M = 0);
ZonalCoefficients decompose_kernel(const ZonalFunction& f, int L);

double reconstruct_kernel(const ZonalCoefficients& c, double t);

ZonalFunction make_zonal_function(const QuadratureGrid& grid, const ZonalCoefficients& c);

/// Elementwise product, truncated to the smaller degree.
ZonalCoefficients convolve(const ZonalCoefficients& kernel, const ZonalCoefficients& f);

/// Elementwise sqrt; entries in [-1e-12, 0) are clamped to 0.
ZonalCoefficients sqrt_kernel(const ZonalCoefficients& V);

double laplacian_eigenvalue(int n, int l);

ZonalCoefficients heat_semigroup_apply(const ZonalCoefficients& f, double s);

struct DirichletCheck {
  double lhs = 0.0;  // -sum lambda_l V_l alpha_l^2 Z_l(1)
  double rhs = 0.0;  // quadrature of |d/dtheta (sqrt(V) * u)|^2
};

/// M = 0 picks the default 2L + 8.
DirichletCheck dirichlet_identity_check(const ZonalCoefficients& u, const ZonalCoefficients& V,
                                        int M = 0);

/// ||u - sqrt(V) * u||_{L^2}.
double delta_approx_error(const ZonalCoefficients& u, const ZonalCoefficients& V);

struct UniformApprox {
  double error = 0.0;
  bool positivity_ok = true;
  double sqrt_min = 0.0;
};

/// max over grid nodes of |u - sqrt(V) * u|.
UniformApprox uniform_approx_error(const ZonalFunction& u, const ZonalCoefficients& V);

/// Minimum of the reconstructed sqrt(V) on `samples` equispaced t in [-1, 1].
double check_sqrt_positivity(const ZonalCoefficients& V, int samples = 2001);

/// check_sqrt_positivity(V) >= -64 eps_mach sum_l |sqrt(V_l)| Z_l(1), i.e. nonnegative up to
/// the round-off of the reconstruction.
bool sqrt_is_nonnegative(const ZonalCoefficients& V, int samples = 2001);

struct AdmissibilityEntry {
  double eps = 0.0;
  bool nonnegative = false;
  bool normalized = false;
  bool bounded = false;
  bool tail_summable = false;
  double max_coeff = 0.0;
  double tail_slope = 0.0;  // slope of log(l^n V_l) over the last ten degrees
  double weighted_tail = 0.0;  // sum_{l <= L} l^n V_l
};

struct AdmissibilityReport {
  std::vector<AdmissibilityEntry> entries;
  bool monotone_limit = false;  // |1 - V_l| non-increasing as eps decreases, every l
  bool passed() const;
};

AdmissibilityReport check_admissibility(const std::function<ZonalCoefficients(double)>& family,
                                        std::vector<double> eps_list, double C = 1.0);

void write_coefficients_csv(std::ostream& os, const ZonalCoefficients& c);
ZonalCoefficients read_coefficients_csv(std::istream& is);

}  // namespace sphagg::spectral
