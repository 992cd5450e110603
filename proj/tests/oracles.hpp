#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's quadrature or recursions.

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

// Gauss-Legendre nodes/weights on [a, b] via Newton on the Legendre recursion.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int m, double a,
                                                                          double b) {
  std::vector<double> x(m), w(m);
  for (int i = 0; i < m; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= m; ++k) {
      const double p2 = ((2.0 * k - 1) * t * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = m * (t * p1 - p0) / (t * t - 1.0);
    x[i] = 0.5 * (a + b) + 0.5 * (b - a) * t;
    w[i] = (b - a) / ((1.0 - t * t) * dp * dp);
  }
  return {x, w};
}

// Power series for I_nu(x) in long double.
inline long double bessel_i_series(long double nu, long double x) {
  const long double h = x / 2;
  long double term = std::pow(h, nu) / std::tgamma(nu + 1);
  long double sum = term;
  for (int k = 1; k < 100000; ++k) {
    term *= h * h / (k * (k + nu));
    sum += term;
    if (term < sum * 1e-21L) break;
  }
  return sum;
}

// Legendre polynomial P_l(t) by explicit sum (n = 3 zonal oracle, Z_l = (2l+1) P_l).
inline double legendre(int l, double t) {
  double p0 = 1.0, p1 = t;
  if (l == 0) return 1.0;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1) * t * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

}  // namespace oracle
