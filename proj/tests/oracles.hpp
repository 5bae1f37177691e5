#pragma once
// Independent reference implementations used by the unit and acceptance tests.
// Nothing here calls into the optimized evaluation paths of the library.

#include "cde/density.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using cde::Complex;
using cde::DensityParams;

/// Full-spectrum entry a_d(k, f) for k in [-K, K].
inline Complex factor_entry(const DensityParams& p, int d, int k, int f) {
  if (k == 0) return {1.0, 0.0};
  if (k > 0) return p.c(d, k, f);
  return std::conj(p.c(d, -k, f));
}

/// Materializes the (2K+1)^D tensor Phi[k] = sum_f lambda_f prod_d a_d(k_d, f)
/// and sums Phi[k] exp(-j 2 pi k.z) directly.  Returns the complex total so
/// callers can check the imaginary part.
inline Complex full_tensor_density(const DensityParams& p, const std::vector<double>& z) {
  const int side = 2 * p.K + 1;
  std::size_t cells = 1;
  for (int d = 0; d < p.D; ++d) cells *= static_cast<std::size_t>(side);

  std::vector<Complex> phi(cells, Complex(0.0, 0.0));
  std::vector<int> k(static_cast<std::size_t>(p.D));
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t r = idx;
    for (int d = 0; d < p.D; ++d) {
      k[static_cast<std::size_t>(d)] = static_cast<int>(r % static_cast<std::size_t>(side)) - p.K;
      r /= static_cast<std::size_t>(side);
    }
    for (int f = 0; f < p.F; ++f) {
      Complex prod(p.lambda(f), 0.0);
      for (int d = 0; d < p.D; ++d) prod *= factor_entry(p, d, k[static_cast<std::size_t>(d)], f);
      phi[idx] += prod;
    }
  }

  Complex total(0.0, 0.0);
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t r = idx;
    double phase = 0.0;
    for (int d = 0; d < p.D; ++d) {
      const int kd = static_cast<int>(r % static_cast<std::size_t>(side)) - p.K;
      r /= static_cast<std::size_t>(side);
      phase += kd * z[static_cast<std::size_t>(d)];
    }
    total += phi[idx] * std::exp(Complex(0.0, -2.0 * std::numbers::pi * phase));
  }
  return total;
}

/// Central difference of a scalar function along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& fn,
                                 std::vector<double> x, std::size_t i, double h = 1e-5) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = fn(x);
  x[i] = x0 - h;
  const double down = fn(x);
  return (up - down) / (2.0 * h);
}

/// Relative error with a small absolute floor so exact zeros compare sanely.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Squared distance minimizer over the 3-simplex by exhaustive grid search:
/// a coarse pass over the whole simplex followed by a fine pass around the
/// coarse winner.
inline std::vector<double> brute_simplex3(const std::vector<double>& v) {
  auto cost = [&](double a, double b) {
    const double c = 1.0 - a - b;
    return (a - v[0]) * (a - v[0]) + (b - v[1]) * (b - v[1]) + (c - v[2]) * (c - v[2]);
  };
  double best_a = 0.0, best_b = 0.0, best = cost(0.0, 0.0);
  const int coarse = 200;
  for (int i = 0; i <= coarse; ++i) {
    for (int j = 0; i + j <= coarse; ++j) {
      const double a = static_cast<double>(i) / coarse, b = static_cast<double>(j) / coarse;
      const double c = cost(a, b);
      if (c < best) best = c, best_a = a, best_b = b;
    }
  }
  const int fine = 20000;
  const int window = 200;  // +/- 0.01
  const int ca = static_cast<int>(std::lround(best_a * fine));
  const int cb = static_cast<int>(std::lround(best_b * fine));
  for (int i = std::max(0, ca - window); i <= std::min(fine, ca + window); ++i) {
    for (int j = std::max(0, cb - window); j <= std::min(fine - i, cb + window); ++j) {
      const double a = static_cast<double>(i) / fine, b = static_cast<double>(j) / fine;
      const double c = cost(a, b);
      if (c < best) best = c, best_a = a, best_b = b;
    }
  }
  return {best_a, best_b, 1.0 - best_a - best_b};
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& g, double a, double b, int n = 2000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = g(a) + g(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * g(a + i * h);
  return s * h / 3.0;
}

/// Midpoint Riemann sum of the density over an n x n grid on [0,1]^2.
inline double grid_integral_2d(const DensityParams& p, int n) {
  double s = 0.0;
  std::vector<double> z(2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      z[0] = (i + 0.5) / n;
      z[1] = (j + 0.5) / n;
      s += cde::density_eval(p, std::span<const double>(z));
    }
  }
  return s / (static_cast<double>(n) * n);
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  return d;
}

}  // namespace oracle
