// Test-only reference computations. Everything here is deliberately
// independent of the library implementation paths it is used to check:
// the cdf is a power series / continued fraction rather than erfc, the
// quantile is plain bisection, and expectations come from composite
// trapezoid quadrature.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

inline long double normal_density(long double x) {
  const long double inv_sqrt_2pi = 0.398942280401432677939946L;
  return inv_sqrt_2pi * std::exp(-0.5L * x * x);
}

// Double-precision density for quadrature integrands, where step size, not
// arithmetic precision, limits accuracy.
inline double normal_density_d(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

// erf via Maclaurin series, adequate for |t| <= 3.
inline long double erf_series(long double t) {
  const long double two_over_sqrt_pi = 1.128379167095512573896L;
  long double term = t;
  long double sum = 0.0L;
  for (int n = 0; n < 200; ++n) {
    long double contrib = term / (2 * n + 1);
    sum += (n % 2 == 0) ? contrib : -contrib;
    term *= t * t / (n + 1);
    if (std::fabs(term) < 1e-22L * std::fabs(sum) && n > 3) break;
  }
  return two_over_sqrt_pi * sum;
}

// erfc via the Laplace continued fraction (modified Lentz), for t >= 3.
inline long double erfc_cf(long double t) {
  const long double tiny = 1e-30L;
  long double f = tiny, c = f, d = 0.0L;
  for (int k = 0; k < 300; ++k) {
    // continued fraction: 1/(t + (1/2)/(t + 1/(t + (3/2)/(t + ...))))
    long double a = (k == 0) ? 1.0L : k / 2.0L;
    d = t + a * d;
    if (d == 0.0L) d = tiny;
    c = t + a / c;
    if (c == 0.0L) c = tiny;
    d = 1.0L / d;
    long double delta = c * d;
    f *= delta;
    if (std::fabs(delta - 1.0L) < 1e-21L) break;
  }
  const long double inv_sqrt_pi = 0.564189583547756286948L;
  return inv_sqrt_pi * std::exp(-t * t) * f;
}

inline long double std_normal_cdf(long double x) {
  if (std::isinf(x)) return x < 0 ? 0.0L : 1.0L;
  long double t = -x / 1.414213562373095048802L;  // erfc argument for Phi
  if (t <= -3.0L) return 1.0L - 0.5L * erfc_cf(-t);
  if (t >= 3.0L) return 0.5L * erfc_cf(t);
  return 0.5L * (1.0L - erf_series(t));
}

inline double std_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("oracle quantile: bad p");
  long double lo = -40.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    long double mid = 0.5L * (lo + hi);
    if (std_normal_cdf(mid) < static_cast<long double>(p)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return static_cast<double>(0.5L * (lo + hi));
}

// Composite trapezoid rule with Kahan-compensated accumulation.
inline double trapezoid(const std::function<double(double)>& f, double a, double b,
                        int64_t n) {
  double h = (b - a) / static_cast<double>(n);
  double sum = 0.5 * (f(a) + f(b));
  double comp = 0.0;
  for (int64_t i = 1; i < n; ++i) {
    double y = f(a + h * static_cast<double>(i)) - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum * h;
}

struct CellMean {
  double probability;
  double mean;
};

// Conditional mean of the standard normal on [a, b] by quadrature.
// Infinite bounds are truncated at +-12 where the density is ~1e-32.
inline CellMean normal_cell_mean(double a, double b) {
  double lo = std::isinf(a) ? -12.0 : a;
  double hi = std::isinf(b) ? 12.0 : b;
  int64_t n = std::max<int64_t>(4000, static_cast<int64_t>((hi - lo) / 1e-5));
  auto pdf = [](double x) { return normal_density_d(x); };
  auto xpdf = [](double x) { return x * normal_density_d(x); };
  double mass = trapezoid(pdf, lo, hi, n);
  double first = trapezoid(xpdf, lo, hi, n);
  return {mass, first / mass};
}

// Expected squared error of the nearest-reconstruction quantizer applied to
// clip(xi, -r, r), xi ~ N(0,1): integrate (clip(xi) - recon[i])^2 over each
// midpoint cell.
inline double clipped_quantizer_mse(const std::vector<double>& recon, double r) {
  size_t b = recon.size();
  std::vector<double> edges(b + 1);
  edges[0] = -12.0;
  edges[b] = 12.0;
  for (size_t i = 0; i + 1 < b; ++i) edges[i + 1] = 0.5 * (recon[i] + recon[i + 1]);
  double total = 0.0;
  for (size_t i = 0; i < b; ++i) {
    double gamma = recon[i];
    auto f = [&](double x) {
      double v = std::clamp(x, -r, r) - gamma;
      return v * v * normal_density_d(x);
    };
    int64_t n = std::max<int64_t>(2000,
                                  static_cast<int64_t>((edges[i + 1] - edges[i]) * 4e4));
    total += trapezoid(f, edges[i], edges[i + 1], n);
  }
  return total;
}

// Plug-in entropy (nats) from integer counts.
inline double counting_entropy(const std::vector<int64_t>& counts) {
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  double h = 0.0;
  for (int64_t c : counts) {
    if (c > 0) {
      double p = static_cast<double>(c) / static_cast<double>(total);
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace oracle
