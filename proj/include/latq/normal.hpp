#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "latq/errors.hpp"

namespace latq {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;
inline constexpr double kSqrt2 = 1.4142135623730950488;

// Standard normal density. All normal math is done in double regardless of
// tensor payload precision.
inline double std_normal_pdf(double x) {
  if (!std::isfinite(x)) {
    throw validation_error("std_normal_pdf: non-finite input");
  }
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Phi(x) via erfc; absolute error well under 1e-10 on |x| <= 8.
inline double std_normal_cdf(double x) {
  if (!std::isfinite(x)) {
    throw validation_error("std_normal_cdf: non-finite input");
  }
  return 0.5 * std::erfc(-x / kSqrt2);
}

namespace detail {

// Acklam's rational approximation to the normal quantile (relative error
// ~1.15e-9); used as the starting point only.
inline double inv_cdf_estimate(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double s = q * q;
  return (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * q /
         (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
}

}  // namespace detail

// Inverse of std_normal_cdf on the open interval (0, 1). A Newton step
// against the cdf pins the result to ~1e-15 regardless of the seed
// approximation's accuracy.
inline double std_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw validation_error("std_normal_inv_cdf: p must lie strictly in (0, 1), got " +
                           std::to_string(p));
  }
  double x = detail::inv_cdf_estimate(p);
  double err = std_normal_cdf(x) - p;
  double dens = std_normal_pdf(x);
  if (dens > 0.0) {
    x -= err / dens;
  }
  return x;
}

}  // namespace latq
