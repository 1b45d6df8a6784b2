#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "latq/errors.hpp"
#include "latq/tensor.hpp"

// Channel ordering by spectral content: channels whose energy concentrates
// near DC come first. The DFT is the naive O((HW)^2) sum, which is exact and
// plenty fast for the small spatial maps this library targets.

namespace latq {

struct Spectrum {
  int64_t h = 0, w = 0;
  std::vector<std::complex<double>> data;  // row-major, data[u*w + v]

  const std::complex<double>& at(int64_t u, int64_t v) const {
    return data[static_cast<size_t>(u * w + v)];
  }
};

struct ChannelOrder {
  std::vector<int> permutation;  // channel indices, highest ratio first
  std::vector<double> ratios;    // indexed by original channel
};

// F(u,v) = sum_{h,w} x(h,w) * exp(-2*pi*i*(u*h/H + v*w/W)).
inline Spectrum dft2(const std::vector<double>& map, int64_t h, int64_t w) {
  if (h < 2 || w < 2) {
    throw validation_error("dft2: spatial dims must be >= 2, got " +
                           std::to_string(h) + "x" + std::to_string(w));
  }
  if (static_cast<int64_t>(map.size()) != h * w) {
    throw validation_error("dft2: map size does not match dims");
  }
  // Twiddle tables: exp(-2*pi*i*k/H), indexed by (u*h) mod H.
  std::vector<std::complex<double>> tw_h(static_cast<size_t>(h));
  std::vector<std::complex<double>> tw_w(static_cast<size_t>(w));
  for (int64_t k = 0; k < h; ++k) {
    double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(h);
    tw_h[static_cast<size_t>(k)] = {std::cos(a), std::sin(a)};
  }
  for (int64_t k = 0; k < w; ++k) {
    double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(w);
    tw_w[static_cast<size_t>(k)] = {std::cos(a), std::sin(a)};
  }
  Spectrum out;
  out.h = h;
  out.w = w;
  out.data.assign(static_cast<size_t>(h * w), {0.0, 0.0});
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      std::complex<double> acc{0.0, 0.0};
      for (int64_t y = 0; y < h; ++y) {
        const std::complex<double> row = tw_h[static_cast<size_t>((u * y) % h)];
        for (int64_t x = 0; x < w; ++x) {
          acc += map[static_cast<size_t>(y * w + x)] * row *
                 tw_w[static_cast<size_t>((v * x) % w)];
        }
      }
      out.data[static_cast<size_t>(u * w + v)] = acc;
    }
  }
  return out;
}

namespace detail {

// Share of |F|^2 lying within Euclidean distance radius_frac*min(H,W) of DC
// on the centered spectrum. Distances are integers squared, so the disk
// membership test is exact.
inline double ratio_from_power(const std::vector<double>& power, int64_t h, int64_t w,
                               double radius_frac) {
  if (!(radius_frac > 0.0 && radius_frac <= 0.5)) {
    throw validation_error("radius_frac must lie in (0, 0.5], got " +
                           std::to_string(radius_frac));
  }
  double radius = radius_frac * static_cast<double>(std::min(h, w));
  double r2 = radius * radius;
  // Bins this far below the peak are round-off leakage from the DFT sums
  // (analytically-zero bins land around 1e-26 of the peak), not signal.
  // Flushing them keeps ratios of pure patterns exact without touching any
  // bin that carries real energy.
  constexpr double kNoiseFloor = 1e-20;
  double peak = 0.0;
  for (double p : power) peak = std::max(peak, p);
  const double cutoff = peak * kNoiseFloor;
  double low = 0.0, total = 0.0;
  for (int64_t u = 0; u < h; ++u) {
    int64_t du = std::min(u, h - u);
    for (int64_t v = 0; v < w; ++v) {
      int64_t dv = std::min(v, w - v);
      double p = power[static_cast<size_t>(u * w + v)];
      if (p <= cutoff) continue;
      total += p;
      if (static_cast<double>(du * du + dv * dv) <= r2) low += p;
    }
  }
  if (total == 0.0) return 1.0;  // all-zero map: no energy anywhere
  return low / total;
}

}  // namespace detail

inline double low_freq_ratio(const Spectrum& spectrum, double radius_frac) {
  std::vector<double> power(spectrum.data.size());
  for (size_t i = 0; i < spectrum.data.size(); ++i) {
    power[i] = std::norm(spectrum.data[i]);
  }
  return detail::ratio_from_power(power, spectrum.h, spectrum.w, radius_frac);
}

// One channel of one sample as an H*W map.
inline std::vector<double> channel_map(const LatentTensor& t, int64_t n, int64_t c) {
  std::vector<double> map(static_cast<size_t>(t.shape.h * t.shape.w));
  for (int64_t y = 0; y < t.shape.h; ++y) {
    for (int64_t x = 0; x < t.shape.w; ++x) {
      map[static_cast<size_t>(y * t.shape.w + x)] =
          static_cast<double>(t.at(n, y, x, c));
    }
  }
  return map;
}

// Ratios from dataset-averaged power spectra; permutation sorts channels by
// descending ratio, ties resolving to the lower original index.
inline ChannelOrder order_channels(const LatentTensor& batch, double radius_frac) {
  const int64_t c = batch.shape.c;
  ChannelOrder order;
  order.ratios.resize(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> power(static_cast<size_t>(batch.shape.h * batch.shape.w), 0.0);
    for (int64_t n = 0; n < batch.shape.n; ++n) {
      Spectrum s = dft2(channel_map(batch, n, ch), batch.shape.h, batch.shape.w);
      for (size_t i = 0; i < power.size(); ++i) power[i] += std::norm(s.data[i]);
    }
    order.ratios[static_cast<size_t>(ch)] =
        detail::ratio_from_power(power, batch.shape.h, batch.shape.w, radius_frac);
  }
  order.permutation.resize(static_cast<size_t>(c));
  std::iota(order.permutation.begin(), order.permutation.end(), 0);
  std::stable_sort(order.permutation.begin(), order.permutation.end(),
                   [&](int a, int b) {
                     return order.ratios[static_cast<size_t>(a)] >
                            order.ratios[static_cast<size_t>(b)];
                   });
  return order;
}

}  // namespace latq
