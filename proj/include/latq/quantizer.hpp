#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/normal.hpp"
#include "latq/tensor.hpp"

namespace latq {

enum class QuantScheme { gaussian, linear };

inline const char* scheme_name(QuantScheme s) {
  return s == QuantScheme::gaussian ? "gaussian" : "linear";
}

inline QuantScheme scheme_from_name(const std::string& s) {
  if (s == "gaussian") return QuantScheme::gaussian;
  if (s == "linear") return QuantScheme::linear;
  throw validation_error("unknown quantization scheme '" + s + "'");
}

struct QuantizerSpec {
  int levels = 64;            // B
  double half_range = 3.0;    // r
  double alpha_min = -5.0;
  double alpha_max = 5.0;
  QuantScheme scheme = QuantScheme::gaussian;

  void validate() const {
    if (levels < 2) throw validation_error("B must be ≥ 2");
    if (!(half_range > 0.0)) throw validation_error("r must be positive");
    if (!(alpha_min < alpha_max)) {
      throw validation_error("alpha_min must be below alpha_max");
    }
  }

  bool operator==(const QuantizerSpec&) const = default;
};

// Scalar codec for one configuration: cell boundaries on the normalized
// axis, per-level reconstruction values, and the midpoints that realize the
// nearest-reconstruction encoding rule. Immutable once built.
struct QuantizerGrid {
  QuantizerSpec spec;
  std::vector<double> boundaries;  // B+1; +-inf sentinels for the gaussian scheme
  std::vector<double> recon;       // B, strictly increasing, within [-r, r]
  std::vector<double> midpoints;   // B-1, interleaving recon
};

namespace detail {

inline std::vector<double> midpoints_of(const std::vector<double>& recon) {
  std::vector<double> mids(recon.size() - 1);
  for (size_t i = 0; i + 1 < recon.size(); ++i) {
    mids[i] = 0.5 * (recon[i] + recon[i + 1]);
  }
  return mids;
}

}  // namespace detail

// Equal-probability cells of the standard normal; reconstruction value of a
// cell is its conditional mean B*(pdf(b_i) - pdf(b_{i+1})), clipped to
// [-r, r] (inactive for B <= 64).
inline QuantizerGrid build_gaussian_grid(const QuantizerSpec& spec) {
  spec.validate();
  if (spec.scheme != QuantScheme::gaussian) {
    throw validation_error("build_gaussian_grid requires the gaussian scheme");
  }
  const int b = spec.levels;
  QuantizerGrid grid;
  grid.spec = spec;
  grid.boundaries.resize(b + 1);
  grid.boundaries[0] = -std::numeric_limits<double>::infinity();
  grid.boundaries[b] = std::numeric_limits<double>::infinity();
  // Build the lower half and mirror it, so the grid is symmetric to the bit
  // (a value of exactly 0 must tie at the central midpoint, not near it).
  for (int i = 1; i <= b / 2; ++i) {
    grid.boundaries[i] = std_normal_inv_cdf(static_cast<double>(i) / b);
    grid.boundaries[b - i] = -grid.boundaries[i];
  }
  if (b % 2 == 0) grid.boundaries[b / 2] = 0.0;
  grid.recon.resize(b);
  for (int i = 0; i < (b + 1) / 2; ++i) {
    double lo = grid.boundaries[i];
    double hi = grid.boundaries[i + 1];
    double pdf_lo = std::isinf(lo) ? 0.0 : std_normal_pdf(lo);
    double pdf_hi = std::isinf(hi) ? 0.0 : std_normal_pdf(hi);
    double gamma =
        std::clamp(b * (pdf_lo - pdf_hi), -spec.half_range, spec.half_range);
    grid.recon[i] = gamma;
    grid.recon[b - 1 - i] = -gamma;
  }
  if (b % 2 == 1) grid.recon[b / 2] = 0.0;
  grid.midpoints = detail::midpoints_of(grid.recon);
  return grid;
}

// B equal-width cells over [-r, r], reconstruction at cell centers.
inline QuantizerGrid build_linear_grid(const QuantizerSpec& spec) {
  spec.validate();
  if (spec.scheme != QuantScheme::linear) {
    throw validation_error("build_linear_grid requires the linear scheme");
  }
  const int b = spec.levels;
  const double r = spec.half_range;
  const double step = 2.0 * r / b;
  QuantizerGrid grid;
  grid.spec = spec;
  grid.boundaries.resize(b + 1);
  grid.recon.resize(b);
  for (int i = 0; i <= b; ++i) grid.boundaries[i] = -r + i * step;
  for (int i = 0; i < b; ++i) grid.recon[i] = -r + (i + 0.5) * step;
  grid.midpoints = detail::midpoints_of(grid.recon);
  return grid;
}

inline QuantizerGrid build_grid(const QuantizerSpec& spec) {
  return spec.scheme == QuantScheme::gaussian ? build_gaussian_grid(spec)
                                              : build_linear_grid(spec);
}

// Affine map of the feature range [alpha_min, alpha_max] onto [-r, r],
// clipping anything outside.
inline double normalize(double x, const QuantizerSpec& spec) {
  double v = 2.0 * spec.half_range * (x - spec.alpha_min) /
                 (spec.alpha_max - spec.alpha_min) -
             spec.half_range;
  return std::clamp(v, -spec.half_range, spec.half_range);
}

// Exact inverse of the un-clipped affine part of normalize.
inline double denormalize(double v, const QuantizerSpec& spec) {
  if (!(v >= -spec.half_range && v <= spec.half_range)) {
    throw validation_error("denormalize: value " + std::to_string(v) +
                           " outside [-r, r]");
  }
  return (v + spec.half_range) / (2.0 * spec.half_range) *
             (spec.alpha_max - spec.alpha_min) +
         spec.alpha_min;
}

// Nearest reconstruction value, realized as a binary search over midpoints.
// A value exactly on a midpoint takes the lower index.
inline int encode_scalar(double v_norm, const QuantizerGrid& grid) {
  auto it = std::lower_bound(grid.midpoints.begin(), grid.midpoints.end(), v_norm);
  return static_cast<int>(it - grid.midpoints.begin());
}

inline double decode_scalar(int index, const QuantizerGrid& grid) {
  if (index < 0 || index >= grid.spec.levels) {
    throw validation_error("decode_scalar: index " + std::to_string(index) +
                           " out of range [0, " + std::to_string(grid.spec.levels) +
                           ")");
  }
  return denormalize(grid.recon[index], grid.spec);
}

inline TokenTensor encode_tensor(const LatentTensor& t, const QuantizerGrid& grid) {
  TokenTensor out(t.shape.n, t.shape.h, t.shape.w, t.shape.c);
  for (int64_t i = 0; i < t.shape.elements(); ++i) {
    float x = t.data[static_cast<size_t>(i)];
    if (!std::isfinite(x)) {
      int64_t rem = i;
      int64_t c = rem % t.shape.c; rem /= t.shape.c;
      int64_t w = rem % t.shape.w; rem /= t.shape.w;
      int64_t h = rem % t.shape.h; rem /= t.shape.h;
      throw validation_error("encode_tensor: non-finite value at (" +
                             std::to_string(rem) + ", " + std::to_string(h) + ", " +
                             std::to_string(w) + ", " + std::to_string(c) + ")");
    }
    out.data[static_cast<size_t>(i)] =
        static_cast<uint16_t>(encode_scalar(normalize(x, grid.spec), grid));
  }
  return out;
}

inline LatentTensor decode_tensor(const TokenTensor& t, const QuantizerGrid& grid) {
  // Decode each level once; elements are pure lookups.
  std::vector<float> decoded(grid.spec.levels);
  for (int i = 0; i < grid.spec.levels; ++i) {
    decoded[i] = static_cast<float>(decode_scalar(i, grid));
  }
  LatentTensor out(t.shape.n, t.shape.h, t.shape.w, t.shape.c);
  for (int64_t i = 0; i < t.shape.elements(); ++i) {
    uint16_t q = t.data[static_cast<size_t>(i)];
    if (q >= grid.spec.levels) {
      throw validation_error("decode_tensor: token " + std::to_string(q) +
                             " out of range for B=" + std::to_string(grid.spec.levels));
    }
    out.data[static_cast<size_t>(i)] = decoded[q];
  }
  return out;
}

// Packs each run of k channel tokens into one mixed-radix integer, first
// channel least significant. Inverse is ungroup_tokens.
inline Tensor4<uint64_t> group_tokens(const TokenTensor& t, int k, int levels) {
  if (k < 1) throw validation_error("group_tokens: k must be >= 1");
  if (levels < 2) throw validation_error("B must be ≥ 2");
  if (t.shape.c % k != 0) {
    throw validation_error("group_tokens: C=" + std::to_string(t.shape.c) +
                           " not divisible by k=" + std::to_string(k));
  }
  double bits = k * std::log2(static_cast<double>(levels));
  if (bits > 63.0) {
    throw validation_error("group_tokens: B^k exceeds 64-bit range (" +
                           std::to_string(bits) + " bits)");
  }
  Tensor4<uint64_t> out(t.shape.n, t.shape.h, t.shape.w, t.shape.c / k);
  const int64_t groups = out.shape.elements();
  for (int64_t g = 0; g < groups; ++g) {
    uint64_t packed = 0;
    uint64_t radix = 1;
    for (int j = 0; j < k; ++j) {
      uint16_t q = t.data[static_cast<size_t>(g * k + j)];
      if (q >= levels) {
        throw validation_error("group_tokens: token " + std::to_string(q) +
                               " out of range for B=" + std::to_string(levels));
      }
      packed += q * radix;
      radix *= static_cast<uint64_t>(levels);
    }
    out.data[static_cast<size_t>(g)] = packed;
  }
  return out;
}

inline TokenTensor ungroup_tokens(const Tensor4<uint64_t>& t, int k, int levels) {
  if (k < 1) throw validation_error("ungroup_tokens: k must be >= 1");
  if (levels < 2) throw validation_error("B must be ≥ 2");
  TokenTensor out(t.shape.n, t.shape.h, t.shape.w, t.shape.c * k);
  for (int64_t g = 0; g < t.shape.elements(); ++g) {
    uint64_t packed = t.data[static_cast<size_t>(g)];
    for (int j = 0; j < k; ++j) {
      out.data[static_cast<size_t>(g * k + j)] =
          static_cast<uint16_t>(packed % levels);
      packed /= static_cast<uint64_t>(levels);
    }
    if (packed != 0) {
      throw validation_error("ungroup_tokens: packed value exceeds B^k");
    }
  }
  return out;
}

namespace detail {

inline void append_real17(std::string& out, double v) {
  if (std::isinf(v)) {
    out += v > 0 ? "\"inf\"" : "\"-inf\"";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace detail

// JSON export with 17-significant-digit reals; infinite sentinels become
// the strings "-inf"/"inf".
inline std::string grid_to_json(const QuantizerGrid& grid) {
  std::string out = "{\"scheme\": \"";
  out += scheme_name(grid.spec.scheme);
  out += "\", \"B\": " + std::to_string(grid.spec.levels);
  out += ", \"r\": ";
  detail::append_real17(out, grid.spec.half_range);
  out += ", \"alpha_min\": ";
  detail::append_real17(out, grid.spec.alpha_min);
  out += ", \"alpha_max\": ";
  detail::append_real17(out, grid.spec.alpha_max);
  out += ", \"boundaries\": [";
  for (size_t i = 0; i < grid.boundaries.size(); ++i) {
    if (i) out += ", ";
    detail::append_real17(out, grid.boundaries[i]);
  }
  out += "], \"recon\": [";
  for (size_t i = 0; i < grid.recon.size(); ++i) {
    if (i) out += ", ";
    detail::append_real17(out, grid.recon[i]);
  }
  out += "]}";
  return out;
}

}  // namespace latq
