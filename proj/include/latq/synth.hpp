#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/rng.hpp"
#include "latq/tensor.hpp"

// Synthetic latent generators with known statistics, used to exercise the
// codec and the token head without any real encoder in the loop. Every
// preset produces (approximately) unit-variance channels and is bit-level
// deterministic for a fixed seed.

namespace latq {

enum class SynthPreset { independent, equicorrelated, copy_channel, smooth_vs_noise };

inline const char* synth_preset_name(SynthPreset p) {
  switch (p) {
    case SynthPreset::independent: return "independent";
    case SynthPreset::equicorrelated: return "equicorrelated";
    case SynthPreset::copy_channel: return "copy_channel";
    case SynthPreset::smooth_vs_noise: return "smooth_vs_noise";
  }
  throw validation_error("unknown synthetic preset");
}

inline SynthPreset synth_preset_from_name(const std::string& s) {
  if (s == "independent") return SynthPreset::independent;
  if (s == "equicorrelated") return SynthPreset::equicorrelated;
  if (s == "copy_channel") return SynthPreset::copy_channel;
  if (s == "smooth_vs_noise") return SynthPreset::smooth_vs_noise;
  throw validation_error("unknown synthetic preset '" + s + "'");
}

struct SynthSpec {
  int64_t n = 1;
  int64_t h = 16;
  int64_t w = 16;
  int64_t c = 16;
  SynthPreset preset = SynthPreset::independent;
  double rho = 0.0;  // equicorrelated only
  uint64_t seed = 0;

  void validate() const {
    if (n < 1 || h < 1 || w < 1 || c < 1) {
      throw validation_error("synthetic shape dims must be positive");
    }
    if (preset == SynthPreset::equicorrelated) {
      double lo = c > 1 ? -1.0 / static_cast<double>(c - 1) : -1.0;
      if (!(rho > lo && rho < 1.0)) {
        throw validation_error("rho must lie in (" + std::to_string(lo) +
                               ", 1) for " + std::to_string(c) + " channels");
      }
    }
    if ((preset == SynthPreset::copy_channel ||
         preset == SynthPreset::smooth_vs_noise) &&
        c < 2) {
      throw validation_error("preset needs at least 2 channels");
    }
  }
};

namespace detail {

// Lower-triangular Cholesky factor of the equicorrelated covariance
// (1-rho) I + rho 11^T, computed numerically (C is small).
inline std::vector<double> equicorrelated_cholesky(int64_t c, double rho) {
  size_t n = static_cast<size_t>(c);
  std::vector<double> a(n * n, rho);
  for (size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  std::vector<double> l(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double acc = a[i * n + j];
      for (size_t k = 0; k < j; ++k) acc -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(acc > 0.0)) {
          throw numeric_error("correlation matrix is not positive definite");
        }
        l[i * n + i] = std::sqrt(acc);
      } else {
        l[i * n + j] = acc / l[j * n + j];
      }
    }
  }
  return l;
}

}  // namespace detail

inline LatentTensor gen_latents(const SynthSpec& spec) {
  spec.validate();
  LatentTensor t(spec.n, spec.h, spec.w, spec.c);
  Rng rng(spec.seed);
  switch (spec.preset) {
    case SynthPreset::independent: {
      for (auto& v : t.data) v = static_cast<float>(rng.gaussian());
      break;
    }
    case SynthPreset::equicorrelated: {
      auto l = detail::equicorrelated_cholesky(spec.c, spec.rho);
      size_t cc = static_cast<size_t>(spec.c);
      std::vector<double> g(cc);
      for (int64_t n = 0; n < spec.n; ++n) {
        for (int64_t y = 0; y < spec.h; ++y) {
          for (int64_t x = 0; x < spec.w; ++x) {
            for (auto& v : g) v = rng.gaussian();
            for (size_t i = 0; i < cc; ++i) {
              double acc = 0.0;
              for (size_t k = 0; k <= i; ++k) acc += l[i * cc + k] * g[k];
              t.at(n, y, x, static_cast<int64_t>(i)) = static_cast<float>(acc);
            }
          }
        }
      }
      break;
    }
    case SynthPreset::copy_channel: {
      for (int64_t n = 0; n < spec.n; ++n) {
        for (int64_t y = 0; y < spec.h; ++y) {
          for (int64_t x = 0; x < spec.w; ++x) {
            float v = static_cast<float>(rng.gaussian());
            for (int64_t c = 0; c < spec.c; ++c) t.at(n, y, x, c) = v;
          }
        }
      }
      break;
    }
    case SynthPreset::smooth_vs_noise: {
      // Channel 0: circular moving average of a white field, window
      // k = ceil(H/4), rescaled to keep unit marginal variance. Channel 1:
      // one shared N(0,1) amplitude per sample times the (-1)^(y+x)
      // checkerboard, so its spectrum sits entirely at the Nyquist bin.
      // Remaining channels stay white.
      int64_t k = (spec.h + 3) / 4;
      size_t hw = static_cast<size_t>(spec.h * spec.w);
      std::vector<double> field(hw);
      for (int64_t n = 0; n < spec.n; ++n) {
        for (auto& v : field) v = rng.gaussian();
        for (int64_t y = 0; y < spec.h; ++y) {
          for (int64_t x = 0; x < spec.w; ++x) {
            double acc = 0.0;
            for (int64_t dy = 0; dy < k; ++dy) {
              int64_t sy = (y + dy) % spec.h;
              for (int64_t dx = 0; dx < k; ++dx) {
                int64_t sx = (x + dx) % spec.w;
                acc += field[static_cast<size_t>(sy * spec.w + sx)];
              }
            }
            t.at(n, y, x, 0) = static_cast<float>(acc / static_cast<double>(k));
          }
        }
        double amp = rng.gaussian();
        for (int64_t y = 0; y < spec.h; ++y) {
          for (int64_t x = 0; x < spec.w; ++x) {
            double sign = ((y + x) & 1) ? -1.0 : 1.0;
            t.at(n, y, x, 1) = static_cast<float>(amp * sign);
          }
        }
        for (int64_t y = 0; y < spec.h; ++y) {
          for (int64_t x = 0; x < spec.w; ++x) {
            for (int64_t c = 2; c < spec.c; ++c) {
              t.at(n, y, x, c) = static_cast<float>(rng.gaussian());
            }
          }
        }
      }
      break;
    }
  }
  return t;
}

}  // namespace latq
