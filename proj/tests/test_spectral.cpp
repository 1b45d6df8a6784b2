#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "latq/rng.hpp"
#include "latq/spectral.hpp"
#include "latq/synth.hpp"

using latq::ChannelOrder;
using latq::dft2;
using latq::LatentTensor;
using latq::low_freq_ratio;
using latq::order_channels;
using latq::Rng;
using latq::Spectrum;
using latq::validation_error;

namespace {

std::vector<double> checkerboard(int64_t h, int64_t w, double amp) {
  std::vector<double> m(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      m[static_cast<size_t>(y * w + x)] = ((y + x) & 1) ? -amp : amp;
    }
  }
  return m;
}

std::vector<double> white_map(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> m(static_cast<size_t>(h * w));
  for (auto& v : m) v = rng.gaussian();
  return m;
}

}  // namespace

TEST(Dft2, RejectsTinyOrMismatchedInputs) {
  EXPECT_THROW(dft2(std::vector<double>(4, 0.0), 1, 4), validation_error);
  EXPECT_THROW(dft2(std::vector<double>(4, 0.0), 4, 1), validation_error);
  EXPECT_THROW(dft2(std::vector<double>(7, 0.0), 2, 4), validation_error);
}

TEST(Dft2, ConstantMapIsPureDc) {
  const int64_t h = 6, w = 8;
  std::vector<double> m(static_cast<size_t>(h * w), 2.5);
  Spectrum s = dft2(m, h, w);
  EXPECT_NEAR(s.at(0, 0).real(), 2.5 * h * w, 1e-9);
  EXPECT_NEAR(s.at(0, 0).imag(), 0.0, 1e-9);
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      if (u == 0 && v == 0) continue;
      EXPECT_LT(std::abs(s.at(u, v)), 1e-9) << u << "," << v;
    }
  }
  EXPECT_EQ(low_freq_ratio(s, 0.25), 1.0);
  EXPECT_EQ(low_freq_ratio(s, 0.5), 1.0);
}

TEST(Dft2, ImpulseHasFlatMagnitude) {
  const int64_t h = 5, w = 7;
  std::vector<double> m(static_cast<size_t>(h * w), 0.0);
  m[static_cast<size_t>(1 * w + 2)] = 3.0;
  Spectrum s = dft2(m, h, w);
  for (const auto& f : s.data) EXPECT_NEAR(std::abs(f), 3.0, 1e-12);
}

TEST(Dft2, CheckerboardLivesAtNyquist) {
  const int64_t h = 8, w = 8;
  Spectrum s = dft2(checkerboard(h, w, 1.0), h, w);
  EXPECT_NEAR(s.at(4, 4).real(), 64.0, 1e-9);
  EXPECT_NEAR(s.at(4, 4).imag(), 0.0, 1e-9);
  double off = 0.0;
  for (int64_t u = 0; u < h; ++u) {
    for (int64_t v = 0; v < w; ++v) {
      if (u == 4 && v == 4) continue;
      off = std::max(off, std::abs(s.at(u, v)));
    }
  }
  EXPECT_LT(off, 1e-9);
  EXPECT_EQ(low_freq_ratio(s, 0.25), 0.0);
  EXPECT_EQ(low_freq_ratio(s, 0.49), 0.0);
}

TEST(Dft2, ParsevalHolds) {
  const int64_t h = 16, w = 16;
  auto m = white_map(h, w, 7);
  Spectrum s = dft2(m, h, w);
  double space = 0.0, freq = 0.0;
  for (double v : m) space += v * v;
  for (const auto& f : s.data) freq += std::norm(f);
  EXPECT_NEAR(freq, h * w * space, 1e-12 * freq);
}

TEST(LowFreqRatio, ConstantPlusCheckerboardSplitsEvenly) {
  const int64_t h = 16, w = 16;
  auto m = checkerboard(h, w, 1.0);
  for (auto& v : m) v += 1.0;  // equal per-pattern energy
  Spectrum s = dft2(m, h, w);
  EXPECT_NEAR(low_freq_ratio(s, 0.25), 0.5, 1e-6);
}

TEST(LowFreqRatio, FlatSpectrumMatchesDiskBinCount) {
  // Impulse: every bin carries identical power, so the ratio equals the
  // number of centered bins with du^2+dv^2 <= 16 (49 on a 16x16 grid)
  // over the total bin count.
  const int64_t h = 16, w = 16;
  std::vector<double> m(static_cast<size_t>(h * w), 0.0);
  m[17] = 1.0;
  Spectrum s = dft2(m, h, w);
  EXPECT_NEAR(low_freq_ratio(s, 0.25), 49.0 / 256.0, 1e-12);
}

TEST(LowFreqRatio, ValidatesRadius) {
  Spectrum s = dft2(white_map(4, 4, 1), 4, 4);
  EXPECT_THROW(low_freq_ratio(s, 0.0), validation_error);
  EXPECT_THROW(low_freq_ratio(s, -0.1), validation_error);
  EXPECT_THROW(low_freq_ratio(s, 0.51), validation_error);
  EXPECT_NO_THROW(low_freq_ratio(s, 0.5));
}

TEST(LowFreqRatio, AllZeroMapIsDegenerateOne) {
  Spectrum s = dft2(std::vector<double>(64, 0.0), 8, 8);
  EXPECT_EQ(low_freq_ratio(s, 0.25), 1.0);
}

TEST(LowFreqRatio, ScaleInvariant) {
  auto m = white_map(12, 12, 3);
  auto scaled = m;
  for (auto& v : scaled) v *= -41.5;
  double a = low_freq_ratio(dft2(m, 12, 12), 0.25);
  double b = low_freq_ratio(dft2(scaled, 12, 12), 0.25);
  EXPECT_DOUBLE_EQ(a, b);
}

namespace {

// (N, 16, 16, 3) with channel 0 constant, 1 white, 2 checkerboard.
LatentTensor three_pattern_batch(int64_t n, uint64_t seed) {
  LatentTensor t(n, 16, 16, 3);
  Rng rng(seed);
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t y = 0; y < 16; ++y) {
      for (int64_t x = 0; x < 16; ++x) {
        t.at(s, y, x, 0) = 1.0f;
        t.at(s, y, x, 1) = static_cast<float>(rng.gaussian());
        t.at(s, y, x, 2) = ((y + x) & 1) ? -1.0f : 1.0f;
      }
    }
  }
  return t;
}

}  // namespace

TEST(OrderChannels, ConstantWhiteCheckerboard) {
  ChannelOrder order = order_channels(three_pattern_batch(4, 11), 0.25);
  EXPECT_EQ(order.permutation, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(order.ratios[0], 1.0);
  EXPECT_EQ(order.ratios[2], 0.0);
  EXPECT_GT(order.ratios[1], 0.0);
  EXPECT_LT(order.ratios[1], 1.0);
}

TEST(OrderChannels, SingleChannel) {
  LatentTensor t(2, 4, 4, 1);
  Rng rng(5);
  for (auto& v : t.data) v = static_cast<float>(rng.gaussian());
  ChannelOrder order = order_channels(t, 0.25);
  EXPECT_EQ(order.permutation, (std::vector<int>{0}));
}

TEST(OrderChannels, DuplicateChannelTieBreaksToLowerIndex) {
  LatentTensor t(2, 8, 8, 3);
  Rng rng(9);
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t y = 0; y < 8; ++y) {
      for (int64_t x = 0; x < 8; ++x) {
        float v = static_cast<float>(rng.gaussian());
        t.at(n, y, x, 0) = v;
        t.at(n, y, x, 1) = v;  // exact duplicate of channel 0
        t.at(n, y, x, 2) = 5.0f;
      }
    }
  }
  ChannelOrder order = order_channels(t, 0.25);
  EXPECT_DOUBLE_EQ(order.ratios[0], order.ratios[1]);
  EXPECT_EQ(order.permutation, (std::vector<int>{2, 0, 1}));
}

TEST(OrderChannels, PermutingChannelsPermutesRatios) {
  LatentTensor t = three_pattern_batch(2, 21);
  LatentTensor swapped(2, 16, 16, 3);
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t y = 0; y < 16; ++y) {
      for (int64_t x = 0; x < 16; ++x) {
        swapped.at(n, y, x, 0) = t.at(n, y, x, 2);
        swapped.at(n, y, x, 1) = t.at(n, y, x, 1);
        swapped.at(n, y, x, 2) = t.at(n, y, x, 0);
      }
    }
  }
  ChannelOrder a = order_channels(t, 0.25);
  ChannelOrder b = order_channels(swapped, 0.25);
  EXPECT_DOUBLE_EQ(a.ratios[0], b.ratios[2]);
  EXPECT_DOUBLE_EQ(a.ratios[1], b.ratios[1]);
  EXPECT_DOUBLE_EQ(a.ratios[2], b.ratios[0]);
}

TEST(OrderChannels, SmoothVsNoisePresetOrdersSmoothWhiteChecker) {
  latq::SynthSpec spec;
  spec.n = 8;
  spec.h = 16;
  spec.w = 16;
  spec.c = 3;
  spec.preset = latq::SynthPreset::smooth_vs_noise;
  spec.seed = 42;
  ChannelOrder order = order_channels(latq::gen_latents(spec), 0.25);
  // Channel layout is [smooth, checkerboard, white]; by descending
  // low-frequency share that sorts to smooth, white, checkerboard.
  EXPECT_EQ(order.permutation, (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(order.ratios[1], 0.0);
  EXPECT_GT(order.ratios[0], order.ratios[2]);
  EXPECT_GT(order.ratios[2], 0.05);
}
