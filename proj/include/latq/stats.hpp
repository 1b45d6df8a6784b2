#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/quantizer.hpp"
#include "latq/tensor.hpp"

// Round-trip quality metrics for a quantizer grid applied to a latent
// tensor: per-channel and overall MSE, PSNR, token entropy, level
// utilization, and a two-sample KS distance between the input and
// de-quantized value distributions.

namespace latq {

struct CodecReport {
  bool normalized_domain = false;
  std::vector<double> per_channel_mse;  // C entries
  double overall_mse = 0.0;             // mean of the per-channel values
  double psnr_db = 0.0;                 // peak = full value range of the domain
  std::vector<double> entropy_bits;     // C entries, token entropy per channel
  std::vector<double> utilization;      // C entries, distinct levels used / B
  double ks_stat = 0.0;                 // pooled over all elements
};

// Largest gap between the empirical CDFs of two samples.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw validation_error("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na -
                              static_cast<double>(j) / nb));
  }
  return d;
}

// Encode/decode `latents` through `grid` and report the damage. With
// normalized_domain the error is measured between the normalized input and
// the grid's reconstruction points (peak 2r); otherwise in the feature
// domain (peak alpha_max - alpha_min).
inline CodecReport roundtrip_report(const LatentTensor& latents,
                                    const QuantizerGrid& grid,
                                    bool normalized_domain = false) {
  const auto& s = latents.shape;
  if (latents.data.empty()) throw validation_error("roundtrip_report: empty tensor");
  const auto& spec = grid.spec;
  const size_t cc = static_cast<size_t>(s.c);
  const size_t per_channel = latents.data.size() / cc;

  CodecReport rep;
  rep.normalized_domain = normalized_domain;
  rep.per_channel_mse.assign(cc, 0.0);
  rep.entropy_bits.assign(cc, 0.0);
  rep.utilization.assign(cc, 0.0);

  std::vector<std::vector<int64_t>> counts(
      cc, std::vector<int64_t>(static_cast<size_t>(spec.levels), 0));
  std::vector<double> input_pool, recon_pool;
  input_pool.reserve(latents.data.size());
  recon_pool.reserve(latents.data.size());

  for (size_t at = 0; at < latents.data.size(); ++at) {
    size_t channel = at % cc;
    double x = static_cast<double>(latents.data[at]);
    if (!std::isfinite(x)) {
      throw validation_error("roundtrip_report: non-finite input value");
    }
    double xn = normalize(x, spec);
    int tok = encode_scalar(xn, grid);
    counts[channel][static_cast<size_t>(tok)]++;
    double err, in_val, out_val;
    if (normalized_domain) {
      in_val = xn;
      out_val = grid.recon[static_cast<size_t>(tok)];
    } else {
      in_val = x;
      out_val = decode_scalar(tok, grid);
    }
    err = in_val - out_val;
    rep.per_channel_mse[channel] += err * err;
    input_pool.push_back(in_val);
    recon_pool.push_back(out_val);
  }

  for (size_t c = 0; c < cc; ++c) {
    rep.per_channel_mse[c] /= static_cast<double>(per_channel);
    double ent = 0.0;
    int used = 0;
    for (int64_t n : counts[c]) {
      if (n == 0) continue;
      ++used;
      double p = static_cast<double>(n) / static_cast<double>(per_channel);
      ent -= p * std::log2(p);
    }
    rep.entropy_bits[c] = ent;
    rep.utilization[c] = static_cast<double>(used) / static_cast<double>(spec.levels);
    rep.overall_mse += rep.per_channel_mse[c];
  }
  rep.overall_mse /= static_cast<double>(cc);

  double peak = normalized_domain ? 2.0 * spec.half_range
                                  : spec.alpha_max - spec.alpha_min;
  rep.psnr_db = rep.overall_mse == 0.0
                    ? std::numeric_limits<double>::infinity()
                    : 10.0 * std::log10(peak * peak / rep.overall_mse);
  rep.ks_stat = ks_two_sample(std::move(input_pool), std::move(recon_pool));
  return rep;
}

// JSON serialization with full-precision reals, shared by the CLI.
inline std::string report_to_json(const CodecReport& rep) {
  std::string out = "{\n  \"domain\": ";
  out += rep.normalized_domain ? "\"normalized\"" : "\"feature\"";
  auto put_array = [&out](const char* key, const std::vector<double>& vals) {
    out += ",\n  \"";
    out += key;
    out += "\": [";
    for (size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ", ";
      detail::append_real17(out, vals[i]);
    }
    out += "]";
  };
  put_array("per_channel_mse", rep.per_channel_mse);
  out += ",\n  \"overall_mse\": ";
  detail::append_real17(out, rep.overall_mse);
  out += ",\n  \"psnr_db\": ";
  detail::append_real17(out, rep.psnr_db);
  put_array("entropy_bits", rep.entropy_bits);
  put_array("utilization", rep.utilization);
  out += ",\n  \"ks_stat\": ";
  detail::append_real17(out, rep.ks_stat);
  out += "\n}\n";
  return out;
}

struct ChannelHistogram {
  std::vector<double> lo, hi;                // per-channel value range
  std::vector<std::vector<int64_t>> counts;  // C x bins
};

// Per-channel histogram over each channel's own [min, max] range. A
// degenerate channel (min == max) lands entirely in bin 0.
inline ChannelHistogram channel_histogram(const LatentTensor& latents, int bins) {
  if (bins < 2) throw validation_error("histogram needs at least 2 bins");
  if (latents.data.empty()) throw validation_error("channel_histogram: empty tensor");
  const size_t cc = static_cast<size_t>(latents.shape.c);
  ChannelHistogram hist;
  hist.lo.assign(cc, std::numeric_limits<double>::infinity());
  hist.hi.assign(cc, -std::numeric_limits<double>::infinity());
  hist.counts.assign(cc, std::vector<int64_t>(static_cast<size_t>(bins), 0));
  for (size_t at = 0; at < latents.data.size(); ++at) {
    double v = static_cast<double>(latents.data[at]);
    if (!std::isfinite(v)) {
      throw validation_error("channel_histogram: non-finite input value");
    }
    size_t c = at % cc;
    hist.lo[c] = std::min(hist.lo[c], v);
    hist.hi[c] = std::max(hist.hi[c], v);
  }
  for (size_t at = 0; at < latents.data.size(); ++at) {
    size_t c = at % cc;
    double v = static_cast<double>(latents.data[at]);
    int64_t bin = 0;
    if (hist.hi[c] > hist.lo[c]) {
      double frac = (v - hist.lo[c]) / (hist.hi[c] - hist.lo[c]);
      bin = std::min<int64_t>(bins - 1,
                              static_cast<int64_t>(frac * static_cast<double>(bins)));
    }
    hist.counts[c][static_cast<size_t>(bin)]++;
  }
  return hist;
}

}  // namespace latq
