#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/io.hpp"
#include "latq/quantizer.hpp"
#include "latq/rng.hpp"
#include "latq/sidecar.hpp"
#include "latq/tensor.hpp"

// Dimension-wise autoregressive token head. A token vector's joint
// distribution factorizes across channels, each conditioned on the already
// predicted ones:
//
//   p(q | z) = prod_c p(q^c | q^<c, z)
//
// The conditioning path: a C-dim feature context (mean of previously
// generated de-quantized vectors, or a learned start vector) goes through a
// linear aggregator to d_z, a class embedding row is added, and a linear map
// lifts the result to d_h. The prefix is the sum of token+channel embeddings
// of the already predicted channels. Both halves concatenate into a two-layer
// tanh MLP feeding per-channel linear output heads of width B.
//
// The parallel variant zeroes the prefix everywhere, reducing every factor to
// p(q^c | z); it exists as the ablation baseline.

namespace latq {

enum class PredictionMode { autoregressive, parallel };

inline const char* prediction_mode_name(PredictionMode m) {
  return m == PredictionMode::autoregressive ? "autoregressive" : "parallel";
}

inline PredictionMode prediction_mode_from_name(const std::string& s) {
  if (s == "autoregressive") return PredictionMode::autoregressive;
  if (s == "parallel") return PredictionMode::parallel;
  throw validation_error("unknown prediction mode '" + s + "'");
}

struct ARHeadDims {
  int levels = 64;      // B
  int channels = 16;    // C
  int d_embed = 16;     // d_e
  int d_hidden = 64;    // d_h
  int d_ctx = 16;       // d_z
  int num_classes = 1;  // class_embed holds num_classes + 1 rows (last = null)

  void validate() const {
    if (levels < 2) throw validation_error("B must be ≥ 2");
    if (channels < 1 || d_embed < 1 || d_hidden < 1 || d_ctx < 1 || num_classes < 1) {
      throw validation_error("head dimensions must be positive");
    }
  }
  bool operator==(const ARHeadDims&) const = default;
};

namespace detail {

// Byte offsets (in doubles) of each parameter block inside the flat vector.
struct ParamLayout {
  size_t token_embed;    // B x d_e
  size_t channel_embed;  // C x d_e
  size_t class_embed;    // (num_classes+1) x d_z
  size_t agg_w;          // d_z x C
  size_t agg_b;          // d_z
  size_t start_feat;     // C
  size_t ctx_w;          // d_h x d_z
  size_t ctx_b;          // d_h
  size_t h1_w;           // d_h x (d_h + d_e)
  size_t h1_b;           // d_h
  size_t h2_w;           // d_h x d_h
  size_t h2_b;           // d_h
  size_t head_w;         // C x B x d_h
  size_t head_b;         // C x B
  size_t total;
};

inline ParamLayout param_layout(const ARHeadDims& d) {
  ParamLayout l{};
  size_t at = 0;
  auto take = [&](size_t count) {
    size_t here = at;
    at += count;
    return here;
  };
  const size_t b = static_cast<size_t>(d.levels);
  const size_t c = static_cast<size_t>(d.channels);
  const size_t de = static_cast<size_t>(d.d_embed);
  const size_t dh = static_cast<size_t>(d.d_hidden);
  const size_t dz = static_cast<size_t>(d.d_ctx);
  l.token_embed = take(b * de);
  l.channel_embed = take(c * de);
  l.class_embed = take(static_cast<size_t>(d.num_classes + 1) * dz);
  l.agg_w = take(dz * c);
  l.agg_b = take(dz);
  l.start_feat = take(c);
  l.ctx_w = take(dh * dz);
  l.ctx_b = take(dh);
  l.h1_w = take(dh * (dh + de));
  l.h1_b = take(dh);
  l.h2_w = take(dh * dh);
  l.h2_b = take(dh);
  l.head_w = take(c * b * dh);
  l.head_b = take(c * b);
  l.total = at;
  return l;
}

}  // namespace detail

struct ARHeadParams {
  ARHeadDims dims;
  PredictionMode mode = PredictionMode::autoregressive;
  std::vector<int> order;      // channel visitation order, a permutation of 0..C-1
  std::vector<double> values;  // flat parameter vector, detail::param_layout order

  bool operator==(const ARHeadParams&) const = default;
};

inline ARHeadParams init_params(const ARHeadDims& dims, PredictionMode mode,
                                const std::vector<int>& order, uint64_t seed) {
  dims.validate();
  if (static_cast<int>(order.size()) != dims.channels || !is_permutation_of_iota(order)) {
    throw validation_error("channel order must be a permutation of 0.." +
                           std::to_string(dims.channels - 1));
  }
  ARHeadParams p;
  p.dims = dims;
  p.mode = mode;
  p.order = order;
  auto l = detail::param_layout(dims);
  p.values.assign(l.total, 0.0);
  Rng rng(seed);
  auto fill_gaussian = [&](size_t at, size_t count, double scale) {
    for (size_t i = 0; i < count; ++i) p.values[at + i] = scale * rng.gaussian();
  };
  const size_t de = static_cast<size_t>(dims.d_embed);
  const size_t dh = static_cast<size_t>(dims.d_hidden);
  const size_t dz = static_cast<size_t>(dims.d_ctx);
  const size_t c = static_cast<size_t>(dims.channels);
  const size_t b = static_cast<size_t>(dims.levels);
  fill_gaussian(l.token_embed, b * de, 0.1);
  fill_gaussian(l.channel_embed, c * de, 0.1);
  fill_gaussian(l.class_embed, static_cast<size_t>(dims.num_classes + 1) * dz, 0.1);
  fill_gaussian(l.agg_w, dz * c, std::sqrt(2.0 / static_cast<double>(dz + c)));
  fill_gaussian(l.ctx_w, dh * dz, std::sqrt(2.0 / static_cast<double>(dh + dz)));
  fill_gaussian(l.h1_w, dh * (dh + de), std::sqrt(2.0 / static_cast<double>(2 * dh + de)));
  fill_gaussian(l.h2_w, dh * dh, std::sqrt(1.0 / static_cast<double>(dh)));
  fill_gaussian(l.head_w, c * b * dh, std::sqrt(2.0 / static_cast<double>(dh + b)));
  // Biases and the start feature begin at zero.
  return p;
}

struct ContextVector {
  std::vector<double> z;  // d_z
};

// One training row: a class label, the aggregator input (either the learned
// start vector or a concrete C-dim feature context), and the C target tokens
// in natural channel layout.
struct HeadRow {
  int label = 0;
  bool use_start = false;
  std::vector<double> feat;      // C, ignored when use_start
  std::vector<uint16_t> tokens;  // C
};
using HeadDataset = std::vector<HeadRow>;

namespace detail {

struct Workspace {
  std::vector<double> z, u, prefix, x, h1, h2, logits, probs;
  std::vector<double> du, dz, dx, dh1, dh2, da1, da2, dlogits;
  std::vector<std::vector<double>> dprefix;  // per visitation step

  void resize(const ARHeadDims& d) {
    z.resize(static_cast<size_t>(d.d_ctx));
    u.resize(static_cast<size_t>(d.d_hidden));
    prefix.resize(static_cast<size_t>(d.d_embed));
    x.resize(static_cast<size_t>(d.d_hidden + d.d_embed));
    h1.resize(static_cast<size_t>(d.d_hidden));
    h2.resize(static_cast<size_t>(d.d_hidden));
    logits.resize(static_cast<size_t>(d.levels));
    probs.resize(static_cast<size_t>(d.levels));
    du.resize(static_cast<size_t>(d.d_hidden));
    dz.resize(static_cast<size_t>(d.d_ctx));
    dx.resize(static_cast<size_t>(d.d_hidden + d.d_embed));
    dh1.resize(static_cast<size_t>(d.d_hidden));
    dh2.resize(static_cast<size_t>(d.d_hidden));
    da1.resize(static_cast<size_t>(d.d_hidden));
    da2.resize(static_cast<size_t>(d.d_hidden));
    dlogits.resize(static_cast<size_t>(d.levels));
    dprefix.assign(static_cast<size_t>(d.channels),
                   std::vector<double>(static_cast<size_t>(d.d_embed)));
  }
};

// y = W x + b, W stored row-major rows x cols.
inline void affine(const double* w, const double* b, const double* x, double* y,
                   size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) {
    double acc = b ? b[r] : 0.0;
    const double* wr = w + r * cols;
    for (size_t k = 0; k < cols; ++k) acc += wr[k] * x[k];
    y[r] = acc;
  }
}

// Context pathway up to u (the MLP's left input half): z stays in ws.z,
// u in ws.u. agg_in is the aggregator input (start vector or feature mean).
inline void context_forward(const ARHeadParams& p, const ParamLayout& l,
                            const double* agg_in, int label, Workspace& ws) {
  const auto& d = p.dims;
  if (label < 0 || label > d.num_classes) {
    throw validation_error("class label " + std::to_string(label) +
                           " outside [0, " + std::to_string(d.num_classes) + "]");
  }
  affine(p.values.data() + l.agg_w, p.values.data() + l.agg_b, agg_in, ws.z.data(),
         static_cast<size_t>(d.d_ctx), static_cast<size_t>(d.channels));
  const double* cls =
      p.values.data() + l.class_embed + static_cast<size_t>(label) * d.d_ctx;
  for (int i = 0; i < d.d_ctx; ++i) ws.z[static_cast<size_t>(i)] += cls[i];
  affine(p.values.data() + l.ctx_w, p.values.data() + l.ctx_b, ws.z.data(),
         ws.u.data(), static_cast<size_t>(d.d_hidden), static_cast<size_t>(d.d_ctx));
}

// MLP + head for one channel given the current prefix state in ws.prefix and
// the context u in ws.u. Leaves logits in ws.logits, activations in ws.*.
inline void step_forward(const ARHeadParams& p, const ParamLayout& l, int channel,
                         Workspace& ws) {
  const auto& d = p.dims;
  const size_t dh = static_cast<size_t>(d.d_hidden);
  const size_t de = static_cast<size_t>(d.d_embed);
  std::copy(ws.u.begin(), ws.u.end(), ws.x.begin());
  if (p.mode == PredictionMode::autoregressive) {
    std::copy(ws.prefix.begin(), ws.prefix.end(), ws.x.begin() + static_cast<long>(dh));
  } else {
    std::fill(ws.x.begin() + static_cast<long>(dh), ws.x.end(), 0.0);
  }
  affine(p.values.data() + l.h1_w, p.values.data() + l.h1_b, ws.x.data(),
         ws.h1.data(), dh, dh + de);
  for (auto& v : ws.h1) v = std::tanh(v);
  affine(p.values.data() + l.h2_w, p.values.data() + l.h2_b, ws.h1.data(),
         ws.h2.data(), dh, dh);
  for (auto& v : ws.h2) v = std::tanh(v);
  const size_t head_at = l.head_w + static_cast<size_t>(channel) *
                                        static_cast<size_t>(d.levels) * dh;
  affine(p.values.data() + head_at,
         p.values.data() + l.head_b + static_cast<size_t>(channel) * d.levels,
         ws.h2.data(), ws.logits.data(), static_cast<size_t>(d.levels), dh);
}

// Stable softmax of ws.logits (after optional temperature) into ws.probs;
// returns log(sum(exp(logits - max))).
inline double softmax_into(const std::vector<double>& logits, std::vector<double>& probs) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& v : probs) v /= sum;
  return std::log(sum);
}

}  // namespace detail

// Context vector from an explicit feature aggregate (feat = C reals) or,
// when feat is null, from the learned start vector. The class row is added
// on top; label num_classes selects the null/unconditional row.
inline ContextVector context_vector(const ARHeadParams& p, const double* feat,
                                    int label) {
  auto l = detail::param_layout(p.dims);
  detail::Workspace ws;
  ws.resize(p.dims);
  const double* agg_in = feat ? feat : p.values.data() + l.start_feat;
  detail::context_forward(p, l, agg_in, label, ws);
  return ContextVector{ws.z};
}

// Logits for channel `channel` given natural-order prefix q^0..q^{channel-1}.
// The prefix state is the sum of token and channel-position embeddings.
inline std::vector<double> forward_logits(const ARHeadParams& p,
                                          const ContextVector& ctx,
                                          const std::vector<uint16_t>& prefix,
                                          int channel) {
  const auto& d = p.dims;
  if (channel < 0 || channel >= d.channels) {
    throw validation_error("channel " + std::to_string(channel) + " outside [0, " +
                           std::to_string(d.channels) + ")");
  }
  if (static_cast<int>(prefix.size()) != channel) {
    throw validation_error("prefix length " + std::to_string(prefix.size()) +
                           " does not match channel " + std::to_string(channel));
  }
  if (static_cast<int>(ctx.z.size()) != d.d_ctx) {
    throw validation_error("context vector has wrong width");
  }
  auto l = detail::param_layout(d);
  detail::Workspace ws;
  ws.resize(d);
  // u directly from the provided context vector.
  detail::affine(p.values.data() + l.ctx_w, p.values.data() + l.ctx_b, ctx.z.data(),
                 ws.u.data(), static_cast<size_t>(d.d_hidden),
                 static_cast<size_t>(d.d_ctx));
  std::fill(ws.prefix.begin(), ws.prefix.end(), 0.0);
  for (int j = 0; j < channel; ++j) {
    if (prefix[static_cast<size_t>(j)] >= d.levels) {
      throw validation_error("prefix token out of range");
    }
    const double* te = p.values.data() + l.token_embed +
                       static_cast<size_t>(prefix[static_cast<size_t>(j)]) * d.d_embed;
    const double* ce =
        p.values.data() + l.channel_embed + static_cast<size_t>(j) * d.d_embed;
    for (int i = 0; i < d.d_embed; ++i) ws.prefix[static_cast<size_t>(i)] += te[i] + ce[i];
  }
  detail::step_forward(p, l, channel, ws);
  return ws.logits;
}

namespace detail {

// Forward+backward of the mean cross-entropy over `rows`. When grad is
// non-null it accumulates d(scale * mean_loss)/d(params) into it (grad must
// be zero-initialized, size l.total). Returns the mean loss in nats.
inline double nll_impl(const ARHeadParams& p, const HeadDataset& rows, double scale,
                       std::vector<double>* grad) {
  const auto& d = p.dims;
  if (rows.empty()) throw validation_error("nll_loss: empty batch");
  auto l = param_layout(d);
  if (p.values.size() != l.total) {
    throw validation_error("parameter vector size does not match dims");
  }
  Workspace ws;
  ws.resize(d);
  const size_t dh = static_cast<size_t>(d.d_hidden);
  const size_t de = static_cast<size_t>(d.d_embed);
  const size_t dz = static_cast<size_t>(d.d_ctx);
  const size_t cc = static_cast<size_t>(d.channels);
  const double inv = 1.0 / (static_cast<double>(rows.size()) * static_cast<double>(cc));
  double total_loss = 0.0;
  std::vector<double> du_row(dh), dz_row(dz);

  for (const HeadRow& row : rows) {
    if (static_cast<int>(row.tokens.size()) != d.channels) {
      throw validation_error("row token count does not match channel count");
    }
    if (!row.use_start && static_cast<int>(row.feat.size()) != d.channels) {
      throw validation_error("row feature width does not match channel count");
    }
    const double* agg_in =
        row.use_start ? p.values.data() + l.start_feat : row.feat.data();
    context_forward(p, l, agg_in, row.label, ws);
    std::vector<double> z_row = ws.z;  // survives the per-step workspace reuse
    std::vector<double> u_row = ws.u;
    std::fill(du_row.begin(), du_row.end(), 0.0);
    std::fill(ws.prefix.begin(), ws.prefix.end(), 0.0);

    for (size_t j = 0; j < cc; ++j) {
      int channel = p.order[j];
      uint16_t target = row.tokens[static_cast<size_t>(channel)];
      if (target >= d.levels) throw validation_error("target token out of range");
      std::copy(u_row.begin(), u_row.end(), ws.u.begin());
      step_forward(p, l, channel, ws);
      double lse = softmax_into(ws.logits, ws.probs);
      double mx = *std::max_element(ws.logits.begin(), ws.logits.end());
      total_loss += (mx + lse) - ws.logits[target];

      if (grad) {
        double* g = grad->data();
        const double s = scale * inv;
        for (int t = 0; t < d.levels; ++t) {
          ws.dlogits[static_cast<size_t>(t)] =
              s * (ws.probs[static_cast<size_t>(t)] - (t == target ? 1.0 : 0.0));
        }
        const size_t head_at =
            l.head_w + static_cast<size_t>(channel) * static_cast<size_t>(d.levels) * dh;
        const size_t headb_at = l.head_b + static_cast<size_t>(channel) * d.levels;
        std::fill(ws.dh2.begin(), ws.dh2.end(), 0.0);
        for (int t = 0; t < d.levels; ++t) {
          double dl = ws.dlogits[static_cast<size_t>(t)];
          double* wrow = g + head_at + static_cast<size_t>(t) * dh;
          const double* prow = p.values.data() + head_at + static_cast<size_t>(t) * dh;
          for (size_t k = 0; k < dh; ++k) {
            wrow[k] += dl * ws.h2[k];
            ws.dh2[k] += dl * prow[k];
          }
          g[headb_at + static_cast<size_t>(t)] += dl;
        }
        for (size_t k = 0; k < dh; ++k) {
          ws.da2[k] = ws.dh2[k] * (1.0 - ws.h2[k] * ws.h2[k]);
        }
        std::fill(ws.dh1.begin(), ws.dh1.end(), 0.0);
        for (size_t k = 0; k < dh; ++k) {
          double da = ws.da2[k];
          double* wrow = g + l.h2_w + k * dh;
          const double* prow = p.values.data() + l.h2_w + k * dh;
          for (size_t m = 0; m < dh; ++m) {
            wrow[m] += da * ws.h1[m];
            ws.dh1[m] += da * prow[m];
          }
          g[l.h2_b + k] += da;
        }
        for (size_t k = 0; k < dh; ++k) {
          ws.da1[k] = ws.dh1[k] * (1.0 - ws.h1[k] * ws.h1[k]);
        }
        std::fill(ws.dx.begin(), ws.dx.end(), 0.0);
        for (size_t k = 0; k < dh; ++k) {
          double da = ws.da1[k];
          double* wrow = g + l.h1_w + k * (dh + de);
          const double* prow = p.values.data() + l.h1_w + k * (dh + de);
          for (size_t m = 0; m < dh + de; ++m) {
            wrow[m] += da * ws.x[m];
            ws.dx[m] += da * prow[m];
          }
          g[l.h1_b + k] += da;
        }
        for (size_t k = 0; k < dh; ++k) du_row[k] += ws.dx[k];
        if (p.mode == PredictionMode::autoregressive) {
          std::copy(ws.dx.begin() + static_cast<long>(dh), ws.dx.end(),
                    ws.dprefix[j].begin());
        }
      }

      if (p.mode == PredictionMode::autoregressive) {
        const double* te =
            p.values.data() + l.token_embed + static_cast<size_t>(target) * de;
        const double* ce =
            p.values.data() + l.channel_embed + static_cast<size_t>(channel) * de;
        for (size_t i = 0; i < de; ++i) ws.prefix[i] += te[i] + ce[i];
      }
    }

    if (grad) {
      double* g = grad->data();
      // Prefix gradients: the embedding summed at step k feeds every later
      // step, so walk the per-step dx tails backwards with a running sum.
      if (p.mode == PredictionMode::autoregressive) {
        std::vector<double> run(de, 0.0);
        for (size_t j = cc; j-- > 1;) {
          for (size_t i = 0; i < de; ++i) run[i] += ws.dprefix[j][i];
          int channel = p.order[j - 1];
          uint16_t tok = row.tokens[static_cast<size_t>(channel)];
          double* te = g + l.token_embed + static_cast<size_t>(tok) * de;
          double* ce = g + l.channel_embed + static_cast<size_t>(channel) * de;
          for (size_t i = 0; i < de; ++i) {
            te[i] += run[i];
            ce[i] += run[i];
          }
        }
      }
      // Context gradients, once per row.
      std::fill(dz_row.begin(), dz_row.end(), 0.0);
      for (size_t k = 0; k < dh; ++k) {
        double duk = du_row[k];
        const double* prow = p.values.data() + l.ctx_w + k * dz;
        double* wrow = g + l.ctx_w + k * dz;
        for (size_t i = 0; i < dz; ++i) {
          wrow[i] += duk * z_row[i];
          dz_row[i] += duk * prow[i];
        }
        g[l.ctx_b + k] += duk;
      }
      double* cls = g + l.class_embed + static_cast<size_t>(row.label) * dz;
      for (size_t i = 0; i < dz; ++i) cls[i] += dz_row[i];
      for (size_t i = 0; i < dz; ++i) {
        double dzi = dz_row[i];
        double* wrow = g + l.agg_w + i * cc;
        for (size_t jc = 0; jc < cc; ++jc) wrow[jc] += dzi * agg_in[jc];
        g[l.agg_b + i] += dzi;
      }
      if (row.use_start) {
        double* st = g + l.start_feat;
        for (size_t jc = 0; jc < cc; ++jc) {
          double acc = 0.0;
          for (size_t i = 0; i < dz; ++i) {
            acc += dz_row[i] * p.values[l.agg_w + i * cc + jc];
          }
          st[jc] += acc;
        }
      }
    }
  }
  return total_loss * inv;
}

}  // namespace detail

// Mean cross-entropy (nats) over batch rows and channels.
inline double nll_loss(const ARHeadParams& p, const HeadDataset& rows) {
  return detail::nll_impl(p, rows, 1.0, nullptr);
}

// Loss plus d(scale*loss)/d(params).
inline double nll_and_grad(const ARHeadParams& p, const HeadDataset& rows,
                           double scale, std::vector<double>& grad) {
  grad.assign(p.values.size(), 0.0);
  return detail::nll_impl(p, rows, scale, &grad);
}

// Max relative error between the analytic gradient and central finite
// differences over at least `min_checks` randomly chosen parameters.
inline double grad_check(const ARHeadParams& p, const HeadDataset& rows, double eps,
                         size_t min_checks, uint64_t seed) {
  std::vector<double> grad;
  nll_and_grad(p, rows, 1.0, grad);
  Rng rng(seed);
  size_t n = p.values.size();
  size_t checks = std::min(n, min_checks);
  std::vector<size_t> picks;
  if (checks == n) {
    picks.resize(n);
    std::iota(picks.begin(), picks.end(), size_t{0});
  } else {
    for (size_t i = 0; i < checks; ++i) picks.push_back(rng.uniform_index(n));
  }
  ARHeadParams probe = p;
  double worst = 0.0;
  for (size_t idx : picks) {
    double keep = probe.values[idx];
    probe.values[idx] = keep + eps;
    double up = nll_loss(probe, rows);
    probe.values[idx] = keep - eps;
    double dn = nll_loss(probe, rows);
    probe.values[idx] = keep;
    double fd = (up - dn) / (2.0 * eps);
    double rel = std::fabs(grad[idx] - fd) /
                 std::max(1.0, std::fabs(grad[idx]) + std::fabs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

struct TrainConfig {
  double learning_rate = 8e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  int batch = 128;
  int steps = 1000;
  double label_dropout = 0.1;
  uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw validation_error("learning rate must be positive");
    if (batch < 1) throw validation_error("batch size must be positive");
    if (steps < 0) throw validation_error("step count must be non-negative");
    if (label_dropout < 0.0 || label_dropout >= 1.0) {
      throw validation_error("label dropout must lie in [0, 1)");
    }
  }
};

struct TrainResult {
  std::vector<double> losses;  // batch loss before each update
};

// Adam over mini-batches drawn with replacement. Rows whose label is dropped
// train the null class row, which CFG later uses as the unconditional branch.
inline TrainResult train(ARHeadParams& p, const HeadDataset& dataset,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw validation_error("train: empty dataset");
  Rng rng(cfg.seed);
  TrainResult result;
  result.losses.reserve(static_cast<size_t>(cfg.steps));
  std::vector<double> grad(p.values.size());
  std::vector<double> m(p.values.size(), 0.0), v(p.values.size(), 0.0);
  HeadDataset batch(static_cast<size_t>(cfg.batch));
  for (int step = 1; step <= cfg.steps; ++step) {
    for (auto& slot : batch) {
      slot = dataset[rng.uniform_index(dataset.size())];
      if (cfg.label_dropout > 0.0 && rng.uniform01() < cfg.label_dropout) {
        slot.label = p.dims.num_classes;  // null class row
      }
    }
    double loss = nll_and_grad(p, batch, 1.0, grad);
    if (!std::isfinite(loss)) {
      throw numeric_error("training loss is not finite at step " +
                          std::to_string(step));
    }
    result.losses.push_back(loss);
    double bc1 = 1.0 - std::pow(cfg.beta1, step);
    double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (size_t i = 0; i < p.values.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      p.values[i] -= cfg.learning_rate * (m[i] / bc1) /
                     (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
  }
  return result;
}

enum class ConfidenceMode { off, top_k, threshold };

struct SampleConfig {
  double temperature = 0.97;
  double guidance_scale = 3.1;
  ConfidenceMode confidence_mode = ConfidenceMode::off;
  int top_k = 0;            // used when confidence_mode == top_k
  double threshold = 0.0;   // used when confidence_mode == threshold
  uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw validation_error("temperature must be positive");
    if (guidance_scale < 0.0) throw validation_error("guidance scale must be ≥ 0");
    if (confidence_mode == ConfidenceMode::top_k && top_k < 0) {
      throw validation_error("top_k must be ≥ 0");
    }
  }
};

// uncond + s*(cond - uncond), element-wise on pre-softmax logits.
inline std::vector<double> cfg_combine(const std::vector<double>& cond,
                                       const std::vector<double>& uncond, double s) {
  if (cond.size() != uncond.size()) {
    throw validation_error("cfg_combine: logit lengths differ");
  }
  std::vector<double> out(cond.size());
  for (size_t i = 0; i < cond.size(); ++i) {
    out[i] = uncond[i] + s * (cond[i] - uncond[i]);
  }
  return out;
}

struct SampleResult {
  std::vector<uint16_t> tokens;  // natural channel layout
  std::vector<double> probs;     // chosen-token probability, natural layout
};

// One token vector, channels visited in params.order. When z_uncond is
// present and the guidance scale is not exactly 1, conditional and
// unconditional logits (sharing the same prefix) are interpolated before
// temperature and softmax. Temperatures below 1e-6 short-circuit to argmax.
inline SampleResult sample_channels(const ARHeadParams& p, const ContextVector& z_cond,
                                    const ContextVector* z_uncond,
                                    const SampleConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& d = p.dims;
  auto l = detail::param_layout(d);
  detail::Workspace ws;
  ws.resize(d);
  detail::Workspace ws_u;
  const bool use_cfg = z_uncond != nullptr && cfg.guidance_scale != 1.0;
  if (use_cfg) ws_u.resize(d);

  std::vector<double> u_cond(static_cast<size_t>(d.d_hidden));
  std::vector<double> u_unc;
  detail::affine(p.values.data() + l.ctx_w, p.values.data() + l.ctx_b, z_cond.z.data(),
                 u_cond.data(), static_cast<size_t>(d.d_hidden),
                 static_cast<size_t>(d.d_ctx));
  if (use_cfg) {
    u_unc.resize(static_cast<size_t>(d.d_hidden));
    detail::affine(p.values.data() + l.ctx_w, p.values.data() + l.ctx_b,
                   z_uncond->z.data(), u_unc.data(), static_cast<size_t>(d.d_hidden),
                   static_cast<size_t>(d.d_ctx));
  }

  SampleResult out;
  out.tokens.assign(static_cast<size_t>(d.channels), 0);
  out.probs.assign(static_cast<size_t>(d.channels), 0.0);
  std::fill(ws.prefix.begin(), ws.prefix.end(), 0.0);

  for (int j = 0; j < d.channels; ++j) {
    int channel = p.order[static_cast<size_t>(j)];
    std::copy(u_cond.begin(), u_cond.end(), ws.u.begin());
    detail::step_forward(p, l, channel, ws);
    std::vector<double> logits = ws.logits;
    if (use_cfg) {
      std::copy(u_unc.begin(), u_unc.end(), ws_u.u.begin());
      std::copy(ws.prefix.begin(), ws.prefix.end(), ws_u.prefix.begin());
      detail::step_forward(p, l, channel, ws_u);
      logits = cfg_combine(logits, ws_u.logits, cfg.guidance_scale);
    }
    int pick;
    if (cfg.temperature < 1e-6) {
      pick = static_cast<int>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      detail::softmax_into(logits, ws.probs);
    } else {
      for (auto& v : logits) v /= cfg.temperature;
      detail::softmax_into(logits, ws.probs);
      double draw = rng.uniform01();
      double acc = 0.0;
      pick = d.levels - 1;
      for (int t = 0; t < d.levels; ++t) {
        acc += ws.probs[static_cast<size_t>(t)];
        if (draw < acc) {
          pick = t;
          break;
        }
      }
    }
    out.tokens[static_cast<size_t>(channel)] = static_cast<uint16_t>(pick);
    out.probs[static_cast<size_t>(channel)] = ws.probs[static_cast<size_t>(pick)];
    if (p.mode == PredictionMode::autoregressive) {
      const double* te =
          p.values.data() + l.token_embed + static_cast<size_t>(pick) * d.d_embed;
      const double* ce =
          p.values.data() + l.channel_embed + static_cast<size_t>(channel) * d.d_embed;
      for (int i = 0; i < d.d_embed; ++i) ws.prefix[static_cast<size_t>(i)] += te[i] + ce[i];
    }
  }
  return out;
}

// Geometric mean of the per-channel chosen-token probabilities.
inline double token_confidence(const std::vector<double>& probs) {
  if (probs.empty()) throw validation_error("token_confidence: empty input");
  double acc = 0.0;
  for (double p : probs) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw validation_error("token_confidence: probability outside (0, 1]");
    }
    acc += std::log(p);
  }
  return std::exp(acc / static_cast<double>(probs.size()));
}

struct GenerateResult {
  LatentTensor latents;        // (1, H, W, C), always decoded grid values
  TokenTensor tokens;          // (1, H, W, C)
  Tensor4<float> confidence;   // (1, H, W, 1)
};

// Raster-order spatial generation. Each position's context is the mean of
// the previously generated de-quantized feature vectors (the learned start
// vector for the first position); the sampled tokens are immediately decoded
// and only those continuous values feed later positions. In top_k/threshold
// confidence modes, low-confidence positions are overwritten with the tokens
// of the zero feature vector after the full pass.
inline GenerateResult generate_spatial(const ARHeadParams& p, const QuantizerGrid& grid,
                                       int64_t h, int64_t w, int label,
                                       const SampleConfig& cfg) {
  cfg.validate();
  const auto& d = p.dims;
  if (grid.spec.levels != d.levels) {
    throw validation_error("grid level count does not match head");
  }
  if (label < 0 || label >= d.num_classes) {
    throw validation_error("class label " + std::to_string(label) + " outside [0, " +
                           std::to_string(d.num_classes) + ")");
  }
  Rng rng(cfg.seed);
  const size_t cc = static_cast<size_t>(d.channels);
  std::vector<float> decoded(static_cast<size_t>(d.levels));
  for (int i = 0; i < d.levels; ++i) {
    decoded[static_cast<size_t>(i)] = static_cast<float>(decode_scalar(i, grid));
  }
  GenerateResult out{LatentTensor(1, h, w, d.channels),
                     TokenTensor(1, h, w, d.channels), Tensor4<float>(1, h, w, 1)};
  std::vector<double> sum_feat(cc, 0.0), mean_feat(cc);
  int64_t count = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      ContextVector zc, zu;
      if (count == 0) {
        zc = context_vector(p, nullptr, label);
        zu = context_vector(p, nullptr, d.num_classes);
      } else {
        for (size_t i = 0; i < cc; ++i) {
          mean_feat[i] = sum_feat[i] / static_cast<double>(count);
        }
        zc = context_vector(p, mean_feat.data(), label);
        zu = context_vector(p, mean_feat.data(), d.num_classes);
      }
      SampleResult s = sample_channels(p, zc, &zu, cfg, rng);
      out.confidence.at(0, y, x, 0) = static_cast<float>(token_confidence(s.probs));
      for (size_t i = 0; i < cc; ++i) {
        uint16_t tok = s.tokens[i];
        out.tokens.at(0, y, x, static_cast<int64_t>(i)) = tok;
        float val = decoded[tok];
        out.latents.at(0, y, x, static_cast<int64_t>(i)) = val;
        sum_feat[i] += static_cast<double>(val);
      }
      ++count;
    }
  }

  if (cfg.confidence_mode != ConfidenceMode::off) {
    uint16_t bg_tok = static_cast<uint16_t>(
        encode_scalar(normalize(0.0, grid.spec), grid));
    float bg_val = decoded[bg_tok];
    std::vector<int64_t> marked;
    const int64_t total = h * w;
    if (cfg.confidence_mode == ConfidenceMode::top_k) {
      std::vector<int64_t> idx(static_cast<size_t>(total));
      std::iota(idx.begin(), idx.end(), int64_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        return out.confidence.data[static_cast<size_t>(a)] >
               out.confidence.data[static_cast<size_t>(b)];
      });
      for (size_t r = static_cast<size_t>(std::min<int64_t>(cfg.top_k, total));
           r < idx.size(); ++r) {
        marked.push_back(idx[r]);
      }
    } else {
      for (int64_t i = 0; i < total; ++i) {
        if (out.confidence.data[static_cast<size_t>(i)] < cfg.threshold) {
          marked.push_back(i);
        }
      }
    }
    for (int64_t pos : marked) {
      for (size_t i = 0; i < cc; ++i) {
        size_t at = static_cast<size_t>(pos) * cc + i;
        out.tokens.data[at] = bg_tok;
        out.latents.data[at] = bg_val;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset builders.

// One row per token vector, no spatial context: every row uses the learned
// start vector, so the head models the unconditional joint over channels.
inline HeadDataset build_vector_rows(const TokenTensor& tokens,
                                     const std::vector<int>& labels = {}) {
  const auto& s = tokens.shape;
  if (!labels.empty() && static_cast<int64_t>(labels.size()) != s.n) {
    throw validation_error("label count does not match sample count");
  }
  HeadDataset rows;
  rows.reserve(static_cast<size_t>(s.n * s.h * s.w));
  for (int64_t n = 0; n < s.n; ++n) {
    int label = labels.empty() ? 0 : labels[static_cast<size_t>(n)];
    for (int64_t y = 0; y < s.h; ++y) {
      for (int64_t x = 0; x < s.w; ++x) {
        HeadRow row;
        row.label = label;
        row.use_start = true;
        row.tokens.resize(static_cast<size_t>(s.c));
        for (int64_t c = 0; c < s.c; ++c) {
          row.tokens[static_cast<size_t>(c)] = tokens.at(n, y, x, c);
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

// Raster-order teacher forcing rows: each position's feature context is the
// mean of the de-quantized vectors at all earlier raster positions of the
// same sample, mirroring what generate_spatial reconstructs at inference.
inline HeadDataset build_spatial_rows(const TokenTensor& tokens,
                                      const QuantizerGrid& grid,
                                      const std::vector<int>& labels = {}) {
  const auto& s = tokens.shape;
  if (!labels.empty() && static_cast<int64_t>(labels.size()) != s.n) {
    throw validation_error("label count does not match sample count");
  }
  std::vector<float> decoded(static_cast<size_t>(grid.spec.levels));
  for (int i = 0; i < grid.spec.levels; ++i) {
    decoded[static_cast<size_t>(i)] = static_cast<float>(decode_scalar(i, grid));
  }
  HeadDataset rows;
  rows.reserve(static_cast<size_t>(s.n * s.h * s.w));
  const size_t cc = static_cast<size_t>(s.c);
  for (int64_t n = 0; n < s.n; ++n) {
    int label = labels.empty() ? 0 : labels[static_cast<size_t>(n)];
    std::vector<double> sum_feat(cc, 0.0);
    int64_t count = 0;
    for (int64_t y = 0; y < s.h; ++y) {
      for (int64_t x = 0; x < s.w; ++x) {
        HeadRow row;
        row.label = label;
        row.tokens.resize(cc);
        if (count == 0) {
          row.use_start = true;
        } else {
          row.feat.resize(cc);
          for (size_t i = 0; i < cc; ++i) {
            row.feat[i] = sum_feat[i] / static_cast<double>(count);
          }
        }
        for (int64_t c = 0; c < s.c; ++c) {
          uint16_t tok = tokens.at(n, y, x, c);
          if (tok >= grid.spec.levels) {
            throw validation_error("token out of range for grid");
          }
          row.tokens[static_cast<size_t>(c)] = tok;
          sum_feat[static_cast<size_t>(c)] += static_cast<double>(decoded[tok]);
        }
        rows.push_back(std::move(row));
        ++count;
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON header line, then the parameter vector as raw
// little-endian 64-bit reals in layout order.

inline void write_checkpoint(const std::string& path, const ARHeadParams& p,
                             const QuantizerSpec& quantizer) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "ar_head";
  j["B"] = p.dims.levels;
  j["C"] = p.dims.channels;
  j["d_e"] = p.dims.d_embed;
  j["d_h"] = p.dims.d_hidden;
  j["d_z"] = p.dims.d_ctx;
  j["num_classes"] = p.dims.num_classes;
  j["mode"] = prediction_mode_name(p.mode);
  j["order"] = p.order;
  j["quantizer"] = {{"scheme", scheme_name(quantizer.scheme)},
                    {"B", quantizer.levels},
                    {"r", quantizer.half_range},
                    {"alpha_min", quantizer.alpha_min},
                    {"alpha_max", quantizer.alpha_max}};
  j["param_count"] = p.values.size();
  std::string bytes = j.dump();
  bytes += '\n';
  size_t head = bytes.size();
  bytes.resize(head + p.values.size() * sizeof(double));
  std::memcpy(bytes.data() + head, p.values.data(), p.values.size() * sizeof(double));
  atomic_write(path, bytes);
}

struct Checkpoint {
  ARHeadParams params;
  QuantizerSpec quantizer;
};

inline Checkpoint read_checkpoint(const std::string& path) {
  std::string bytes = read_file(path);
  size_t nl = bytes.find('\n');
  if (nl == std::string::npos) {
    throw format_error(format_code::checkpoint_header,
                       path + " has no checkpoint header line");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(format_code::checkpoint_header,
                       path + " header is not valid JSON: " + e.what());
  }
  Checkpoint ck;
  try {
    if (j.at("format_version").get<int>() != 1 ||
        j.at("kind").get<std::string>() != "ar_head") {
      throw format_error(format_code::checkpoint_header,
                         path + " is not a version-1 head checkpoint");
    }
    ck.params.dims.levels = j.at("B").get<int>();
    ck.params.dims.channels = j.at("C").get<int>();
    ck.params.dims.d_embed = j.at("d_e").get<int>();
    ck.params.dims.d_hidden = j.at("d_h").get<int>();
    ck.params.dims.d_ctx = j.at("d_z").get<int>();
    ck.params.dims.num_classes = j.at("num_classes").get<int>();
    ck.params.mode = prediction_mode_from_name(j.at("mode").get<std::string>());
    ck.params.order = j.at("order").get<std::vector<int>>();
    const auto& q = j.at("quantizer");
    ck.quantizer.scheme = scheme_from_name(q.at("scheme").get<std::string>());
    ck.quantizer.levels = q.at("B").get<int>();
    ck.quantizer.half_range = q.at("r").get<double>();
    ck.quantizer.alpha_min = q.at("alpha_min").get<double>();
    ck.quantizer.alpha_max = q.at("alpha_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error(format_code::checkpoint_header,
                       path + " header is missing fields: " + e.what());
  }
  ck.params.dims.validate();
  ck.quantizer.validate();
  if (!is_permutation_of_iota(ck.params.order) ||
      static_cast<int>(ck.params.order.size()) != ck.params.dims.channels) {
    throw format_error(format_code::checkpoint_header,
                       path + " order is not a channel permutation");
  }
  size_t count = j.at("param_count").get<size_t>();
  auto l = detail::param_layout(ck.params.dims);
  if (count != l.total) {
    throw format_error(format_code::checkpoint_header,
                       path + " param_count does not match dims");
  }
  if (bytes.size() - nl - 1 != count * sizeof(double)) {
    throw format_error(format_code::payload_mismatch,
                       path + " parameter payload has wrong size");
  }
  ck.params.values.resize(count);
  std::memcpy(ck.params.values.data(), bytes.data() + nl + 1, count * sizeof(double));
  return ck;
}

}  // namespace latq
