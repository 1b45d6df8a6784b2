#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "latq/ar_head.hpp"
#include "latq/errors.hpp"
#include "latq/io.hpp"
#include "latq/npy.hpp"
#include "latq/quantizer.hpp"
#include "latq/sidecar.hpp"
#include "latq/spectral.hpp"
#include "latq/stats.hpp"
#include "latq/synth.hpp"
#include "latq/tensor.hpp"

// Command-line front end for the codec and token head. Exit codes:
// 0 success, 1 validation error, 2 I/O or file-format error, 3 numerical
// failure. All file outputs are written atomically (temp file + rename).

namespace {

using namespace latq;

std::string sidecar_path(const std::string& data_path) { return data_path + ".json"; }

struct GridFlags {
  int levels = 64;
  double r = 3.0;
  double min = -5.0;
  double max = 5.0;
  std::string scheme = "gaussian";
};

void add_grid_flags(CLI::App* cmd, GridFlags& g) {
  cmd->add_option("--levels", g.levels, "quantization levels B")
      ->capture_default_str();
  cmd->add_option("--r", g.r, "normalized half range")->capture_default_str();
  cmd->add_option("--min", g.min, "feature range lower edge")->capture_default_str();
  cmd->add_option("--max", g.max, "feature range upper edge")->capture_default_str();
  cmd->add_option("--scheme", g.scheme, "gaussian or linear")->capture_default_str();
}

QuantizerSpec spec_from(const GridFlags& g) {
  QuantizerSpec spec;
  spec.levels = g.levels;
  spec.half_range = g.r;
  spec.alpha_min = g.min;
  spec.alpha_max = g.max;
  spec.scheme = scheme_from_name(g.scheme);
  spec.validate();
  return spec;
}

void emit(const std::string& text, const std::string& output) {
  if (output.empty()) {
    std::cout << text;
  } else {
    atomic_write(output, text);
  }
}

// Loads the sidecar next to a data file if present.
std::optional<SidecarMeta> try_sidecar(const std::string& data_path) {
  std::string path = sidecar_path(data_path);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_sidecar(path);
}

SidecarMeta require_sidecar(const std::string& data_path) {
  auto meta = try_sidecar(data_path);
  if (!meta) {
    throw io_error("missing sidecar " + sidecar_path(data_path) +
                   " (needed for the quantizer configuration)");
  }
  return *meta;
}

std::string json_real_array(const std::vector<double>& vals) {
  std::string out = "[";
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ", ";
    detail::append_real17(out, vals[i]);
  }
  out += "]";
  return out;
}

SampleConfig parse_confidence(const std::string& s, SampleConfig cfg) {
  try {
    if (s == "off") {
      cfg.confidence_mode = ConfidenceMode::off;
    } else if (s.rfind("topk:", 0) == 0) {
      cfg.confidence_mode = ConfidenceMode::top_k;
      cfg.top_k = std::stoi(s.substr(5));
    } else if (s.rfind("thr:", 0) == 0) {
      cfg.confidence_mode = ConfidenceMode::threshold;
      cfg.threshold = std::stod(s.substr(4));
    } else {
      throw validation_error("--confidence must be off, topk:K, or thr:T, got '" +
                             s + "'");
    }
  } catch (const std::logic_error&) {
    throw validation_error("--confidence must be off, topk:K, or thr:T, got '" + s +
                           "'");
  }
  return cfg;
}

HeadDataset rows_from_tokens(const TokenTensor& tokens, const QuantizerGrid& grid,
                             const std::string& context) {
  if (context == "spatial") return build_spatial_rows(tokens, grid);
  if (context == "vector") return build_vector_rows(tokens);
  throw validation_error("--context must be spatial or vector, got '" + context +
                         "'");
}

std::vector<int> order_for(const std::optional<SidecarMeta>& meta, int64_t channels) {
  if (meta) return effective_channel_order(*meta, channels);
  std::vector<int> order(static_cast<size_t>(channels));
  std::iota(order.begin(), order.end(), 0);
  return order;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent tensor quantization codec and channel-wise token head"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // --- grid --------------------------------------------------------------
  auto* grid_cmd = app.add_subcommand("grid", "print a quantizer grid as JSON");
  GridFlags grid_flags;
  std::string grid_output;
  add_grid_flags(grid_cmd, grid_flags);
  grid_cmd->add_option("--output", grid_output, "write JSON here instead of stdout");
  grid_cmd->callback([&] {
    emit(grid_to_json(build_grid(spec_from(grid_flags))) + "\n", grid_output);
  });

  // --- synth ---------------------------------------------------------------
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic latent tensor (npy + sidecar)");
  SynthSpec synth_spec;
  std::string synth_preset = "independent";
  std::string synth_output;
  GridFlags synth_grid;
  synth_cmd->add_option("--n", synth_spec.n, "samples")->capture_default_str();
  synth_cmd->add_option("--height", synth_spec.h, "map height")->capture_default_str();
  synth_cmd->add_option("--width", synth_spec.w, "map width")->capture_default_str();
  synth_cmd->add_option("--channels", synth_spec.c, "channels")->capture_default_str();
  synth_cmd->add_option("--preset", synth_preset,
                        "independent, equicorrelated, copy_channel, smooth_vs_noise")
      ->capture_default_str();
  synth_cmd->add_option("--rho", synth_spec.rho, "equicorrelated correlation")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_spec.seed, "rng seed")->capture_default_str();
  synth_cmd->add_option("--output", synth_output, "latent npy path")->required();
  add_grid_flags(synth_cmd, synth_grid);
  synth_cmd->callback([&] {
    synth_spec.preset = synth_preset_from_name(synth_preset);
    LatentTensor t = gen_latents(synth_spec);
    write_npy(synth_output, t);
    SidecarMeta meta;
    meta.quantizer = spec_from(synth_grid);
    meta.source = std::string("synth:") + synth_preset;
    write_sidecar(sidecar_path(synth_output), meta);
  });

  // --- quantize ------------------------------------------------------------
  auto* quant_cmd =
      app.add_subcommand("quantize", "encode latents to tokens (npy + sidecar)");
  std::string quant_input, quant_output;
  GridFlags quant_grid;
  quant_cmd->add_option("--input", quant_input, "latent npy")->required();
  quant_cmd->add_option("--output", quant_output, "token npy path")->required();
  add_grid_flags(quant_cmd, quant_grid);
  quant_cmd->callback([&] {
    QuantizerSpec spec = spec_from(quant_grid);
    LatentTensor latents = read_latent(quant_input);
    TokenTensor tokens = encode_tensor(latents, build_grid(spec));
    write_npy(quant_output, tokens);
    SidecarMeta meta;
    meta.quantizer = spec;
    if (auto in_meta = try_sidecar(quant_input)) {
      meta.channel_order = in_meta->channel_order;
    }
    meta.source = "quantize:" + quant_input;
    write_sidecar(sidecar_path(quant_output), meta);
  });

  // --- dequantize ------------------------------------------------------------
  auto* dequant_cmd =
      app.add_subcommand("dequantize", "decode tokens back to latents");
  std::string dequant_input, dequant_output;
  dequant_cmd->add_option("--input", dequant_input, "token npy (with sidecar)")
      ->required();
  dequant_cmd->add_option("--output", dequant_output, "latent npy path")->required();
  dequant_cmd->callback([&] {
    SidecarMeta meta = require_sidecar(dequant_input);
    TokenTensor tokens = read_npy<uint16_t>(dequant_input);
    LatentTensor latents = decode_tensor(tokens, build_grid(meta.quantizer));
    write_npy(dequant_output, latents);
    meta.source = "dequantize:" + dequant_input;
    write_sidecar(sidecar_path(dequant_output), meta);
  });

  // --- stats ---------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand(
      "stats", "codec round-trip report from an original/round-trip pair");
  std::string stats_original, stats_roundtrip, stats_output;
  std::string stats_format = "json";
  bool stats_normalized = false;
  stats_cmd->add_option("--original", stats_original, "original latent npy")
      ->required();
  stats_cmd->add_option("--roundtrip", stats_roundtrip,
                        "de-quantized latent npy (with sidecar)")
      ->required();
  stats_cmd->add_flag("--normalized", stats_normalized,
                      "measure MSE in the normalized domain");
  stats_cmd->add_option("--format", stats_format, "json or text")
      ->capture_default_str();
  stats_cmd->add_option("--output", stats_output, "write report here");
  stats_cmd->callback([&] {
    LatentTensor original = read_latent(stats_original);
    LatentTensor roundtrip = read_latent(stats_roundtrip);
    SidecarMeta meta = require_sidecar(stats_roundtrip);
    QuantizerGrid grid = build_grid(meta.quantizer);
    if (!(original.shape == roundtrip.shape)) {
      throw validation_error("original shape " + original.shape.str() +
                             " does not match round-trip shape " +
                             roundtrip.shape.str());
    }
    LatentTensor recomputed = decode_tensor(encode_tensor(original, grid), grid);
    if (recomputed.data != roundtrip.data) {
      throw validation_error(
          "round-trip file does not match re-encoding the original with its "
          "sidecar quantizer");
    }
    CodecReport rep = roundtrip_report(original, grid, stats_normalized);
    if (stats_format == "text") {
      char line[160];
      std::snprintf(line, sizeof line,
                    "mse %.6g  psnr %.2f dB  ks %.4f  (%s domain)\n",
                    rep.overall_mse, rep.psnr_db, rep.ks_stat,
                    rep.normalized_domain ? "normalized" : "feature");
      emit(line, stats_output);
    } else if (stats_format == "json") {
      emit(report_to_json(rep), stats_output);
    } else {
      throw validation_error("--format must be json or text");
    }
  });

  // --- order -----------------------------------------------------------------
  auto* order_cmd = app.add_subcommand(
      "order", "channel generation order from low-frequency energy");
  std::string order_input, order_output;
  double order_radius = 0.25;
  bool order_update = false;
  order_cmd->add_option("--input", order_input, "latent npy")->required();
  order_cmd->add_option("--radius-frac", order_radius, "low-frequency disk radius")
      ->capture_default_str();
  order_cmd->add_flag("--update-sidecar", order_update,
                      "store the permutation in the input's sidecar");
  order_cmd->add_option("--output", order_output, "write JSON here");
  order_cmd->callback([&] {
    LatentTensor latents = read_latent(order_input);
    ChannelOrder order = order_channels(latents, order_radius);
    std::string out = "{\n  \"permutation\": [";
    for (size_t i = 0; i < order.permutation.size(); ++i) {
      if (i) out += ", ";
      out += std::to_string(order.permutation[i]);
    }
    out += "],\n  \"ratios\": " + json_real_array(order.ratios) + "\n}\n";
    emit(out, order_output);
    if (order_update) {
      SidecarMeta meta = require_sidecar(order_input);
      meta.channel_order = order.permutation;
      write_sidecar(sidecar_path(order_input), meta);
    }
  });

  // --- train-head -------------------------------------------------------------
  auto* train_cmd =
      app.add_subcommand("train-head", "train the channel-wise token head");
  std::string train_data, train_output, train_mode = "autoregressive";
  std::string train_context = "spatial";
  ARHeadDims train_dims;
  TrainConfig train_cfg;
  train_cmd->add_option("--data", train_data, "token npy (with sidecar)")->required();
  train_cmd->add_option("--output", train_output, "checkpoint path")->required();
  train_cmd->add_option("--steps", train_cfg.steps, "optimizer steps")
      ->capture_default_str();
  train_cmd->add_option("--batch", train_cfg.batch, "batch size")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate, "learning rate")
      ->capture_default_str();
  train_cmd->add_option("--label-dropout", train_cfg.label_dropout,
                        "null-class dropout probability")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed, "rng seed")->capture_default_str();
  train_cmd->add_option("--d-embed", train_dims.d_embed, "token embedding width")
      ->capture_default_str();
  train_cmd->add_option("--d-hidden", train_dims.d_hidden, "hidden width")
      ->capture_default_str();
  train_cmd->add_option("--d-ctx", train_dims.d_ctx, "context width")
      ->capture_default_str();
  train_cmd->add_option("--num-classes", train_dims.num_classes, "class count")
      ->capture_default_str();
  train_cmd->add_option("--mode", train_mode, "autoregressive or parallel")
      ->capture_default_str();
  train_cmd->add_option("--context", train_context,
                        "row context: spatial or vector")
      ->capture_default_str();
  train_cmd->callback([&] {
    auto meta = require_sidecar(train_data);
    TokenTensor tokens = read_npy<uint16_t>(train_data);
    QuantizerGrid grid = build_grid(meta.quantizer);
    HeadDataset rows = rows_from_tokens(tokens, grid, train_context);
    train_dims.levels = meta.quantizer.levels;
    train_dims.channels = static_cast<int>(tokens.shape.c);
    ARHeadParams params =
        init_params(train_dims, prediction_mode_from_name(train_mode),
                    order_for(meta, tokens.shape.c), train_cfg.seed);
    TrainResult result = train(params, rows, train_cfg);
    write_checkpoint(train_output, params, meta.quantizer);
    std::string out = "{\n  \"steps\": " + std::to_string(train_cfg.steps);
    if (!result.losses.empty()) {
      out += ",\n  \"initial_loss\": ";
      detail::append_real17(out, result.losses.front());
      out += ",\n  \"final_loss\": ";
      detail::append_real17(out, result.losses.back());
    }
    out += ",\n  \"losses\": " + json_real_array(result.losses) + "\n}\n";
    std::cout << out;
  });

  // --- sample ------------------------------------------------------------------
  auto* sample_cmd =
      app.add_subcommand("sample", "generate latent maps from a checkpoint");
  std::string sample_ckpt, sample_prefix, sample_confidence = "off";
  int64_t sample_n = 1, sample_h = 16, sample_w = 16;
  int sample_label = 0;
  SampleConfig sample_cfg;
  sample_cmd->add_option("--ckpt", sample_ckpt, "checkpoint path")->required();
  sample_cmd->add_option("--output", sample_prefix, "output path prefix")->required();
  sample_cmd->add_option("--n", sample_n, "number of samples")->capture_default_str();
  sample_cmd->add_option("--height", sample_h, "map height")->capture_default_str();
  sample_cmd->add_option("--width", sample_w, "map width")->capture_default_str();
  sample_cmd->add_option("--label", sample_label, "class label")
      ->capture_default_str();
  sample_cmd->add_option("--temperature", sample_cfg.temperature, "softmax divisor")
      ->capture_default_str();
  sample_cmd->add_option("--guidance", sample_cfg.guidance_scale, "guidance scale")
      ->capture_default_str();
  sample_cmd
      ->add_option("--confidence", sample_confidence, "off, topk:K, or thr:T")
      ->capture_default_str();
  sample_cmd->add_option("--seed", sample_cfg.seed, "rng seed")
      ->capture_default_str();
  sample_cmd->callback([&] {
    Checkpoint ck = read_checkpoint(sample_ckpt);
    QuantizerGrid grid = build_grid(ck.quantizer);
    SampleConfig cfg = parse_confidence(sample_confidence, sample_cfg);
    if (sample_n < 1) throw validation_error("--n must be positive");
    LatentTensor latents(sample_n, sample_h, sample_w, ck.params.dims.channels);
    TokenTensor tokens(sample_n, sample_h, sample_w, ck.params.dims.channels);
    Tensor4<float> confidence(sample_n, sample_h, sample_w, 1);
    size_t map_vals = static_cast<size_t>(sample_h * sample_w) *
                      static_cast<size_t>(ck.params.dims.channels);
    size_t conf_vals = static_cast<size_t>(sample_h * sample_w);
    for (int64_t i = 0; i < sample_n; ++i) {
      SampleConfig per = cfg;
      per.seed = cfg.seed + static_cast<uint64_t>(i);
      GenerateResult one = generate_spatial(ck.params, grid, sample_h, sample_w,
                                            sample_label, per);
      std::copy(one.latents.data.begin(), one.latents.data.end(),
                latents.data.begin() + static_cast<int64_t>(map_vals) * i);
      std::copy(one.tokens.data.begin(), one.tokens.data.end(),
                tokens.data.begin() + static_cast<int64_t>(map_vals) * i);
      std::copy(one.confidence.data.begin(), one.confidence.data.end(),
                confidence.data.begin() + static_cast<int64_t>(conf_vals) * i);
    }
    std::string latents_path = sample_prefix + ".latents.npy";
    std::string tokens_path = sample_prefix + ".tokens.npy";
    std::string conf_path = sample_prefix + ".confidence.npy";
    write_npy(latents_path, latents);
    write_npy(tokens_path, tokens);
    write_npy(conf_path, confidence);
    SidecarMeta meta;
    meta.quantizer = ck.quantizer;
    meta.channel_order = ck.params.order;
    meta.source = "sample:" + sample_ckpt;
    write_sidecar(sidecar_path(latents_path), meta);
    write_sidecar(sidecar_path(tokens_path), meta);
    std::cout << "{\n  \"latents\": \"" << latents_path << "\",\n  \"tokens\": \""
              << tokens_path << "\",\n  \"confidence\": \"" << conf_path
              << "\"\n}\n";
  });

  // --- eval-head ---------------------------------------------------------------
  auto* eval_cmd =
      app.add_subcommand("eval-head", "mean NLL of a checkpoint on a token file");
  std::string eval_ckpt, eval_data, eval_mode, eval_context = "spatial";
  std::string eval_format = "json", eval_output;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "token npy (with sidecar)")->required();
  eval_cmd->add_option("--mode", eval_mode,
                       "override prefix handling: autoregressive or parallel");
  eval_cmd->add_option("--context", eval_context, "row context: spatial or vector")
      ->capture_default_str();
  eval_cmd->add_option("--format", eval_format, "json or text")
      ->capture_default_str();
  eval_cmd->add_option("--output", eval_output, "write report here");
  eval_cmd->callback([&] {
    Checkpoint ck = read_checkpoint(eval_ckpt);
    auto meta = require_sidecar(eval_data);
    TokenTensor tokens = read_npy<uint16_t>(eval_data);
    if (tokens.shape.c != ck.params.dims.channels) {
      throw validation_error("data has " + std::to_string(tokens.shape.c) +
                             " channels but the head expects " +
                             std::to_string(ck.params.dims.channels));
    }
    QuantizerGrid grid = build_grid(meta.quantizer);
    HeadDataset rows = rows_from_tokens(tokens, grid, eval_context);
    if (!eval_mode.empty()) ck.params.mode = prediction_mode_from_name(eval_mode);
    double nll = nll_loss(ck.params, rows);
    double per_position = nll * static_cast<double>(ck.params.dims.channels);
    if (eval_format == "text") {
      char line[160];
      std::snprintf(line, sizeof line, "nll %.6f nats/channel (%.6f per position)\n",
                    nll, per_position);
      emit(line, eval_output);
    } else if (eval_format == "json") {
      std::string out = "{\n  \"mode\": \"";
      out += prediction_mode_name(ck.params.mode);
      out += "\",\n  \"rows\": " + std::to_string(rows.size());
      out += ",\n  \"nll_per_channel\": ";
      detail::append_real17(out, nll);
      out += ",\n  \"nll_per_position\": ";
      detail::append_real17(out, per_position);
      out += "\n}\n";
      emit(out, eval_output);
    } else {
      throw validation_error("--format must be json or text");
    }
  });

  // --- bench --------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand(
      "bench", "time channel-sequential sampling, ms per token");
  std::string bench_ckpt, bench_format = "text", bench_output;
  int bench_runs = 100;
  uint64_t bench_seed = 0;
  bench_cmd->add_option("--ckpt", bench_ckpt, "checkpoint path")->required();
  bench_cmd->add_option("--runs", bench_runs, "timed runs")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed, "rng seed")->capture_default_str();
  bench_cmd->add_option("--format", bench_format, "json or text")
      ->capture_default_str();
  bench_cmd->add_option("--output", bench_output, "write report here");
  bench_cmd->callback([&] {
    if (bench_runs < 2) throw validation_error("--runs must be at least 2");
    Checkpoint ck = read_checkpoint(bench_ckpt);
    ContextVector z = context_vector(ck.params, nullptr, 0);
    SampleConfig cfg;
    cfg.guidance_scale = 1.0;
    Rng rng(bench_seed);
    for (int i = 0; i < 3; ++i) sample_channels(ck.params, z, nullptr, cfg, rng);
    std::vector<double> ms(static_cast<size_t>(bench_runs));
    for (int i = 0; i < bench_runs; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      sample_channels(ck.params, z, nullptr, cfg, rng);
      auto t1 = std::chrono::steady_clock::now();
      ms[static_cast<size_t>(i)] =
          std::chrono::duration<double, std::milli>(t1 - t0).count() /
          static_cast<double>(ck.params.dims.channels);
    }
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= static_cast<double>(bench_runs);
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    double std_dev = std::sqrt(var / static_cast<double>(bench_runs - 1));
    if (bench_format == "json") {
      std::string out = "{\n  \"runs\": " + std::to_string(bench_runs);
      out += ",\n  \"ms_per_token_mean\": ";
      detail::append_real17(out, mean);
      out += ",\n  \"ms_per_token_std\": ";
      detail::append_real17(out, std_dev);
      out += "\n}\n";
      emit(out, bench_output);
    } else if (bench_format == "text") {
      char line[120];
      std::snprintf(line, sizeof line, "%.4f ± %.4f ms/token (%d runs)\n",
                    mean, std_dev, bench_runs);
      emit(line, bench_output);
    } else {
      throw validation_error("--format must be json or text");
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
