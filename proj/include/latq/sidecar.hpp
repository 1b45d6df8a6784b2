#pragma once

#include <algorithm>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/io.hpp"
#include "latq/quantizer.hpp"

// JSON sidecar that travels with every token file: which quantizer produced
// the tokens, and (optionally) the channel visitation order that models
// should use.

namespace latq {

inline constexpr int kSidecarFormatVersion = 1;

struct SidecarMeta {
  int format_version = kSidecarFormatVersion;
  QuantizerSpec quantizer;
  std::optional<std::vector<int>> channel_order;
  std::string source;

  bool operator==(const SidecarMeta&) const = default;
};

// True iff v is a permutation of 0..v.size()-1.
inline bool is_permutation_of_iota(const std::vector<int>& v) {
  std::vector<bool> seen(v.size(), false);
  for (int x : v) {
    if (x < 0 || static_cast<size_t>(x) >= v.size() || seen[static_cast<size_t>(x)]) {
      return false;
    }
    seen[static_cast<size_t>(x)] = true;
  }
  return true;
}

inline void validate_channel_order(const std::vector<int>& order) {
  if (!is_permutation_of_iota(order)) {
    throw validation_error("channel_order is not a permutation of 0.." +
                           std::to_string(order.size() ? order.size() - 1 : 0));
  }
}

inline void write_sidecar(const std::string& path, const SidecarMeta& meta) {
  if (meta.channel_order) validate_channel_order(*meta.channel_order);
  meta.quantizer.validate();
  nlohmann::ordered_json j;
  j["format_version"] = meta.format_version;
  j["quantizer"] = {{"scheme", scheme_name(meta.quantizer.scheme)},
                    {"B", meta.quantizer.levels},
                    {"r", meta.quantizer.half_range},
                    {"alpha_min", meta.quantizer.alpha_min},
                    {"alpha_max", meta.quantizer.alpha_max}};
  if (meta.channel_order) j["channel_order"] = *meta.channel_order;
  j["source"] = meta.source;
  atomic_write(path, j.dump(2) + "\n");
}

inline SidecarMeta read_sidecar(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(format_code::bad_header,
                       path + " is not valid JSON: " + e.what());
  }
  SidecarMeta meta;
  try {
    meta.format_version = j.at("format_version").get<int>();
    if (meta.format_version != kSidecarFormatVersion) {
      throw format_error(format_code::sidecar_version,
                         path + " has format_version " +
                             std::to_string(meta.format_version) +
                             ", this build reads version " +
                             std::to_string(kSidecarFormatVersion));
    }
    const auto& q = j.at("quantizer");
    meta.quantizer.scheme = scheme_from_name(q.at("scheme").get<std::string>());
    meta.quantizer.levels = q.at("B").get<int>();
    meta.quantizer.half_range = q.at("r").get<double>();
    meta.quantizer.alpha_min = q.at("alpha_min").get<double>();
    meta.quantizer.alpha_max = q.at("alpha_max").get<double>();
    if (j.contains("channel_order")) {
      meta.channel_order = j.at("channel_order").get<std::vector<int>>();
      validate_channel_order(*meta.channel_order);
    }
    meta.source = j.value("source", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw format_error(format_code::bad_header,
                       path + " is missing sidecar fields: " + e.what());
  }
  meta.quantizer.validate();
  return meta;
}

// Natural order 0..c-1 when the sidecar does not pin one.
inline std::vector<int> effective_channel_order(const SidecarMeta& meta, int c) {
  if (!meta.channel_order) {
    std::vector<int> order(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) order[static_cast<size_t>(i)] = i;
    return order;
  }
  if (static_cast<int>(meta.channel_order->size()) != c) {
    throw validation_error("channel_order length " +
                           std::to_string(meta.channel_order->size()) +
                           " does not match channel count " + std::to_string(c));
  }
  return *meta.channel_order;
}

}  // namespace latq
