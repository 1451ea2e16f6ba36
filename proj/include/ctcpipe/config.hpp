#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctcpipe/decision.hpp"
#include "ctcpipe/detector.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/pipeline.hpp"
#include "ctcpipe/segmentation.hpp"

namespace ctc {

/// Everything a detect run needs. A calibrated params file ({r1, r2,
/// semantics}) is a valid config on its own.
struct RunConfig {
  DetectorBinding stage1{DetectorKind::classical, Stage::stage1_ck, std::nullopt, false, {}};
  DetectorBinding stage2{DetectorKind::classical, Stage::stage2_dapi, std::nullopt, false, {}};
  PipelineConfig pipeline;
  SizeFilter size_filter;
  unsigned workers = 1;

  /// Pushes the shared thresholds into the classical detector settings.
  void sync_detectors() {
    for (auto* b : {&stage1, &stage2}) {
      b->classical.size_filter = size_filter;
      b->classical.dapi_score_threshold = pipeline.dapi_score_threshold;
      b->classical.separation = pipeline.separation;
    }
  }
};

/// All range violations, each naming its field and bound. Empty when valid.
inline std::vector<std::string> violations(const RunConfig& c) {
  std::vector<std::string> out;
  auto unit = [&](const char* field, double v) {
    if (!(v >= 0.0 && v <= 1.0)) out.push_back(std::string(field) + " must lie in [0,1], got " + std::to_string(v));
  };
  unit("r1", c.pipeline.params.r1);
  unit("r2", c.pipeline.params.r2);
  unit("dapi_score_threshold", c.pipeline.dapi_score_threshold);
  if (c.pipeline.crop_padding < 0) out.push_back("crop_padding must be >= 0");
  if (!(c.pipeline.separation.min_gap >= 0.0 && c.pipeline.separation.min_gap <= 255.0)) {
    out.push_back("min_class_separation must lie in [0,255]");
  }
  if (!(c.pipeline.separation.min_gap_to_spread >= 0.0)) out.push_back("min_separation_ratio must be >= 0");
  if (c.pipeline.min_ctc_count < 1) out.push_back("min_ctc_count must be >= 1");
  if (c.workers < 1 || c.workers > 1024) out.push_back("workers must lie in [1,1024]");
  if (c.size_filter.microns_per_pixel && !(*c.size_filter.microns_per_pixel > 0.0)) {
    out.push_back("microns_per_pixel must be > 0");
  }
  if (!(c.size_filter.min_diameter_um >= 0.0)) out.push_back("min_diameter_um must be >= 0");
  for (const auto* b : {&c.stage1, &c.stage2}) {
    if (b->kind == DetectorKind::external && (!b->endpoint || b->endpoint->empty())) {
      out.push_back("detectors." + std::string(to_string(b->stage)) + ".endpoint is required for external detectors");
    }
  }
  return out;
}

inline void validate(const RunConfig& c) {
  const auto v = violations(c);
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
  throw Error(ErrorCode::config, msg);
}

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const char* name, std::vector<std::string>& errors, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back(std::string(name) + " has the wrong type");
    return fallback;
  }
}

inline void read_binding(const nlohmann::json& j, DetectorBinding& b, std::vector<std::string>& errors) {
  const std::string prefix = "detectors." + std::string(to_string(b.stage)) + ".";
  if (!j.is_object()) {
    errors.push_back(prefix + " must be an object");
    return;
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "endpoint" && key != "concurrency_safe") errors.push_back("unknown key " + prefix + key);
  }
  const auto kind = field<std::string>(j, "kind", errors, "classical");
  if (kind == "classical") {
    b.kind = DetectorKind::classical;
  } else if (kind == "external") {
    b.kind = DetectorKind::external;
  } else {
    errors.push_back(prefix + "kind must be 'classical' or 'external'");
  }
  if (j.contains("endpoint")) b.endpoint = field<std::string>(j, "endpoint", errors, "");
  b.concurrency_safe = field<bool>(j, "concurrency_safe", errors, false);
}

}  // namespace detail

/// Builds a RunConfig from JSON over the defaults. Unknown keys and range
/// violations are all reported together in one ErrorCode::config.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::config, "configuration must be a JSON object");
  static const std::set<std::string> known{"r1",
                                           "r2",
                                           "semantics",
                                           "crop_padding",
                                           "dapi_score_threshold",
                                           "min_class_separation",
                                           "min_separation_ratio",
                                           "cd45_mode",
                                           "min_ctc_count",
                                           "workers",
                                           "microns_per_pixel",
                                           "min_diameter_um",
                                           "detectors"};
  std::vector<std::string> errors;
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) errors.push_back("unknown key '" + key + "'");
  }
  RunConfig c;
  auto& p = c.pipeline;
  p.params.r1 = detail::field<double>(j, "r1", errors, p.params.r1);
  p.params.r2 = detail::field<double>(j, "r2", errors, p.params.r2);
  if (j.contains("semantics")) {
    try {
      p.params.semantics = parse_semantics(detail::field<std::string>(j, "semantics", errors, "exclusionary"));
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  p.crop_padding = detail::field<int>(j, "crop_padding", errors, p.crop_padding);
  p.dapi_score_threshold = detail::field<double>(j, "dapi_score_threshold", errors, p.dapi_score_threshold);
  p.separation.min_gap = detail::field<double>(j, "min_class_separation", errors, p.separation.min_gap);
  p.separation.min_gap_to_spread =
      detail::field<double>(j, "min_separation_ratio", errors, p.separation.min_gap_to_spread);
  const auto mode = detail::field<std::string>(j, "cd45_mode", errors, "per-crop");
  if (mode == "per-crop") {
    p.cd45_mode = Cd45Mode::per_crop;
  } else if (mode == "full-layer") {
    p.cd45_mode = Cd45Mode::full_layer;
  } else {
    errors.push_back("cd45_mode must be 'per-crop' or 'full-layer'");
  }
  p.min_ctc_count = detail::field<int>(j, "min_ctc_count", errors, p.min_ctc_count);
  const auto workers = detail::field<long long>(j, "workers", errors, 1);
  c.workers = workers < 1 ? 0u : static_cast<unsigned>(std::min<long long>(workers, 1u << 20));
  if (j.contains("microns_per_pixel") && !j["microns_per_pixel"].is_null()) {
    c.size_filter.microns_per_pixel = detail::field<double>(j, "microns_per_pixel", errors, 0.0);
  }
  c.size_filter.min_diameter_um = detail::field<double>(j, "min_diameter_um", errors, c.size_filter.min_diameter_um);
  if (j.contains("detectors")) {
    const auto& d = j["detectors"];
    if (!d.is_object()) {
      errors.push_back("detectors must be an object");
    } else {
      for (const auto& [key, value] : d.items()) {
        if (key == "stage1_ck") {
          detail::read_binding(value, c.stage1, errors);
        } else if (key == "stage2_dapi") {
          detail::read_binding(value, c.stage2, errors);
        } else {
          errors.push_back("unknown key 'detectors." + key + "'");
        }
      }
    }
  }
  for (auto& v : violations(c)) errors.push_back(std::move(v));
  if (!errors.empty()) {
    std::string msg;
    for (const auto& s : errors) msg += (msg.empty() ? "" : "; ") + s;
    throw Error(ErrorCode::config, msg);
  }
  c.sync_detectors();
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
}

inline nlohmann::json params_to_json(const DecisionParams& p) {
  return nlohmann::json{{"r1", p.r1}, {"r2", p.r2}, {"semantics", to_string(p.semantics)}};
}

}  // namespace ctc
