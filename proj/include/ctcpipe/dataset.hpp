#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctcpipe/config.hpp"
#include "ctcpipe/decision.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/png_io.hpp"
#include "ctcpipe/raster.hpp"
#include "ctcpipe/synthgen.hpp"

// On-disk layout:
//
//   <root>/<sample_id>/ck.png, dapi.png, cd45.png   one directory per sample
//   <root>/manifest.json                            labels and planted parameters
//   <root>/candidates.jsonl                         labelled overlaps per nucleus
//   <root>/config.json                              suggested detect settings

namespace ctc {

namespace fs = std::filesystem;

inline constexpr std::array<std::string_view, 3> kChannelFiles{"ck.png", "dapi.png", "cd45.png"};

/// Sample directories under `root`, sorted by name.
inline std::vector<std::string> list_samples(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::io, root.string() + " is not a directory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline ChannelSet load_sample(const fs::path& root, const std::string& id) {
  const auto dir = root / id;
  std::array<GrayImage, 3> layers;
  for (std::size_t i = 0; i < kChannelFiles.size(); ++i) {
    const auto path = dir / kChannelFiles[i];
    if (!fs::exists(path)) throw Error(ErrorCode::io, "missing " + std::string(kChannelFiles[i]));
    layers[i] = read_png(path);
  }
  return ChannelSet(std::move(layers[0]), std::move(layers[1]), std::move(layers[2]), id);
}

inline void save_sample(const fs::path& root, const ChannelSet& x) {
  const auto dir = root / x.sample_id;
  fs::create_directories(dir);
  write_png(dir / kChannelFiles[0], x.ck);
  write_png(dir / kChannelFiles[1], x.dapi);
  write_png(dir / kChannelFiles[2], x.cd45);
}

/// Sample labels from a manifest written by write_dataset.
inline std::map<std::string, bool> read_manifest_labels(const fs::path& manifest) {
  const auto j = read_json_file(manifest);
  std::map<std::string, bool> labels;
  try {
    for (const auto& s : j.at("samples")) labels[s.at("sample_id").get<std::string>()] = s.at("label").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, manifest.string() + ": " + e.what());
  }
  return labels;
}

namespace detail {

inline synth::Disc disc_from_json(const nlohmann::json& j) {
  synth::Disc d;
  d.cx = j.at("center").at(0).get<int>();
  d.cy = j.at("center").at(1).get<int>();
  d.radius = j.at("radius").get<int>();
  d.intensity = static_cast<std::uint8_t>(std::clamp(j.value("intensity", 200), 0, 255));
  return d;
}

}  // namespace detail

/// Scene spec document:
///   {"sample_id", "seed", "width", "height", "background",
///    "ck_blobs": [{"center": [x,y], "radius", "intensity"}],
///    "dapi_blobs": [{"center", "radius", "intensity", "planted_ck_overlap",
///                    "planted_cd45_overlap", "cd45_radius"}],
///    "cd45_blobs": [...], "noise": {"kind", "amplitude"},
///    "flare": {"center", "radius", "strength"}}
inline synth::SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  synth::SceneSpec s;
  try {
    s.sample_id = j.value("sample_id", s.sample_id);
    s.seed = j.value("seed", s.seed);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.background = static_cast<std::uint8_t>(std::clamp(j.value("background", 16), 0, 255));
    for (const auto& b : j.value("ck_blobs", nlohmann::json::array())) s.ck_blobs.push_back(detail::disc_from_json(b));
    for (const auto& b : j.value("cd45_blobs", nlohmann::json::array())) {
      s.cd45_blobs.push_back(detail::disc_from_json(b));
    }
    for (const auto& b : j.value("dapi_blobs", nlohmann::json::array())) {
      synth::DapiBlob d;
      d.cx = b.at("center").at(0).get<int>();
      d.cy = b.at("center").at(1).get<int>();
      d.radius = b.at("radius").get<int>();
      d.intensity = static_cast<std::uint8_t>(std::clamp(b.value("intensity", 240), 0, 255));
      d.planted_ck_overlap = b.value("planted_ck_overlap", 1.0);
      d.planted_cd45_overlap = b.value("planted_cd45_overlap", 0.0);
      d.cd45_radius = b.value("cd45_radius", 0);
      s.dapi_blobs.push_back(d);
    }
    if (j.contains("noise")) {
      const auto kind = j["noise"].value("kind", std::string("none"));
      if (kind == "none") {
        s.noise.kind = synth::NoiseKind::none;
      } else if (kind == "gaussian") {
        s.noise.kind = synth::NoiseKind::gaussian;
      } else if (kind == "salt_pepper") {
        s.noise.kind = synth::NoiseKind::salt_pepper;
      } else {
        throw Error(ErrorCode::invalid_argument, "unknown noise kind '" + kind + "'");
      }
      s.noise.amplitude = j["noise"].value("amplitude", 0);
    }
    if (j.contains("flare") && !j["flare"].is_null()) {
      const auto& f = j["flare"];
      s.flare = synth::Flare{f.at("center").at(0).get<int>(), f.at("center").at(1).get<int>(), f.value("radius", 32),
                             f.value("strength", 60)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("scene spec: ") + e.what());
  }
  return s;
}

struct DatasetSummary {
  std::size_t n = 0;
  std::size_t positives = 0;
};

/// Renders `scenes` into `root` and writes the manifest, candidate records
/// and a suggested config. Failures name the offending sample index.
inline DatasetSummary write_dataset(const std::vector<synth::PlannedScene>& scenes, const fs::path& root,
                                    const DecisionParams& params, int crop_padding, std::uint64_t seed) {
  fs::create_directories(root);
  nlohmann::json samples = nlohmann::json::array();
  std::ofstream candidates(root / "candidates.jsonl");
  if (!candidates) throw Error(ErrorCode::io, "cannot write " + (root / "candidates.jsonl").string());

  DatasetSummary summary;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& planned = scenes[i];
    synth::Scene scene;
    try {
      scene = synth::generate(planned.spec, params);
      save_sample(root, scene.channels);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::io, "sample " + std::to_string(i) + " (" + planned.spec.sample_id + "): " + e.what());
    }
    const bool label = scene.truth.sample_positive();
    summary.positives += label;
    nlohmann::json nuclei = nlohmann::json::array();
    for (std::size_t k = 0; k < scene.truth.candidates.size(); ++k) {
      const auto& c = scene.truth.candidates[k];
      const auto& req = planned.spec.dapi_blobs[k];
      nuclei.push_back({{"center", {c.cx2 / 2.0, c.cy2 / 2.0}},
                        {"planted_ck_overlap", req.planted_ck_overlap},
                        {"planted_cd45_overlap", req.planted_cd45_overlap},
                        {"p_ck_given_c", c.p_ck_given_c},
                        {"p_cd45_given_c", c.p_cd45_given_c},
                        {"is_ctc", c.is_ctc}});
      candidates << nlohmann::json{{"sample_id", planned.spec.sample_id},
                                   {"p_ck_given_c", c.p_ck_given_c},
                                   {"p_cd45_given_c", c.p_cd45_given_c},
                                   {"label", c.is_ctc}}
                        .dump()
                 << '\n';
    }
    samples.push_back({{"sample_id", planned.spec.sample_id},
                       {"label", label},
                       {"planted_positive", planned.planted_positive},
                       {"seed", planned.spec.seed},
                       {"nuclei", std::move(nuclei)}});
    ++summary.n;
  }

  nlohmann::json manifest{{"seed", seed},
                          {"n", summary.n},
                          {"positives", summary.positives},
                          {"params", params_to_json(params)},
                          {"samples", std::move(samples)}};
  std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';

  auto cfg = params_to_json(params);
  cfg["crop_padding"] = crop_padding;
  std::ofstream(root / "config.json") << cfg.dump(2) << '\n';
  return summary;
}

}  // namespace ctc
