#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ctcpipe/ctcpipe.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ctc;
namespace ts = testing_support;

namespace {

std::string config_error(const nlohmann::json& j) {
  try {
    run_config_from_json(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << j.dump();
  return {};
}

}  // namespace

TEST(Config, DefaultsFromEmptyObject) {
  const auto c = run_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.pipeline.params.r1, 0.17);
  EXPECT_EQ(c.pipeline.params.r2, 0.2);
  EXPECT_EQ(c.pipeline.params.semantics, Semantics::exclusionary);
  EXPECT_EQ(c.pipeline.dapi_score_threshold, 0.9);
  EXPECT_EQ(c.pipeline.min_ctc_count, 1);
  EXPECT_FALSE(c.size_filter.active());
  EXPECT_EQ(c.stage1.kind, DetectorKind::classical);
}

TEST(Config, ReadsEveryField) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({
    "r1": 0.3, "r2": 0.4, "semantics": "paper-literal", "crop_padding": 7,
    "dapi_score_threshold": 0.8, "min_class_separation": 10, "min_separation_ratio": 3,
    "cd45_mode": "full-layer",
    "min_ctc_count": 2, "workers": 3, "microns_per_pixel": 0.5, "min_diameter_um": 6,
    "detectors": {"stage2_dapi": {"kind": "external", "endpoint": "./det", "concurrency_safe": true}}
  })"));
  EXPECT_EQ(c.pipeline.params.r1, 0.3);
  EXPECT_EQ(c.pipeline.params.semantics, Semantics::paper_literal);
  EXPECT_EQ(c.pipeline.crop_padding, 7);
  EXPECT_EQ(c.pipeline.separation.min_gap, 10.0);
  EXPECT_EQ(c.pipeline.separation.min_gap_to_spread, 3.0);
  EXPECT_EQ(c.stage1.classical.separation.min_gap_to_spread, 3.0);
  EXPECT_EQ(c.pipeline.cd45_mode, Cd45Mode::full_layer);
  EXPECT_EQ(c.workers, 3u);
  EXPECT_EQ(*c.size_filter.microns_per_pixel, 0.5);
  EXPECT_EQ(c.stage2.kind, DetectorKind::external);
  EXPECT_EQ(*c.stage2.endpoint, "./det");
  EXPECT_TRUE(c.stage2.concurrency_safe);
  EXPECT_EQ(c.stage2.classical.dapi_score_threshold, 0.8);
  EXPECT_EQ(c.stage1.classical.size_filter.min_diameter_um, 6.0);
}

TEST(Config, ReportsEveryProblemByName) {
  const auto msg = config_error(nlohmann::json::parse(R"({"r1": 1.5, "r2": -0.1, "colour": 1, "workers": 0})"));
  EXPECT_NE(msg.find("r1"), std::string::npos);
  EXPECT_NE(msg.find("r2"), std::string::npos);
  EXPECT_NE(msg.find("colour"), std::string::npos);
  EXPECT_NE(msg.find("workers"), std::string::npos);
}

TEST(Config, Rejections) {
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"semantics": "loose"})")).find("semantics"), std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"r1": "high"})")).find("r1"), std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"detectors": {"stage1_ck": {"kind": "external"}}})")).find("endpoint"),
            std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"microns_per_pixel": 0})")).find("microns_per_pixel"),
            std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"cd45_mode": "global"})")).find("cd45_mode"), std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"min_separation_ratio": -1})")).find("min_separation_ratio"),
            std::string::npos);
  EXPECT_NE(config_error(nlohmann::json::parse(R"({"min_class_separation": 300})")).find("min_class_separation"),
            std::string::npos);
  EXPECT_FALSE(config_error(nlohmann::json::array()).empty());
}

TEST(Config, CalibratedParamsFileIsAValidConfig) {
  const auto c = run_config_from_json(params_to_json({0.25, 0.05, Semantics::exclusionary}));
  EXPECT_EQ(c.pipeline.params.r1, 0.25);
  EXPECT_EQ(c.pipeline.params.r2, 0.05);
}

TEST(Png, EightBitRoundTrip) {
  ts::TempDir dir;
  std::mt19937_64 rng(2);
  const auto img = oracle::random_image(rng, 37, 19);
  write_png(dir / "a.png", img);
  EXPECT_EQ(read_png(dir / "a.png"), img);
}

TEST(Png, SixteenBitKeepsTheHighByte) {
  ts::TempDir dir;
  std::mt19937_64 rng(3);
  const auto img = oracle::random_image(rng, 21, 30);
  write_png16(dir / "b.png", img);
  EXPECT_EQ(read_png(dir / "b.png"), img);
}

TEST(Png, MissingAndCorruptFilesAreIoErrors) {
  ts::TempDir dir;
  try {
    read_png(dir / "none.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
  std::ofstream(dir / "junk.png") << "definitely not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), Error);
  // A valid signature followed by garbage exercises the decoder's error path.
  std::ofstream(dir / "trunc.png", std::ios::binary) << "\x89PNG\r\n\x1a\n" << std::string(64, 'x');
  EXPECT_THROW(read_png(dir / "trunc.png"), Error);
}

TEST(Dataset, MissingChannelIsNamed) {
  ts::TempDir dir;
  synth::SceneSpec s;
  s.sample_id = "x1";
  auto x = synth::generate(s).channels;
  save_sample(dir.path(), x);
  std::filesystem::remove(dir / "x1" / "cd45.png");
  try {
    load_sample(dir.path(), "x1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
    EXPECT_NE(std::string(e.what()).find("cd45.png"), std::string::npos);
  }
}

TEST(Dataset, SceneSpecFromJson) {
  const auto s = scene_spec_from_json(nlohmann::json::parse(R"({
    "sample_id": "j", "seed": 9, "width": 96, "height": 80,
    "ck_blobs": [{"center": [40, 40], "radius": 20, "intensity": 150}],
    "dapi_blobs": [{"center": [40, 40], "radius": 6, "planted_ck_overlap": 0.9}],
    "noise": {"kind": "salt_pepper", "amplitude": 5},
    "flare": {"center": [0, 0], "radius": 20, "strength": 30}
  })"));
  EXPECT_EQ(s.width, 96);
  EXPECT_EQ(s.ck_blobs.at(0).intensity, 150);
  EXPECT_EQ(s.dapi_blobs.at(0).planted_ck_overlap, 0.9);
  EXPECT_EQ(s.noise.kind, synth::NoiseKind::salt_pepper);
  ASSERT_TRUE(s.flare);
  EXPECT_THROW(scene_spec_from_json(nlohmann::json::parse(R"({"noise": {"kind": "pink"}})")), Error);
  EXPECT_THROW(scene_spec_from_json(nlohmann::json::parse(R"({"ck_blobs": [{"radius": 3}]})")), Error);
}

TEST(Results, SampleResultRoundTrip) {
  synth::SceneSpec s;
  s.sample_id = "rt";
  s.ck_blobs = {{64, 64, 22, 160}};
  synth::DapiBlob d;
  d.cx = 64;
  d.cy = 64;
  d.planted_cd45_overlap = 0.3;
  s.dapi_blobs = {d};
  PipelineConfig cfg;
  cfg.crop_padding = 18;
  DetectorBinding s1, s2;
  s2.stage = Stage::stage2_dapi;
  const auto r = Pipeline(s1, s2, cfg).run_sample(synth::generate(s).channels);
  ASSERT_EQ(r.verdicts.size(), 1u);

  const auto line = to_json(r, true, true).dump();
  const auto parsed = sample_result_from_json(nlohmann::json::parse(line));
  EXPECT_EQ(parsed.result.sample_id, r.sample_id);
  EXPECT_EQ(parsed.result.outcome, r.outcome);
  EXPECT_EQ(parsed.result.verdicts, r.verdicts);
  EXPECT_EQ(parsed.label, std::optional<bool>(true));
  EXPECT_TRUE(self_consistent(parsed.result.verdicts[0]));
}

TEST(Results, RejectsPositiveWithoutEvaluation) {
  const auto j = nlohmann::json::parse(
      R"({"sample_id":"a","outcome":"no_ck_detected","sample_positive":true,"label":null,"error":null,"verdicts":[]})");
  EXPECT_THROW(sample_result_from_json(j), Error);
}

TEST(Results, BatchReportRoundTrip) {
  BatchReport rep;
  rep.n_samples = 3;
  rep.n_evaluated = 2;
  rep.n_no_ck = 1;
  rep.n_predicted_negative = 3;
  rep.n_correct = 2;
  rep.accuracy = 2.0 / 3.0;
  const auto back = batch_report_from_json(nlohmann::json::parse(to_json(rep).dump()));
  EXPECT_EQ(back, rep);
}
