#include <gtest/gtest.h>

#include "ctcpipe/ctcpipe.hpp"
#include "test_support.hpp"

using namespace ctc;
namespace ts = testing_support;

namespace {

DetectorBinding classical(Stage s) {
  DetectorBinding b;
  b.stage = s;
  return b;
}

Pipeline classical_pipeline(PipelineConfig cfg = {}) {
  if (cfg.crop_padding == 0) cfg.crop_padding = 18;
  return Pipeline(classical(Stage::stage1_ck), classical(Stage::stage2_dapi), cfg);
}

synth::SceneSpec one_cell(double ck_overlap, double cd45_overlap) {
  synth::SceneSpec s;
  s.sample_id = "cell";
  s.ck_blobs = {{64, 64, 22, 160}};
  synth::DapiBlob d;
  d.cx = 64;
  d.cy = 64;
  d.radius = 7;
  d.planted_ck_overlap = ck_overlap;
  d.planted_cd45_overlap = cd45_overlap;
  s.dapi_blobs = {d};
  return s;
}

SampleResult fake(std::string id, Outcome o, bool positive) {
  SampleResult r;
  r.sample_id = std::move(id);
  r.outcome = o;
  r.sample_positive = positive;
  return r;
}

// The published test run: 420 negative samples, 130 without CK, 170 without
// DAPI, 120 evaluated of which 5 were called positive.
std::pair<std::vector<SampleResult>, std::map<std::string, bool>> published_counts() {
  std::vector<SampleResult> results;
  std::map<std::string, bool> labels;
  for (int i = 0; i < 420; ++i) {
    const auto id = "s" + std::to_string(i);
    const Outcome o = i < 130 ? Outcome::no_ck_detected : i < 300 ? Outcome::no_dapi_detected : Outcome::evaluated;
    results.push_back(fake(id, o, i >= 415));
    labels[id] = false;
  }
  return {results, labels};
}

}  // namespace

TEST(RunSample, PlantedPositiveIsEvaluatedPositive) {
  const auto scene = synth::generate(one_cell(1.0, 0.0));
  ASSERT_TRUE(scene.truth.candidates[0].is_ctc);
  const auto r = classical_pipeline().run_sample(scene.channels);
  EXPECT_EQ(r.outcome, Outcome::evaluated);
  EXPECT_TRUE(r.sample_positive);
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts[0].candidate_id, "cell/ck0/dapi0");
  EXPECT_EQ(r.verdicts[0].p_ck_given_c(), 1.0);
  EXPECT_EQ(r.verdicts[0].p_cd45_given_c(), 0.0);
  EXPECT_EQ(r.verdicts[0].bbox, *tight_box(scene.truth.candidates[0].mask));
  EXPECT_TRUE(r.error.empty());
}

TEST(RunSample, PlantedLeukocyteIsNegative) {
  const auto scene = synth::generate(one_cell(1.0, 0.6));
  const auto r = classical_pipeline().run_sample(scene.channels);
  EXPECT_EQ(r.outcome, Outcome::evaluated);
  EXPECT_FALSE(r.sample_positive);
  ASSERT_EQ(r.verdicts.size(), 1u);
  EXPECT_DOUBLE_EQ(r.verdicts[0].p_cd45_given_c(), scene.truth.candidates[0].p_cd45_given_c);
}

TEST(RunSample, BlankCkLayer) {
  auto spec = one_cell(0.0, 0.0);
  spec.ck_blobs.clear();
  const auto r = classical_pipeline().run_sample(synth::generate(spec).channels);
  EXPECT_EQ(r.outcome, Outcome::no_ck_detected);
  EXPECT_FALSE(r.sample_positive);
  EXPECT_TRUE(r.verdicts.empty());
}

TEST(RunSample, BlankDapiLayer) {
  auto spec = one_cell(1.0, 0.0);
  spec.dapi_blobs.clear();
  const auto r = classical_pipeline().run_sample(synth::generate(spec).channels);
  EXPECT_EQ(r.outcome, Outcome::no_dapi_detected);
  EXPECT_FALSE(r.sample_positive);
}

TEST(RunSample, MinCtcCountRaisesTheBar) {
  synth::SceneSpec s;
  s.sample_id = "two";
  s.ck_blobs = {{40, 64, 22, 160}, {100, 64, 22, 160}};
  synth::DapiBlob a;
  a.cx = 40;
  a.cy = 64;
  a.radius = 7;
  auto b = a;
  b.cx = 100;
  s.width = 150;
  s.dapi_blobs = {a, b};
  const auto x = synth::generate(s).channels;
  PipelineConfig one, two, three;
  two.min_ctc_count = 2;
  three.min_ctc_count = 3;
  EXPECT_TRUE(classical_pipeline(one).run_sample(x).sample_positive);
  EXPECT_TRUE(classical_pipeline(two).run_sample(x).sample_positive);
  EXPECT_FALSE(classical_pipeline(three).run_sample(x).sample_positive);
}

TEST(RunSample, FullLayerCd45Mode) {
  const auto scene = synth::generate(one_cell(1.0, 0.0));
  PipelineConfig cfg;
  cfg.cd45_mode = Cd45Mode::full_layer;
  const auto r = classical_pipeline(cfg).run_sample(scene.channels);
  EXPECT_EQ(r.outcome, Outcome::evaluated);
  EXPECT_TRUE(r.sample_positive);
}

TEST(RunSample, DetectorFailureBecomesErrorOutcome) {
  DetectorBinding broken;
  broken.kind = DetectorKind::external;
  broken.stage = Stage::stage2_dapi;
  broken.endpoint = ts::quote(ts::stub_path()) + " --exit 2";
  const Pipeline p(classical(Stage::stage1_ck), broken, {});
  const auto r = p.run_sample(synth::generate(one_cell(1.0, 0.0)).channels);
  EXPECT_EQ(r.outcome, Outcome::error);
  EXPECT_FALSE(r.sample_positive);
  EXPECT_NE(r.error.find("stage2"), std::string::npos) << r.error;
}

TEST(RunSample, RejectsSwappedBindingsAndBadConfig) {
  EXPECT_THROW(Pipeline(classical(Stage::stage2_dapi), classical(Stage::stage1_ck), {}), Error);
  PipelineConfig bad;
  bad.min_ctc_count = 0;
  EXPECT_THROW(Pipeline(classical(Stage::stage1_ck), classical(Stage::stage2_dapi), bad), Error);
}

TEST(RunBatch, OrderAndResultsIndependentOfWorkers) {
  synth::BatchSpec b;
  b.n = 24;
  b.positives = 12;
  b.seed = 5;
  std::map<std::string, ChannelSet> samples;
  std::vector<std::string> ids;
  for (const auto& planned : synth::plan_batch(b)) {
    ids.push_back(planned.spec.sample_id);
    samples[planned.spec.sample_id] = synth::generate(planned.spec).channels;
  }
  const auto pipeline = classical_pipeline();
  auto load = [&](const std::string& id) { return samples.at(id); };
  const auto serial = pipeline.run_batch(ids, load, 1);
  const auto parallel = pipeline.run_batch(ids, load, 6);
  ASSERT_EQ(serial.size(), ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_EQ(serial[i].sample_id, ids[i]);
    EXPECT_EQ(parallel[i].sample_id, ids[i]);
    EXPECT_EQ(serial[i].outcome, parallel[i].outcome);
    EXPECT_EQ(serial[i].verdicts, parallel[i].verdicts);
  }
  EXPECT_EQ(evaluate_batch(serial), evaluate_batch(parallel));
}

TEST(RunBatch, LoaderFailureIsRecordedNotThrown) {
  const std::vector<std::string> ids{"a", "b"};
  const auto results = classical_pipeline().run_batch(
      ids,
      [](const std::string& id) -> ChannelSet {
        if (id == "b") throw Error(ErrorCode::io, "missing cd45.png");
        return synth::generate(one_cell(1.0, 0.0)).channels;
      },
      2);
  EXPECT_EQ(results[0].outcome, Outcome::evaluated);
  EXPECT_EQ(results[1].outcome, Outcome::error);
  EXPECT_EQ(results[1].sample_id, "b");
  EXPECT_NE(results[1].error.find("missing cd45.png"), std::string::npos);
}

TEST(EvaluateBatch, PublishedCounts) {
  const auto [results, labels] = published_counts();
  const auto rep = evaluate_batch(results, &labels);
  EXPECT_EQ(rep.n_samples, 420u);
  EXPECT_EQ(rep.n_no_ck, 130u);
  EXPECT_EQ(rep.n_no_dapi, 170u);
  EXPECT_EQ(rep.n_evaluated, 120u);
  EXPECT_EQ(rep.n_predicted_positive, 5u);
  EXPECT_EQ(rep.n_predicted_negative, 415u);
  EXPECT_NEAR(*rep.accuracy, 0.98810, 1e-5);
  EXPECT_NEAR(*rep.stage3_accuracy, 0.95833, 1e-5);
  EXPECT_EQ(rep.n_no_ck + rep.n_no_dapi + rep.n_evaluated + rep.n_errors, rep.n_samples);
}

TEST(EvaluateBatch, WithoutLabelsOnlyCounts) {
  const auto [results, labels] = published_counts();
  const auto rep = evaluate_batch(results);
  EXPECT_FALSE(rep.accuracy);
  EXPECT_FALSE(rep.stage3_accuracy);
  EXPECT_EQ(rep.n_predicted_positive + rep.n_predicted_negative, 420u);
}

TEST(EvaluateBatch, PerfectPredictions) {
  const std::vector<SampleResult> results{fake("a", Outcome::evaluated, true), fake("b", Outcome::no_ck_detected, false)};
  const std::map<std::string, bool> labels{{"a", true}, {"b", false}};
  EXPECT_EQ(*evaluate_batch(results, &labels).accuracy, 1.0);
}

TEST(EvaluateBatch, ErrorsCountAsIncorrect) {
  const std::vector<SampleResult> results{fake("a", Outcome::evaluated, false), fake("b", Outcome::error, false)};
  const std::map<std::string, bool> labels{{"a", false}, {"b", false}};
  const auto rep = evaluate_batch(results, &labels);
  EXPECT_EQ(rep.n_errors, 1u);
  EXPECT_EQ(rep.n_predicted_negative, 1u);
  EXPECT_EQ(*rep.accuracy, 0.5);
  EXPECT_EQ(*rep.stage3_accuracy, 1.0);
}

TEST(EvaluateBatch, EmptyBatchAndLabelMismatch) {
  try {
    evaluate_batch({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_batch);
  }
  const std::vector<SampleResult> results{fake("a", Outcome::evaluated, true), fake("b", Outcome::evaluated, true)};
  const std::map<std::string, bool> short_labels{{"a", true}};
  const std::map<std::string, bool> wrong_ids{{"a", true}, {"c", true}};
  for (const auto* l : {&short_labels, &wrong_ids}) {
    try {
      evaluate_batch(results, l);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::label_mismatch);
    }
  }
  const std::vector<SampleResult> dup{fake("a", Outcome::evaluated, true), fake("a", Outcome::evaluated, true)};
  EXPECT_THROW(evaluate_batch(dup, &wrong_ids), Error);
}
