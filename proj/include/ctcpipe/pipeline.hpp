#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ctcpipe/decision.hpp"
#include "ctcpipe/detector.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"
#include "ctcpipe/threshold.hpp"

namespace ctc {

enum class Outcome { no_ck_detected, no_dapi_detected, evaluated, error };

constexpr std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::no_ck_detected: return "no_ck_detected";
    case Outcome::no_dapi_detected: return "no_dapi_detected";
    case Outcome::evaluated: return "evaluated";
    case Outcome::error: return "error";
  }
  return "error";
}

inline Outcome parse_outcome(std::string_view s) {
  for (auto o : {Outcome::no_ck_detected, Outcome::no_dapi_detected, Outcome::evaluated, Outcome::error}) {
    if (s == to_string(o)) return o;
  }
  throw Error(ErrorCode::invalid_argument, "unknown outcome '" + std::string(s) + "'");
}

/// Where the CD45 threshold is computed.
enum class Cd45Mode { per_crop, full_layer };

struct StageTimings {
  std::chrono::nanoseconds stage1{0};
  std::chrono::nanoseconds stage2{0};
  std::chrono::nanoseconds stage3{0};
};

struct SampleResult {
  std::string sample_id;
  Outcome outcome = Outcome::error;
  std::vector<Verdict> verdicts;
  bool sample_positive = false;
  /// Set when outcome == error: which stage failed and why.
  std::string error;
  StageTimings timings;
};

struct PipelineConfig {
  DecisionParams params;
  int crop_padding = 0;
  /// Applied to every stage-2 detection, whichever backend produced it.
  double dapi_score_threshold = 0.9;
  /// When an Otsu split of a CK/CD45 crop counts as signal.
  SeparationGuard separation;
  Cd45Mode cd45_mode = Cd45Mode::per_crop;
  int min_ctc_count = 1;
};

inline void validate(const PipelineConfig& c) {
  validate(c.params);
  if (c.crop_padding < 0) throw Error(ErrorCode::config, "crop_padding must be >= 0");
  if (!(c.dapi_score_threshold >= 0.0 && c.dapi_score_threshold <= 1.0)) {
    throw Error(ErrorCode::config, "dapi_score_threshold must lie in [0,1]");
  }
  if (!(c.separation.min_gap >= 0.0 && c.separation.min_gap <= 255.0)) {
    throw Error(ErrorCode::config, "min_class_separation must lie in [0,255]");
  }
  if (!(c.separation.min_gap_to_spread >= 0.0)) {
    throw Error(ErrorCode::config, "min_separation_ratio must be >= 0");
  }
  if (c.min_ctc_count < 1) throw Error(ErrorCode::config, "min_ctc_count must be >= 1");
}

/// Stage 1 -> Stage 2 -> Stage 3 -> decision, over one sample or a batch.
class Pipeline {
 public:
  Pipeline(DetectorBinding stage1, DetectorBinding stage2, PipelineConfig cfg)
      : stage1_(std::move(stage1)), stage2_(std::move(stage2)), cfg_(cfg) {
    validate(cfg_);
    if (stage1_.binding().stage != Stage::stage1_ck || stage2_.binding().stage != Stage::stage2_dapi) {
      throw Error(ErrorCode::config, "detector bindings are attached to the wrong stages");
    }
  }

  const PipelineConfig& config() const noexcept { return cfg_; }

  /// Stage failures are recorded on the result; they never propagate.
  SampleResult run_sample(const ChannelSet& x) const {
    SampleResult r;
    r.sample_id = x.sample_id;
    const char* stage = "stage1";
    try {
      run_stages(x, r, stage);
    } catch (const std::exception& e) {
      r.outcome = Outcome::error;
      r.verdicts.clear();
      r.sample_positive = false;
      r.error = std::string(stage) + ": " + e.what();
    }
    return r;
  }

  /// Processes `ids` on a pool of `workers` threads. `load(id)` produces the
  /// sample's channels; a throwing loader yields an error result. Output order
  /// follows `ids` regardless of scheduling.
  template <typename Loader>
  std::vector<SampleResult> run_batch(std::span<const std::string> ids, Loader&& load, unsigned workers = 1) const {
    std::vector<SampleResult> results(ids.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < ids.size(); i = next++) {
        try {
          results[i] = run_sample(load(ids[i]));
        } catch (const std::exception& e) {
          results[i] = SampleResult{};
          results[i].sample_id = ids[i];
          results[i].error = std::string("load: ") + e.what();
        }
        results[i].sample_id = ids[i];
      }
    };
    workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(std::max<std::size_t>(ids.size(), 1)));
    if (workers == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return results;
  }

 private:
  using Clock = std::chrono::steady_clock;

  void run_stages(const ChannelSet& x, SampleResult& r, const char*& stage) const {
    auto t0 = Clock::now();
    const auto ck_dets = stage1_(x.ck);
    r.timings.stage1 = Clock::now() - t0;
    if (ck_dets.empty()) {
      r.outcome = Outcome::no_ck_detected;
      return;
    }

    std::optional<BinaryMask> cd45_layer_mask;
    if (cfg_.cd45_mode == Cd45Mode::full_layer) {
      stage = "stage3";
      cd45_layer_mask = signal_mask(x.cd45, cfg_.separation);
      if (!cd45_layer_mask) cd45_layer_mask = BinaryMask(x.width(), x.height(), 0);
    }

    std::size_t surviving_dapi = 0;
    for (std::size_t ci = 0; ci < ck_dets.size(); ++ci) {
      const auto& ck_det = ck_dets[ci];
      stage = "stage2";
      const auto region = pad_and_clamp(ck_det.bbox, cfg_.crop_padding, x.width(), x.height());
      if (!region) throw Error(ErrorCode::invalid_box, "CK box outside the image");

      t0 = Clock::now();
      auto dapi_dets = stage2_(crop(x.dapi, *region));
      std::erase_if(dapi_dets, [&](const Detection& d) { return d.score < cfg_.dapi_score_threshold; });
      r.timings.stage2 += Clock::now() - t0;
      if (dapi_dets.empty()) continue;
      surviving_dapi += dapi_dets.size();

      stage = "stage3";
      t0 = Clock::now();
      const auto ck_crop = crop(x.ck, *region);
      auto ck_mask = signal_mask(ck_crop, cfg_.separation);
      // A signal-free crop means the detector's box is all CK.
      if (!ck_mask) ck_mask = BinaryMask(region->w, region->h, 1);
      const BinaryMask cd45_mask = cd45_layer_mask ? crop(*cd45_layer_mask, *region)
                                                   : signal_mask(crop(x.cd45, *region), cfg_.separation)
                                                         .value_or(BinaryMask(region->w, region->h, 0));
      for (std::size_t di = 0; di < dapi_dets.size(); ++di) {
        const auto& d = dapi_dets[di];
        if (!d.mask) throw Error(ErrorCode::protocol, "stage-2 detection without mask");
        auto v = classify_candidate(*d.mask, *ck_mask, cd45_mask, cfg_.params, ck_det.score, d.score);
        v.candidate_id = x.sample_id + "/ck" + std::to_string(ci) + "/dapi" + std::to_string(di);
        v.bbox.x += region->x;
        v.bbox.y += region->y;
        r.verdicts.push_back(std::move(v));
      }
      r.timings.stage3 += Clock::now() - t0;
    }

    if (surviving_dapi == 0) {
      r.outcome = Outcome::no_dapi_detected;
      return;
    }
    r.outcome = Outcome::evaluated;
    const auto positives = std::count_if(r.verdicts.begin(), r.verdicts.end(), [](const Verdict& v) { return v.is_ctc; });
    r.sample_positive = positives >= cfg_.min_ctc_count;
  }

  Detector stage1_;
  Detector stage2_;
  PipelineConfig cfg_;
};

struct BatchReport {
  std::size_t n_samples = 0;
  std::size_t n_no_ck = 0;
  std::size_t n_no_dapi = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_errors = 0;
  std::size_t n_predicted_positive = 0;
  std::size_t n_predicted_negative = 0;
  /// Present when labels were supplied.
  std::optional<double> accuracy;
  std::optional<double> stage3_accuracy;
  std::size_t n_correct = 0;
  std::size_t n_correct_evaluated = 0;

  friend bool operator==(const BatchReport&, const BatchReport&) = default;
};

/// Per-outcome accounting. Errored samples are neither positive nor negative
/// and count as incorrect when labels are present.
inline BatchReport evaluate_batch(std::span<const SampleResult> results,
                                  const std::map<std::string, bool>* labels = nullptr) {
  if (results.empty()) throw Error(ErrorCode::empty_batch, "no samples to evaluate");
  if (labels) {
    if (labels->size() != results.size()) {
      throw Error(ErrorCode::label_mismatch, std::to_string(labels->size()) + " labels for " +
                                                 std::to_string(results.size()) + " results");
    }
    std::set<std::string_view> seen;
    for (const auto& r : results) {
      if (!seen.insert(r.sample_id).second) {
        throw Error(ErrorCode::label_mismatch, "duplicate sample id '" + r.sample_id + "'");
      }
      if (!labels->contains(r.sample_id)) throw Error(ErrorCode::label_mismatch, "no label for '" + r.sample_id + "'");
    }
  }

  BatchReport rep;
  rep.n_samples = results.size();
  for (const auto& r : results) {
    switch (r.outcome) {
      case Outcome::no_ck_detected: ++rep.n_no_ck; break;
      case Outcome::no_dapi_detected: ++rep.n_no_dapi; break;
      case Outcome::evaluated: ++rep.n_evaluated; break;
      case Outcome::error: ++rep.n_errors; break;
    }
    if (r.outcome == Outcome::error) continue;
    (r.sample_positive ? rep.n_predicted_positive : rep.n_predicted_negative)++;
    if (labels && labels->at(r.sample_id) == r.sample_positive) {
      ++rep.n_correct;
      if (r.outcome == Outcome::evaluated) ++rep.n_correct_evaluated;
    }
  }
  if (labels) {
    rep.accuracy = static_cast<double>(rep.n_correct) / static_cast<double>(rep.n_samples);
    if (rep.n_evaluated > 0) {
      rep.stage3_accuracy = static_cast<double>(rep.n_correct_evaluated) / static_cast<double>(rep.n_evaluated);
    }
  }
  return rep;
}

}  // namespace ctc
