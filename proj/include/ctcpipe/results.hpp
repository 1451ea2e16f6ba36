#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctcpipe/decision.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/pipeline.hpp"

// Line-delimited JSON for per-sample results, plus the batch report document.
// Doubles are written with round-trip precision, so parsing a results file
// and re-running evaluate_batch reproduces the in-memory report exactly.

namespace ctc {

using json = nlohmann::json;

inline json to_json(const Verdict& v) {
  return json{{"candidate_id", v.candidate_id},
              {"is_ctc", v.is_ctc},
              {"bbox", {v.bbox.x, v.bbox.y, v.bbox.w, v.bbox.h}},
              {"p_ck", v.breakdown.p_ck},
              {"p_c", v.breakdown.p_c},
              {"p_ck_given_c", v.breakdown.p_ck_given_c},
              {"p_cd45_given_c", v.breakdown.p_cd45_given_c},
              {"p_cd45", v.breakdown.p_cd45},
              {"confidence", v.breakdown.confidence},
              {"r1", v.params_used.r1},
              {"r2", v.params_used.r2},
              {"semantics", to_string(v.params_used.semantics)}};
}

inline Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.candidate_id = j.at("candidate_id").get<std::string>();
  v.is_ctc = j.at("is_ctc").get<bool>();
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::invalid_argument, "bbox must have 4 entries");
  v.bbox = BoundingBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  v.breakdown.p_ck = j.at("p_ck").get<double>();
  v.breakdown.p_c = j.at("p_c").get<double>();
  v.breakdown.p_ck_given_c = j.at("p_ck_given_c").get<double>();
  v.breakdown.p_cd45_given_c = j.at("p_cd45_given_c").get<double>();
  v.breakdown.p_cd45 = j.at("p_cd45").get<double>();
  v.breakdown.confidence = j.at("confidence").get<double>();
  v.params_used.r1 = j.at("r1").get<double>();
  v.params_used.r2 = j.at("r2").get<double>();
  v.params_used.semantics = parse_semantics(j.at("semantics").get<std::string>());
  return v;
}

/// One results line. `label` is the ground-truth class when known.
inline json to_json(const SampleResult& r, std::optional<bool> label = std::nullopt, bool with_timings = false) {
  json verdicts = json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
  json j{{"sample_id", r.sample_id},
         {"outcome", to_string(r.outcome)},
         {"sample_positive", r.sample_positive},
         {"label", label ? json(*label) : json(nullptr)},
         {"error", r.error.empty() ? json(nullptr) : json(r.error)},
         {"verdicts", std::move(verdicts)}};
  if (with_timings) {
    auto ms = [](std::chrono::nanoseconds d) { return std::chrono::duration<double, std::milli>(d).count(); };
    j["timings_ms"] = {{"stage1", ms(r.timings.stage1)}, {"stage2", ms(r.timings.stage2)}, {"stage3", ms(r.timings.stage3)}};
  }
  return j;
}

struct ParsedResult {
  SampleResult result;
  std::optional<bool> label;
};

inline ParsedResult sample_result_from_json(const json& j) {
  ParsedResult p;
  auto& r = p.result;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.outcome = parse_outcome(j.at("outcome").get<std::string>());
  r.sample_positive = j.at("sample_positive").get<bool>();
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  for (const auto& v : j.at("verdicts")) r.verdicts.push_back(verdict_from_json(v));
  if (j.contains("label") && !j["label"].is_null()) p.label = j["label"].get<bool>();
  if (r.sample_positive && r.outcome != Outcome::evaluated) {
    throw Error(ErrorCode::invalid_argument, "positive sample '" + r.sample_id + "' was not evaluated");
  }
  return p;
}

inline json to_json(const BatchReport& rep) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"n_samples", rep.n_samples},
              {"n_no_ck", rep.n_no_ck},
              {"n_no_dapi", rep.n_no_dapi},
              {"n_evaluated", rep.n_evaluated},
              {"n_errors", rep.n_errors},
              {"n_predicted_positive", rep.n_predicted_positive},
              {"n_predicted_negative", rep.n_predicted_negative},
              {"n_correct", rep.n_correct},
              {"n_correct_evaluated", rep.n_correct_evaluated},
              {"accuracy", opt(rep.accuracy)},
              {"stage3_accuracy", opt(rep.stage3_accuracy)}};
}

inline BatchReport batch_report_from_json(const json& j) {
  BatchReport rep;
  rep.n_samples = j.at("n_samples").get<std::size_t>();
  rep.n_no_ck = j.at("n_no_ck").get<std::size_t>();
  rep.n_no_dapi = j.at("n_no_dapi").get<std::size_t>();
  rep.n_evaluated = j.at("n_evaluated").get<std::size_t>();
  rep.n_errors = j.at("n_errors").get<std::size_t>();
  rep.n_predicted_positive = j.at("n_predicted_positive").get<std::size_t>();
  rep.n_predicted_negative = j.at("n_predicted_negative").get<std::size_t>();
  rep.n_correct = j.at("n_correct").get<std::size_t>();
  rep.n_correct_evaluated = j.at("n_correct_evaluated").get<std::size_t>();
  if (!j.at("accuracy").is_null()) rep.accuracy = j["accuracy"].get<double>();
  if (!j.at("stage3_accuracy").is_null()) rep.stage3_accuracy = j["stage3_accuracy"].get<double>();
  return rep;
}

/// Labels keyed by sample id when every parsed line carries one.
inline std::optional<std::map<std::string, bool>> collect_labels(const std::vector<ParsedResult>& parsed) {
  std::map<std::string, bool> labels;
  for (const auto& p : parsed) {
    if (!p.label) return std::nullopt;
    labels[p.result.sample_id] = *p.label;
  }
  return labels;
}

}  // namespace ctc
