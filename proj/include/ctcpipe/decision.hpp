#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

namespace ctc {

/// How CD45 overlap enters the decision.
///  - exclusionary: a CTC is CD45-negative, so high CD45 overlap rejects.
///  - paper_literal: the printed pseudo-code branches, where CD45 overlap
///    above r2 accepts.
enum class Semantics { exclusionary, paper_literal };

constexpr std::string_view to_string(Semantics s) noexcept {
  return s == Semantics::exclusionary ? "exclusionary" : "paper-literal";
}

inline Semantics parse_semantics(std::string_view s) {
  if (s == "exclusionary") return Semantics::exclusionary;
  if (s == "paper-literal" || s == "paper_literal") return Semantics::paper_literal;
  throw Error(ErrorCode::config, "semantics must be 'exclusionary' or 'paper-literal', got '" + std::string(s) + "'");
}

struct DecisionParams {
  double r1 = 0.17;  // CK overlap threshold
  double r2 = 0.2;   // CD45 overlap threshold
  Semantics semantics = Semantics::exclusionary;

  friend bool operator==(const DecisionParams&, const DecisionParams&) = default;
};

inline void validate(const DecisionParams& p) {
  if (!(p.r1 >= 0.0 && p.r1 <= 1.0)) throw Error(ErrorCode::config, "r1 must lie in [0,1], got " + std::to_string(p.r1));
  if (!(p.r2 >= 0.0 && p.r2 <= 1.0)) throw Error(ErrorCode::config, "r2 must lie in [0,1], got " + std::to_string(p.r2));
}

/// Factors feeding the confidence product.
struct ConfidenceInputs {
  double p_ck = 1.0;  // stage-1 detection score
  double p_c = 1.0;   // stage-2 detection score
  double p_ck_given_c = 0.0;
  double p_cd45_given_c = 0.0;
  double p_cd45 = 1.0;  // thresholding identified the CD45 layer

  friend bool operator==(const ConfidenceInputs&, const ConfidenceInputs&) = default;
};

struct ConfidenceBreakdown : ConfidenceInputs {
  double confidence = 0.0;

  friend bool operator==(const ConfidenceBreakdown&, const ConfidenceBreakdown&) = default;
};

struct Verdict {
  std::string candidate_id;
  bool is_ctc = false;
  ConfidenceBreakdown breakdown;
  DecisionParams params_used;
  /// Candidate's box in full-image coordinates.
  BoundingBox bbox;

  double p_ck_given_c() const noexcept { return breakdown.p_ck_given_c; }
  double p_cd45_given_c() const noexcept { return breakdown.p_cd45_given_c; }

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// A(target ∩ candidate) / A(candidate).
inline double overlap_fraction(const BinaryMask& target, const BinaryMask& candidate) {
  const auto area = mask_area(candidate);
  if (area == 0) throw Error(ErrorCode::zero_area_candidate, "candidate mask is empty");
  const auto inter = mask_intersection_area(target, candidate);
  return static_cast<double>(inter) / static_cast<double>(area);
}

/// The decision rule on precomputed overlaps.
inline bool decide(double p_ck_given_c, double p_cd45_given_c, const DecisionParams& p) noexcept {
  if (p.semantics == Semantics::exclusionary) return p_ck_given_c > p.r1 && p_cd45_given_c <= p.r2;
  // Printed branches: reject when CK overlap < r1, else accept iff CD45 overlap > r2.
  if (p_ck_given_c < p.r1) return false;
  return p_cd45_given_c > p.r2;
}

inline double confidence_score(const ConfidenceInputs& in, Semantics semantics) {
  for (double f : {in.p_ck, in.p_c, in.p_ck_given_c, in.p_cd45_given_c, in.p_cd45}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "confidence factor " + std::to_string(f) + " outside [0,1]");
    }
  }
  const double cd45_term = semantics == Semantics::exclusionary ? 1.0 - in.p_cd45_given_c : in.p_cd45_given_c;
  return cd45_term * in.p_ck_given_c * in.p_c * in.p_ck * in.p_cd45;
}

/// Classifies one nucleus candidate against aligned CK and CD45 masks.
inline Verdict classify_candidate(const BinaryMask& candidate, const BinaryMask& ck, const BinaryMask& cd45,
                                  const DecisionParams& params, double p_ck = 1.0, double p_c = 1.0) {
  validate(params);
  Verdict v;
  v.params_used = params;
  v.breakdown.p_ck = p_ck;
  v.breakdown.p_c = p_c;
  v.breakdown.p_ck_given_c = overlap_fraction(ck, candidate);
  v.breakdown.p_cd45_given_c = overlap_fraction(cd45, candidate);
  v.breakdown.p_cd45 = 1.0;
  v.breakdown.confidence = confidence_score(v.breakdown, params.semantics);
  v.is_ctc = decide(v.breakdown.p_ck_given_c, v.breakdown.p_cd45_given_c, params);
  if (const auto box = tight_box(candidate)) v.bbox = *box;
  return v;
}

/// True when the stored verdict follows from its stored overlaps and params.
inline bool self_consistent(const Verdict& v) noexcept {
  return v.is_ctc == decide(v.p_ck_given_c(), v.p_cd45_given_c(), v.params_used);
}

struct LabeledOverlap {
  double p_ck_given_c = 0.0;
  double p_cd45_given_c = 0.0;
  bool label = false;
};

struct CalibrationResult {
  DecisionParams params;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Grid values {0, step, 2 step, ..., 1}. When 1/step is an integer k the
/// values are formed as i/k so that e.g. 17/100 is the double nearest 0.17.
inline std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 0.5)) throw Error(ErrorCode::invalid_argument, "grid step must lie in (0, 0.5]");
  std::vector<double> grid;
  const double inv = 1.0 / step;
  const double k = std::round(inv);
  if (std::abs(inv - k) < 1e-9) {
    const auto n = static_cast<long>(k);
    for (long i = 0; i <= n; ++i) grid.push_back(static_cast<double>(i) / static_cast<double>(n));
  } else {
    for (long i = 0; static_cast<double>(i) * step < 1.0; ++i) grid.push_back(static_cast<double>(i) * step);
    grid.push_back(1.0);
  }
  return grid;
}

/// Exhaustive (r1, r2) grid search maximising F1 of the rule against the
/// labels. Ties go to the smallest r1, then the smallest r2.
inline CalibrationResult calibrate_thresholds(std::span<const LabeledOverlap> labeled, double grid_step,
                                              Semantics semantics) {
  if (labeled.empty()) throw Error(ErrorCode::invalid_argument, "no labelled overlaps to calibrate on");
  std::size_t positives = 0;
  for (const auto& s : labeled) positives += s.label;
  if (positives == 0 || positives == labeled.size()) {
    throw Error(ErrorCode::uncalibratable, "labels are all " + std::string(positives == 0 ? "negative" : "positive"));
  }
  const auto grid = threshold_grid(grid_step);

  bool have = false;
  CalibrationResult best;
  for (double r1 : grid) {
    for (double r2 : grid) {
      const DecisionParams p{r1, r2, semantics};
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& s : labeled) {
        const bool pred = decide(s.p_ck_given_c, s.p_cd45_given_c, p);
        tp += pred && s.label;
        fp += pred && !s.label;
        fn += !pred && s.label;
      }
      // F1 = 2tp / (2tp + fp + fn); compare by cross-multiplication.
      const auto num = 2 * tp;
      const auto den = 2 * tp + fp + fn;
      const auto best_num = 2 * best.tp;
      const auto best_den = 2 * best.tp + best.fp + best.fn;
      if (!have || num * best_den > best_num * den) {
        have = true;
        best.params = p;
        best.tp = tp;
        best.fp = fp;
        best.fn = fn;
        best.tn = labeled.size() - tp - fp - fn;
      }
    }
  }
  if (best.tp == 0) throw Error(ErrorCode::uncalibratable, "no threshold pair yields a true positive");
  best.f1 = static_cast<double>(2 * best.tp) / static_cast<double>(2 * best.tp + best.fp + best.fn);
  return best;
}

}  // namespace ctc
