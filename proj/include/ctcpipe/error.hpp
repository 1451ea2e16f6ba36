#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctc {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  not_binarized,
  invalid_box,
  degenerate_histogram,
  zero_area_candidate,
  protocol,
  detector_failure,
  uncalibratable,
  infeasible_scene,
  empty_batch,
  label_mismatch,
  config,
  io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::not_binarized: return "image not binarized";
    case ErrorCode::invalid_box: return "invalid bounding box";
    case ErrorCode::degenerate_histogram: return "degenerate histogram";
    case ErrorCode::zero_area_candidate: return "zero-area candidate";
    case ErrorCode::protocol: return "protocol error";
    case ErrorCode::detector_failure: return "detector failure";
    case ErrorCode::uncalibratable: return "uncalibratable";
    case ErrorCode::infeasible_scene: return "infeasible scene";
    case ErrorCode::empty_batch: return "empty batch";
    case ErrorCode::label_mismatch: return "label mismatch";
    case ErrorCode::config: return "invalid configuration";
    case ErrorCode::io: return "i/o error";
  }
  return "unknown error";
}

/// The single exception type thrown by the library. The code identifies the
/// failure class; the message carries the specifics.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ctc
