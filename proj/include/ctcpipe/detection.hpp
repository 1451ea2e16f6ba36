#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

namespace ctc {

enum class Label { ck, dapi };

constexpr std::string_view to_string(Label l) noexcept { return l == Label::ck ? "CK" : "DAPI"; }

/// Scored box produced by a stage-1 or stage-2 detector. Coordinates are in
/// the frame of the image handed to the detector; a mask, when present, has
/// that image's dimensions.
struct Detection {
  BoundingBox bbox;
  double score = 0.0;
  std::optional<BinaryMask> mask;
  Label label = Label::ck;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Throws ErrorCode::protocol when the detection breaks its invariants.
inline void validate(const Detection& d) {
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    throw Error(ErrorCode::protocol, "detection score " + std::to_string(d.score) + " outside [0,1]");
  }
  if (d.bbox.w < 1 || d.bbox.h < 1) throw Error(ErrorCode::protocol, "detection box has non-positive extent");
  if (!d.mask) return;
  const auto& m = *d.mask;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y) && !d.bbox.contains(x, y)) {
        throw Error(ErrorCode::protocol, "mask pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                             ") lies outside the detection box");
      }
    }
  }
}

}  // namespace ctc
