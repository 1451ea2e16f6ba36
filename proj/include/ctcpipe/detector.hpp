#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <nlohmann/json.hpp>

#include "ctcpipe/detail/process.hpp"
#include "ctcpipe/detection.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"
#include "ctcpipe/rle.hpp"
#include "ctcpipe/segmentation.hpp"

namespace ctc {

enum class Stage { stage1_ck, stage2_dapi };

constexpr std::string_view to_string(Stage s) noexcept { return s == Stage::stage1_ck ? "stage1_ck" : "stage2_dapi"; }

inline Stage parse_stage(std::string_view s) {
  if (s == "stage1_ck") return Stage::stage1_ck;
  if (s == "stage2_dapi") return Stage::stage2_dapi;
  throw Error(ErrorCode::protocol, "unknown stage '" + std::string(s) + "'");
}

enum class DetectorKind { classical, external };

struct DetectorBinding {
  DetectorKind kind = DetectorKind::classical;
  Stage stage = Stage::stage1_ck;
  /// Shell command for external detectors.
  std::optional<std::string> endpoint;
  /// Declared by the backend; when false calls through one binding are serialised.
  bool concurrency_safe = false;
  ClassicalDetectorConfig classical;
};

inline void validate(const DetectorBinding& b) {
  if (b.kind == DetectorKind::external && (!b.endpoint || b.endpoint->empty())) {
    throw Error(ErrorCode::config, std::string(to_string(b.stage)) + ": external detector requires an endpoint");
  }
}

namespace base64 {

inline std::string encode(std::span<const std::uint8_t> bytes) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

inline std::vector<std::uint8_t> decode(std::string_view text) {
  using namespace boost::archive::iterators;
  std::string s(text);
  if (s.size() % 4 != 0) throw Error(ErrorCode::protocol, "base64 length not a multiple of 4");
  std::size_t pad = 0;
  while (pad < 2 && !s.empty() && s[s.size() - 1 - pad] == '=') ++pad;
  for (std::size_t i = s.size() - pad; i < s.size(); ++i) s[i] = 'A';
  for (char c : s) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/';
    if (!ok) throw Error(ErrorCode::protocol, "invalid base64 character");
  }
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::vector<std::uint8_t> out(It(s.cbegin()), It(s.cend()));
  out.resize(s.size() / 4 * 3 - pad);
  return out;
}

}  // namespace base64

/// One request line: {"stage", "width", "height", "pixels_b64"}.
inline std::string encode_request(Stage stage, const GrayImage& img) {
  nlohmann::json j;
  j["stage"] = to_string(stage);
  j["width"] = img.width();
  j["height"] = img.height();
  j["pixels_b64"] = base64::encode(img.pixels());
  return j.dump() + "\n";
}

/// Parses a reply line against the dimensions of the image that was sent.
/// Boxes are clamped to the image; any contract violation throws
/// ErrorCode::protocol.
inline std::vector<Detection> parse_reply(std::string_view text, Stage stage, int width, int height) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) throw Error(ErrorCode::protocol, "empty reply");
  if (text.find('\n') != std::string_view::npos) throw Error(ErrorCode::protocol, "more than one reply line");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::protocol, std::string("malformed reply: ") + e.what());
  }
  if (!j.is_object() || !j.contains("detections") || !j["detections"].is_array()) {
    throw Error(ErrorCode::protocol, "reply lacks a 'detections' array");
  }

  std::vector<Detection> out;
  std::size_t index = 0;
  for (const auto& d : j["detections"]) {
    const std::string where = "detection " + std::to_string(index++);
    if (!d.is_object()) throw Error(ErrorCode::protocol, where + " is not an object");
    const auto& bbox = d.value("bbox", nlohmann::json());
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const auto& v) { return v.is_number_integer(); })) {
      throw Error(ErrorCode::protocol, where + ": bbox must be [x,y,w,h] integers");
    }
    const BoundingBox raw{bbox[0].get<int>(), bbox[1].get<int>(), bbox[2].get<int>(), bbox[3].get<int>()};
    if (raw.w < 1 || raw.h < 1) throw Error(ErrorCode::protocol, where + ": bbox extent must be positive");
    const auto box = pad_and_clamp(raw, 0, width, height);
    if (!box) throw Error(ErrorCode::protocol, where + ": bbox lies outside the image");

    const auto& score = d.value("score", nlohmann::json());
    if (!score.is_number()) throw Error(ErrorCode::protocol, where + ": score must be a number");

    Detection det;
    det.bbox = *box;
    det.score = score.get<double>();
    det.label = stage == Stage::stage1_ck ? Label::ck : Label::dapi;

    const auto& rle = d.value("mask_rle", nlohmann::json());
    if (!rle.is_null()) {
      if (!rle.is_array()) throw Error(ErrorCode::protocol, where + ": mask_rle must be an array or null");
      std::vector<std::uint64_t> runs;
      runs.reserve(rle.size());
      for (const auto& r : rle) {
        if (!r.is_number_unsigned() && !(r.is_number_integer() && r.get<long long>() >= 0)) {
          throw Error(ErrorCode::protocol, where + ": mask_rle runs must be non-negative integers");
        }
        runs.push_back(r.get<std::uint64_t>());
      }
      det.mask = decode_rle_mask(runs, width, height);
    } else if (stage == Stage::stage2_dapi) {
      throw Error(ErrorCode::protocol, where + ": stage2_dapi detections must carry a mask");
    }
    try {
      validate(det);
    } catch (const Error& e) {
      throw Error(ErrorCode::protocol, where + ": " + e.what());
    }
    out.push_back(std::move(det));
  }
  return out;
}

/// Serialises detections as a reply line; the inverse of parse_reply.
inline std::string encode_reply(const std::vector<Detection>& detections) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : detections) {
    nlohmann::json o;
    o["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    o["score"] = d.score;
    o["mask_rle"] = d.mask ? nlohmann::json(encode_rle(*d.mask)) : nlohmann::json(nullptr);
    arr.push_back(std::move(o));
  }
  return nlohmann::json{{"detections", std::move(arr)}}.dump() + "\n";
}

/// Applies a bound detector to one image. The result is ordered by
/// descending score (stable with respect to the backend's own order).
inline std::vector<Detection> run_detector(const DetectorBinding& binding, const GrayImage& img) {
  validate(binding);
  if (img.empty()) throw Error(ErrorCode::invalid_argument, "detector input is empty");

  std::vector<Detection> dets;
  if (binding.kind == DetectorKind::classical) {
    dets = binding.stage == Stage::stage1_ck ? detect_ck_classical(img, binding.classical)
                                             : detect_dapi_classical(img, binding.classical);
  } else {
    const auto res = detail::run_shell(*binding.endpoint, encode_request(binding.stage, img));
    if (res.exit_status != 0) {
      throw Error(ErrorCode::detector_failure,
                  "'" + *binding.endpoint + "' exited with status " + std::to_string(res.exit_status));
    }
    dets = parse_reply(res.out, binding.stage, img.width(), img.height());
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

/// A binding plus the lock that serialises it when the backend has not
/// declared itself safe for concurrent calls.
class Detector {
 public:
  explicit Detector(DetectorBinding binding) : binding_(std::move(binding)) { validate(binding_); }

  const DetectorBinding& binding() const noexcept { return binding_; }

  std::vector<Detection> operator()(const GrayImage& img) const {
    if (binding_.kind == DetectorKind::classical || binding_.concurrency_safe) return run_detector(binding_, img);
    std::lock_guard lock(mutex_);
    return run_detector(binding_, img);
  }

 private:
  DetectorBinding binding_;
  mutable std::mutex mutex_;
};

}  // namespace ctc
