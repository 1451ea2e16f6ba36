#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "ctcpipe/error.hpp"

namespace ctc {

struct IntensityPixels {};
struct MaskPixels {};

/// Row-major 8-bit raster. The Kind tag keeps intensity images and binary
/// masks apart at the type level while sharing storage and geometry code.
/// For masks every stored value is 0 or 1.
template <typename Kind>
class Raster {
 public:
  Raster() = default;

  Raster(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    check_dims(width, height);
    if constexpr (is_mask) check_bit(fill);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Raster(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorCode::dimension_mismatch,
                  "pixel buffer of " + std::to_string(data_.size()) + " values for " +
                      std::to_string(width) + "x" + std::to_string(height) + " raster");
    }
    if constexpr (is_mask) {
      for (auto v : data_) check_bit(v);
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::uint8_t operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  void set(int x, int y, std::uint8_t v) {
    if constexpr (is_mask) check_bit(v);
    data_[index(x, y)] = v;
  }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<const std::uint8_t> pixels() const noexcept { return data_; }

  bool same_shape(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static constexpr bool is_mask = std::is_same_v<Kind, MaskPixels>;

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  static void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::invalid_argument, "raster dimensions must be at least 1x1, got " +
                                                   std::to_string(width) + "x" + std::to_string(height));
    }
  }

  static void check_bit(std::uint8_t v) {
    if (v > 1) throw Error(ErrorCode::not_binarized, "mask bits must be 0 or 1");
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

using GrayImage = Raster<IntensityPixels>;
using BinaryMask = Raster<MaskPixels>;

/// Axis-aligned box; (x, y) is the inclusive top-left corner.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  int right() const noexcept { return x + w; }
  int bottom() const noexcept { return y + h; }
  bool contains(int px, int py) const noexcept { return px >= x && py >= y && px < right() && py < bottom(); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One sample's aligned stain layers.
struct ChannelSet {
  GrayImage ck;
  GrayImage dapi;
  GrayImage cd45;
  std::string sample_id;

  ChannelSet() = default;
  ChannelSet(GrayImage ck_layer, GrayImage dapi_layer, GrayImage cd45_layer, std::string id)
      : ck(std::move(ck_layer)), dapi(std::move(dapi_layer)), cd45(std::move(cd45_layer)),
        sample_id(std::move(id)) {
    if (!ck.same_shape(dapi) || !ck.same_shape(cd45)) {
      throw Error(ErrorCode::dimension_mismatch, "channels of sample '" + sample_id + "' are not aligned");
    }
  }

  int width() const noexcept { return ck.width(); }
  int height() const noexcept { return ck.height(); }
};

inline std::size_t mask_area(const BinaryMask& m) noexcept {
  std::size_t n = 0;
  for (auto bit : m.pixels()) n += bit;
  return n;
}

inline std::size_t mask_intersection_area(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::dimension_mismatch,
                "cannot intersect " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                    " mask with " + std::to_string(b.width()) + "x" + std::to_string(b.height()) +
                    " mask (misaligned channels)");
  }
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  std::size_t n = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) n += pa[i] & pb[i];
  return n;
}

/// Expands `box` by `padding` on every side and clamps it to a width x height
/// grid. Returns nullopt when nothing of the padded box lies on the grid.
inline std::optional<BoundingBox> pad_and_clamp(const BoundingBox& box, int padding, int width, int height) {
  if (padding < 0) throw Error(ErrorCode::invalid_argument, "crop padding must be non-negative");
  if (box.w < 1 || box.h < 1) return std::nullopt;
  const long long x0 = std::max<long long>(0, static_cast<long long>(box.x) - padding);
  const long long y0 = std::max<long long>(0, static_cast<long long>(box.y) - padding);
  const long long x1 = std::min<long long>(width, static_cast<long long>(box.right()) + padding);
  const long long y1 = std::min<long long>(height, static_cast<long long>(box.bottom()) + padding);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BoundingBox{static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0),
                     static_cast<int>(y1 - y0)};
}

/// Sub-raster covered by the padded box, clamped to the raster bounds.
template <typename Kind>
Raster<Kind> crop(const Raster<Kind>& img, const BoundingBox& box, int padding = 0) {
  const auto region = pad_and_clamp(box, padding, img.width(), img.height());
  if (!region) {
    throw Error(ErrorCode::invalid_box, "box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                                            std::to_string(box.w) + "," + std::to_string(box.h) +
                                            ") lies outside the " + std::to_string(img.width()) + "x" +
                                            std::to_string(img.height()) + " image");
  }
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(region->w) * static_cast<std::size_t>(region->h));
  const auto src = img.pixels();
  for (int y = region->y; y < region->bottom(); ++y) {
    const auto row = src.subspan(static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) +
                                     static_cast<std::size_t>(region->x),
                                 static_cast<std::size_t>(region->w));
    out.insert(out.end(), row.begin(), row.end());
  }
  return Raster<Kind>(region->w, region->h, std::move(out));
}

/// Lifts a 0/255 image into a mask.
inline BinaryMask to_mask(const GrayImage& img) {
  std::vector<std::uint8_t> bits;
  bits.reserve(img.size());
  for (auto p : img.pixels()) {
    if (p != 0 && p != 255) {
      throw Error(ErrorCode::not_binarized, "intensity " + std::to_string(p) + " found; expected only 0 or 255");
    }
    bits.push_back(p == 255 ? 1 : 0);
  }
  return BinaryMask(img.width(), img.height(), std::move(bits));
}

/// Tight box around the set bits, or nullopt for an empty mask.
inline std::optional<BoundingBox> tight_box(const BinaryMask& m) noexcept {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::dimension_mismatch, "cannot unite masks of different shapes");
  std::vector<std::uint8_t> bits(a.size());
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = pa[i] | pb[i];
  return BinaryMask(a.width(), a.height(), std::move(bits));
}

/// Downscales 16-bit samples by keeping the high byte.
inline GrayImage from_16bit(int width, int height, std::span<const std::uint16_t> samples) {
  std::vector<std::uint8_t> px(samples.size());
  std::transform(samples.begin(), samples.end(), px.begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v >> 8); });
  return GrayImage(width, height, std::move(px));
}

}  // namespace ctc
