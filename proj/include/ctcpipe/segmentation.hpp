#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include "ctcpipe/detection.hpp"
#include "ctcpipe/raster.hpp"
#include "ctcpipe/threshold.hpp"

namespace ctc {

/// One 8-connected component. `mask` has the dimensions of the labelled image.
struct Blob {
  BinaryMask mask;
  BoundingBox bbox;
  std::size_t area = 0;
  double equivalent_diameter = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
};

inline double equivalent_diameter(std::size_t area) noexcept {
  return 2.0 * std::sqrt(static_cast<double>(area) / std::numbers::pi);
}

/// Physical size gate. Inactive until a pixel pitch is known.
struct SizeFilter {
  double min_diameter_um = 5.0;
  std::optional<double> microns_per_pixel;

  bool active() const noexcept { return microns_per_pixel.has_value(); }
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0u); }

  std::uint32_t find(std::uint32_t i) noexcept {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::uint32_t a, std::uint32_t b) noexcept {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace detail

/// Two-pass union-find labelling under 8-connectivity. Components are
/// returned by descending area, then by (y, x) of their box's top-left corner.
inline std::vector<Blob> connected_components(const BinaryMask& m) {
  const int w = m.width();
  const int h = m.height();
  constexpr std::uint32_t none = 0xffffffffu;
  std::vector<std::uint32_t> label(m.size(), none);
  std::uint32_t next = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> links;
  auto at = [w](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x); };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(x, y)) continue;
      std::uint32_t own = none;
      // Already-visited neighbours: W, NW, N, NE.
      const int nbr[4][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
      for (const auto& d : nbr) {
        const int nx = x + d[0], ny = y + d[1];
        if (!m.contains(nx, ny)) continue;
        const auto l = label[at(nx, ny)];
        if (l == none) continue;
        if (own == none) {
          own = l;
        } else if (l != own) {
          links.emplace_back(own, l);
        }
      }
      label[at(x, y)] = own == none ? next++ : own;
    }
  }

  detail::DisjointSets sets(next);
  for (auto [a, b] : links) sets.unite(a, b);

  std::vector<std::uint32_t> root_to_blob(next, none);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == none) continue;
    const auto r = sets.find(label[i]);
    if (root_to_blob[r] == none) {
      root_to_blob[r] = static_cast<std::uint32_t>(members.size());
      members.emplace_back();
    }
    members[root_to_blob[r]].push_back(i);
  }

  std::vector<Blob> blobs;
  blobs.reserve(members.size());
  for (const auto& pix : members) {
    std::vector<std::uint8_t> bits(m.size(), 0);
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    double sx = 0.0, sy = 0.0;
    for (auto i : pix) {
      bits[i] = 1;
      const int x = static_cast<int>(i % static_cast<std::size_t>(w));
      const int y = static_cast<int>(i / static_cast<std::size_t>(w));
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
      sx += x;
      sy += y;
    }
    Blob b{BinaryMask(w, h, std::move(bits)), BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1}, pix.size(),
           equivalent_diameter(pix.size()), sx / static_cast<double>(pix.size()),
           sy / static_cast<double>(pix.size())};
    blobs.push_back(std::move(b));
  }
  std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.bbox.y != b.bbox.y) return a.bbox.y < b.bbox.y;
    return a.bbox.x < b.bbox.x;
  });
  return blobs;
}

inline std::vector<Blob> filter_by_size(std::vector<Blob> blobs, const SizeFilter& f) {
  if (!f.active()) return blobs;
  const double pitch = *f.microns_per_pixel;
  std::erase_if(blobs, [&](const Blob& b) { return !(b.equivalent_diameter * pitch > f.min_diameter_um); });
  return blobs;
}

struct ClassicalDetectorConfig {
  SizeFilter size_filter;
  /// Stage-2 detections scoring below this are dropped.
  double dapi_score_threshold = 0.9;
  /// When an Otsu split of the input counts as signal.
  SeparationGuard separation;
};

namespace detail {

inline double mean_intensity(const GrayImage& img, const BinaryMask& m) {
  std::size_t sum = 0, n = 0;
  const auto px = img.pixels();
  const auto bits = m.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (bits[i]) {
      sum += px[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(n) / 255.0;
}

}  // namespace detail

/// Stage-1 stand-in: Otsu foreground components of the CK layer, one box per
/// component, scored by mean normalised intensity.
inline std::vector<Detection> detect_ck_classical(const GrayImage& ck, const ClassicalDetectorConfig& cfg) {
  const auto fg = signal_mask(ck, cfg.separation);
  if (!fg) return {};
  std::vector<Detection> out;
  for (auto& blob : filter_by_size(connected_components(*fg), cfg.size_filter)) {
    out.push_back(Detection{blob.bbox, detail::mean_intensity(ck, blob.mask), std::nullopt, Label::ck});
  }
  return out;
}

/// Stage-2 stand-in on a CK-localised DAPI crop. Every detection carries its
/// component mask; detections scoring under the threshold are discarded.
inline std::vector<Detection> detect_dapi_classical(const GrayImage& dapi_crop, const ClassicalDetectorConfig& cfg) {
  const auto fg = signal_mask(dapi_crop, cfg.separation);
  if (!fg) return {};
  std::vector<Detection> out;
  for (auto& blob : filter_by_size(connected_components(*fg), cfg.size_filter)) {
    const double score = detail::mean_intensity(dapi_crop, blob.mask);
    if (score < cfg.dapi_score_threshold) continue;
    out.push_back(Detection{blob.bbox, score, std::move(blob.mask), Label::dapi});
  }
  return out;
}

}  // namespace ctc
