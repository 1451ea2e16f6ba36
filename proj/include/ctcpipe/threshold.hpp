#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <cstdint>
#include <vector>

#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

namespace ctc {

using Histogram = std::array<std::size_t, 256>;

struct OtsuResult {
  /// Pixels with intensity > threshold form the foreground class.
  std::uint8_t threshold = 0;
  double between_class_variance = 0.0;
  double mean_below = 0.0;
  double mean_above = 0.0;
  /// Square root of the pooled within-class variance.
  double within_class_stddev = 0.0;
  Histogram histogram{};
};

inline Histogram histogram_of(const GrayImage& img) noexcept {
  Histogram h{};
  for (auto p : img.pixels()) ++h[p];
  return h;
}

namespace detail {

__extension__ typedef unsigned __int128 u128;

/// Sign of a/b - c/d for non-negative a, c and positive b, d, computed
/// exactly by walking both continued-fraction expansions.
inline int compare_fractions(u128 a, u128 b, u128 c, u128 d) noexcept {
  for (;;) {
    const u128 qa = a / b;
    const u128 qc = c / d;
    if (qa != qc) return qa < qc ? -1 : 1;
    a %= b;
    c %= d;
    if (a == 0 || c == 0) {
      if (a == c) return 0;
      return a == 0 ? -1 : 1;
    }
    // a/b < c/d  <=>  d/c < b/a
    const u128 na = d, nb = c, nc = b, nd = a;
    a = na;
    b = nb;
    c = nc;
    d = nd;
  }
}

struct ClassSplit {
  u128 w0 = 0, w1 = 0;  // pixel counts at or below / above t
  u128 s0 = 0, s1 = 0;  // intensity sums of the same classes
  u128 q0 = 0, q1 = 0;  // sums of squared intensities
};

}  // namespace detail

/// Otsu's threshold over the two classes {p <= t} and {p > t}. The
/// between-class variance of each candidate t is compared exactly in integer
/// arithmetic; among equal maxima the smallest t wins.
inline OtsuResult otsu_threshold(const Histogram& hist) {
  using detail::u128;
  u128 total = 0, sum = 0, squares = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    total += hist[i];
    sum += static_cast<u128>(i) * hist[i];
    squares += static_cast<u128>(i) * i * hist[i];
  }
  if (total == 0) throw Error(ErrorCode::invalid_argument, "empty histogram");
  // d = s0*N - S*w0 is bounded by 255*N^2; its square must fit in 128 bits.
  if (total >= (u128{1} << 28)) throw Error(ErrorCode::invalid_argument, "image too large for exact Otsu");

  bool found = false;
  int best_t = 0;
  u128 best_num = 0, best_den = 1;
  detail::ClassSplit best_split;
  detail::ClassSplit split;
  for (int t = 0; t < 256; ++t) {
    split.w0 += hist[static_cast<std::size_t>(t)];
    split.s0 += static_cast<u128>(t) * hist[static_cast<std::size_t>(t)];
    split.q0 += static_cast<u128>(t) * static_cast<u128>(t) * hist[static_cast<std::size_t>(t)];
    split.w1 = total - split.w0;
    split.s1 = sum - split.s0;
    split.q1 = squares - split.q0;
    if (split.w0 == 0 || split.w1 == 0) continue;
    // sigma_b^2 * N^2 == d^2 / (w0 * w1) with d = S*w0 - s0*N
    const u128 lhs = sum * split.w0;
    const u128 rhs = split.s0 * total;
    const u128 d = lhs > rhs ? lhs - rhs : rhs - lhs;
    const u128 numerator = d * d;
    const u128 denominator = split.w0 * split.w1;
    if (!found || detail::compare_fractions(numerator, denominator, best_num, best_den) > 0) {
      found = true;
      best_t = t;
      best_num = numerator;
      best_den = denominator;
      best_split = split;
    }
  }
  if (!found || best_num == 0) {
    throw Error(ErrorCode::degenerate_histogram, "constant image has no foreground/background split");
  }

  OtsuResult r;
  r.threshold = static_cast<std::uint8_t>(best_t);
  r.histogram = hist;
  const long double n = static_cast<long double>(total);
  r.between_class_variance =
      static_cast<double>(static_cast<long double>(best_num) / static_cast<long double>(best_den) / (n * n));
  r.mean_below = static_cast<double>(static_cast<long double>(best_split.s0) / static_cast<long double>(best_split.w0));
  r.mean_above = static_cast<double>(static_cast<long double>(best_split.s1) / static_cast<long double>(best_split.w1));
  // N * within-class variance = sum over classes of (q - s^2 / w).
  auto scatter = [](u128 w, u128 s, u128 q) {
    return static_cast<long double>(q) - static_cast<long double>(s) * static_cast<long double>(s) /
                                             static_cast<long double>(w);
  };
  const long double within = (scatter(best_split.w0, best_split.s0, best_split.q0) +
                              scatter(best_split.w1, best_split.s1, best_split.q1)) /
                             n;
  r.within_class_stddev = static_cast<double>(std::sqrt(std::max(within, 0.0L)));
  return r;
}

inline OtsuResult otsu_threshold(const GrayImage& img) {
  if (img.empty()) throw Error(ErrorCode::invalid_argument, "empty image");
  return otsu_threshold(histogram_of(img));
}

/// 255 where p > t, 0 elsewhere.
inline GrayImage apply_threshold(const GrayImage& img, std::uint8_t t) {
  std::vector<std::uint8_t> out(img.size());
  const auto src = img.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] > t ? 255 : 0;
  return GrayImage(img.width(), img.height(), std::move(out));
}

inline BinaryMask binarize_otsu(const GrayImage& img) {
  return to_mask(apply_threshold(img, otsu_threshold(img).threshold));
}

/// Decides whether an Otsu split reflects real signal. A split is rejected
/// when its class means are closer than `min_gap` levels, or closer than
/// `min_gap_to_spread` pooled within-class standard deviations. Splitting
/// pure noise gives a gap of about three standard deviations whatever the
/// noise level; a stained blob on background gives far more. Zero disables
/// either test.
struct SeparationGuard {
  double min_gap = 20.0;
  double min_gap_to_spread = 5.0;

  bool accepts(const OtsuResult& r) const noexcept {
    const double gap = r.mean_above - r.mean_below;
    if (gap < min_gap) return false;
    return !(min_gap_to_spread > 0.0 && gap < min_gap_to_spread * r.within_class_stddev);
  }
};

/// As binarize_otsu, but a split the guard rejects is reported as
/// ErrorCode::degenerate_histogram.
inline BinaryMask binarize_otsu(const GrayImage& img, const SeparationGuard& guard) {
  const auto r = otsu_threshold(img);
  if (!guard.accepts(r)) {
    throw Error(ErrorCode::degenerate_histogram,
                "class means differ by " + std::to_string(r.mean_above - r.mean_below) + " with within-class spread " +
                    std::to_string(r.within_class_stddev));
  }
  return to_mask(apply_threshold(img, r.threshold));
}

/// Foreground mask, or nullopt when the image carries no separable signal.
inline std::optional<BinaryMask> signal_mask(const GrayImage& img, const SeparationGuard& guard) {
  try {
    return binarize_otsu(img, guard);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::degenerate_histogram) return std::nullopt;
    throw;
  }
}

}  // namespace ctc
