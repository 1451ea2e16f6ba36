#pragma once

// Reference implementations used only by the tests. Each one follows the
// textbook definition directly and shares no code with the library.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "ctcpipe/ctcpipe.hpp"

namespace oracle {

using rational = boost::multiprecision::cpp_rational;

/// Exhaustive Otsu scan: for every t with two non-empty classes {p <= t},
/// {p > t}, evaluates w0 * w1 * (mu0 - mu1)^2 in exact rationals. Returns the
/// smallest maximising t, or nullopt when no split exists or all are zero.
inline std::optional<int> otsu(const std::array<std::size_t, 256>& hist) {
  long long total = 0, sum = 0;
  for (int v = 0; v < 256; ++v) {
    total += static_cast<long long>(hist[v]);
    sum += static_cast<long long>(hist[v]) * v;
  }
  std::optional<int> best_t;
  rational best = 0;
  long long n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += static_cast<long long>(hist[t]);
    s0 += static_cast<long long>(hist[t]) * t;
    const long long n1 = total - n0, s1 = sum - s0;
    if (n0 == 0 || n1 == 0) continue;
    const rational w0(n0, total), w1(n1, total);
    const rational d = rational(s0, n0) - rational(s1, n1);
    const rational var = w0 * w1 * d * d;
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

inline std::size_t count(const ctc::BinaryMask& m) {
  std::size_t n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) n += m(x, y) == 1;
  return n;
}

inline std::size_t count_both(const ctc::BinaryMask& a, const ctc::BinaryMask& b) {
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) n += a(x, y) == 1 && b(x, y) == 1;
  return n;
}

/// 8-connected components by depth-first flood fill, each as a sorted set of
/// (y, x) pixels. The outer set orders components by their first pixel.
inline std::set<std::vector<std::pair<int, int>>> components(const ctc::BinaryMask& m) {
  std::vector<char> seen(m.size(), 0);
  std::set<std::vector<std::pair<int, int>>> out;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y) == 0 || seen[y * m.width() + x]) continue;
      std::vector<std::pair<int, int>> comp, stack{{y, x}};
      seen[y * m.width() + x] = 1;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        comp.emplace_back(cy, cx);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height()) continue;
            if (m(nx, ny) == 0 || seen[ny * m.width() + nx]) continue;
            seen[ny * m.width() + nx] = 1;
            stack.emplace_back(ny, nx);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      out.insert(std::move(comp));
    }
  }
  return out;
}

struct GridBest {
  int i1 = 0, i2 = 0;  // r1 = i1/k, r2 = i2/k
  rational f1 = 0;
};

/// Brute-force calibration over r = i/k, i in [0, k], with F1 in exact
/// rationals and the rule written out per semantics.
inline GridBest calibrate(const std::vector<ctc::LabeledOverlap>& data, int k, ctc::Semantics sem) {
  GridBest best;
  bool have = false;
  for (int i1 = 0; i1 <= k; ++i1) {
    for (int i2 = 0; i2 <= k; ++i2) {
      const double r1 = static_cast<double>(i1) / k, r2 = static_cast<double>(i2) / k;
      int tp = 0, fp = 0, fn = 0;
      for (const auto& s : data) {
        bool pred;
        if (sem == ctc::Semantics::exclusionary) {
          pred = s.p_ck_given_c > r1 && !(s.p_cd45_given_c > r2);
        } else {
          pred = !(s.p_ck_given_c < r1) && s.p_cd45_given_c > r2;
        }
        if (pred && s.label) ++tp;
        if (pred && !s.label) ++fp;
        if (!pred && s.label) ++fn;
      }
      const rational f1 = tp == 0 ? rational(0) : rational(2 * tp, 2 * tp + fp + fn);
      if (!have || f1 > best.f1) {
        best = {i1, i2, f1};
        have = true;
      }
    }
  }
  return best;
}

inline ctc::GrayImage random_image(std::mt19937_64& rng, int w, int h) {
  // Mix of flat, bimodal and narrow-range images so ties and sparse
  // histograms are exercised, not just uniform noise.
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  const auto mode = rng() % 4;
  const int lo = static_cast<int>(rng() % 256);
  const int hi = static_cast<int>(rng() % 256);
  const int a = std::min(lo, hi), b = std::max(lo, hi);
  for (auto& p : px) {
    switch (mode) {
      case 0: p = static_cast<std::uint8_t>(rng() % 256); break;
      case 1: p = static_cast<std::uint8_t>(rng() % 2 ? a : b); break;
      case 2: p = static_cast<std::uint8_t>(a + rng() % (b - a + 1)); break;
      default: p = static_cast<std::uint8_t>((rng() % 3 == 0 ? 200 : 30) + static_cast<int>(rng() % 41) - 20); break;
    }
  }
  return ctc::GrayImage(w, h, std::move(px));
}

inline ctc::BinaryMask random_mask(std::mt19937_64& rng, int w, int h, unsigned density_pct) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  for (auto& p : px) p = rng() % 100 < density_pct ? 1 : 0;
  return ctc::BinaryMask(w, h, std::move(px));
}

}  // namespace oracle
