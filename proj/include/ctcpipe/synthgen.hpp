#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctcpipe/decision.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

// Synthetic three-layer scenes with exact ground truth.
//
// Determinism: all geometry is integer; randomness comes from std::mt19937_64
// (its output sequence is fixed by the C++ standard) seeded through
// SplitMix64, and every draw is mapped to integers by rejection sampling.
// No std::*_distribution is used, since their algorithms are
// implementation-defined.

namespace ctc::synth {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed of the stream for item `index` of a batch seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(seed ^ splitmix64(index));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do v = next();
    while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  /// Uniform on the grid {lo, lo + 1/100, ..., hi}.
  double hundredths(double lo, double hi) {
    const auto a = static_cast<std::int64_t>(std::ceil(lo * 100.0 - 1e-9));
    const auto b = static_cast<std::int64_t>(std::floor(hi * 100.0 + 1e-9));
    return static_cast<double>(uniform(a, b)) / 100.0;
  }

  bool coin() { return (next() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

struct Disc {
  int cx = 0;
  int cy = 0;
  int radius = 1;
  std::uint8_t intensity = 200;
};

/// A nucleus whose placement is solved to hit the requested overlaps. The
/// centre is a hint: the solver picks, among positions achieving the best
/// overlap match, the one nearest to it.
struct DapiBlob {
  int cx = 0;
  int cy = 0;
  int radius = 6;
  std::uint8_t intensity = 240;
  double planted_ck_overlap = 1.0;
  double planted_cd45_overlap = 0.0;
  /// Radius of the CD45 disc placed for a non-zero CD45 overlap. 0 picks the
  /// first of radius + 2 .. radius + 6 that reaches the target.
  int cd45_radius = 0;
  std::uint8_t cd45_intensity = 180;
};

enum class NoiseKind { none, gaussian, salt_pepper };

/// gaussian: bounded bell noise, mean of four uniform draws on
/// [-amplitude, amplitude]. salt_pepper: amplitude per mille of pixels forced
/// to 0 or 255.
struct Noise {
  NoiseKind kind = NoiseKind::none;
  int amplitude = 0;
};

/// Additive radial glare, fading linearly to zero at `radius`.
struct Flare {
  int cx = 0;
  int cy = 0;
  int radius = 32;
  int strength = 60;
};

struct SceneSpec {
  std::string sample_id = "scene";
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  std::uint8_t background = 16;
  std::vector<Disc> ck_blobs;
  std::vector<DapiBlob> dapi_blobs;
  std::vector<Disc> cd45_blobs;
  Noise noise;
  std::optional<Flare> flare;
};

struct TruthCandidate {
  BinaryMask mask;
  /// Solved centre in half-pixel units.
  int cx2 = 0;
  int cy2 = 0;
  double p_ck_given_c = 0.0;
  double p_cd45_given_c = 0.0;
  bool is_ctc = false;
};

struct GroundTruth {
  BinaryMask ck_mask;
  BinaryMask cd45_mask;
  std::vector<TruthCandidate> candidates;
  DecisionParams params;

  std::size_t ctc_count() const {
    return static_cast<std::size_t>(
        std::count_if(candidates.begin(), candidates.end(), [](const TruthCandidate& c) { return c.is_ctc; }));
  }
  bool sample_positive(std::size_t min_ctc_count = 1) const { return ctc_count() >= min_ctc_count; }
};

struct Scene {
  ChannelSet channels;
  GroundTruth truth;
};

namespace detail {

/// Disc with centre (cx2/2, cy2/2): pixel (x,y) belongs iff
/// (2x - cx2)^2 + (2y - cy2)^2 <= (2r)^2.
struct HalfDisc {
  int cx2 = 0;
  int cy2 = 0;
  int radius = 1;

  bool contains(int x, int y) const noexcept {
    const long long dx = 2LL * x - cx2;
    const long long dy = 2LL * y - cy2;
    return dx * dx + dy * dy <= 4LL * radius * radius;
  }
  bool fits(int width, int height) const noexcept {
    return cx2 - 2 * radius >= 0 && cy2 - 2 * radius >= 0 && cx2 + 2 * radius <= 2 * (width - 1) &&
           cy2 + 2 * radius <= 2 * (height - 1);
  }
  int x0() const noexcept { return (cx2 - 2 * radius + 1) / 2; }
  int x1() const noexcept { return (cx2 + 2 * radius) / 2; }
  int y0() const noexcept { return (cy2 - 2 * radius + 1) / 2; }
  int y1() const noexcept { return (cy2 + 2 * radius) / 2; }
};

template <typename Fn>
void for_each_pixel(const HalfDisc& d, int width, int height, Fn&& fn) {
  for (int y = std::max(0, d.y0() - 1); y <= std::min(height - 1, d.y1() + 1); ++y) {
    for (int x = std::max(0, d.x0() - 1); x <= std::min(width - 1, d.x1() + 1); ++x) {
      if (d.contains(x, y)) fn(x, y);
    }
  }
}

inline BinaryMask rasterize(const HalfDisc& d, int width, int height) {
  BinaryMask m(width, height, 0);
  for_each_pixel(d, width, height, [&](int x, int y) { m.set(x, y, 1); });
  return m;
}

struct Placement {
  HalfDisc disc;
  double error = 0.0;
  std::size_t area = 0;
};

/// Scans half-pixel positions of a disc of `radius` inside `window` (pixel
/// box) plus the hint, scoring each with `fraction(disc)`. Keeps the position
/// closest to `target`, then nearest the hint, then topmost-leftmost.
template <typename FractionFn>
std::optional<Placement> solve_position(int radius, int hint_cx2, int hint_cy2, BoundingBox window, int width,
                                        int height, double target, FractionFn&& fraction) {
  std::optional<Placement> best;
  long long best_dist = 0;
  auto consider = [&](int cx2, int cy2) {
    const HalfDisc d{cx2, cy2, radius};
    if (!d.fits(width, height)) return;
    const auto [frac, area] = fraction(d);
    const double err = std::abs(frac - target);
    const long long dist = 1LL * (cx2 - hint_cx2) * (cx2 - hint_cx2) + 1LL * (cy2 - hint_cy2) * (cy2 - hint_cy2);
    const bool better = !best || err < best->error ||
                        (err == best->error && (dist < best_dist || (dist == best_dist &&
                                                                     (cy2 < best->disc.cy2 ||
                                                                      (cy2 == best->disc.cy2 && cx2 < best->disc.cx2)))));
    if (better) {
      best = Placement{d, err, area};
      best_dist = dist;
    }
  };
  consider(hint_cx2, hint_cy2);
  for (int cy2 = 2 * window.y; cy2 <= 2 * (window.bottom() - 1); ++cy2) {
    for (int cx2 = 2 * window.x; cx2 <= 2 * (window.right() - 1); ++cx2) consider(cx2, cy2);
  }
  return best;
}

inline bool touches(const BinaryMask& a, const BinaryMask& b) {
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!a(x, y)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (b.contains(x + dx, y + dy) && b(x + dx, y + dy)) return true;
        }
      }
    }
  }
  return false;
}

inline std::uint8_t clamp_u8(int v) noexcept { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace detail

/// Rasterises a scene. Ground truth is derived from the emitted masks, not
/// from the requested overlaps.
inline Scene generate(const SceneSpec& spec, const DecisionParams& params = {}) {
  const int W = spec.width;
  const int H = spec.height;
  if (W < 1 || H < 1) {
    throw Error(ErrorCode::infeasible_scene, "dimensions " + std::to_string(W) + "x" + std::to_string(H) + " are empty");
  }
  auto disc_of = [](const Disc& d) { return detail::HalfDisc{2 * d.cx, 2 * d.cy, d.radius}; };
  auto check_fit = [&](const Disc& d, const std::string& what) {
    if (d.radius < 1 || !disc_of(d).fits(W, H)) {
      throw Error(ErrorCode::infeasible_scene, what + " does not fit inside the " + std::to_string(W) + "x" +
                                                   std::to_string(H) + " image");
    }
  };

  BinaryMask ck_mask(W, H, 0);
  std::vector<int> ck_level(static_cast<std::size_t>(W) * H, -1);
  std::vector<int> dapi_level(ck_level.size(), -1);
  std::vector<int> cd45_level(ck_level.size(), -1);
  auto paint = [&](std::vector<int>& level, const detail::HalfDisc& d, std::uint8_t v, BinaryMask* mask) {
    detail::for_each_pixel(d, W, H, [&](int x, int y) {
      auto& l = level[static_cast<std::size_t>(y) * W + x];
      l = std::max<int>(l, v);
      if (mask) mask->set(x, y, 1);
    });
  };

  for (std::size_t i = 0; i < spec.ck_blobs.size(); ++i) {
    check_fit(spec.ck_blobs[i], "ck_blobs[" + std::to_string(i) + "]");
    paint(ck_level, disc_of(spec.ck_blobs[i]), spec.ck_blobs[i].intensity, &ck_mask);
  }
  BinaryMask cd45_mask(W, H, 0);
  for (std::size_t i = 0; i < spec.cd45_blobs.size(); ++i) {
    check_fit(spec.cd45_blobs[i], "cd45_blobs[" + std::to_string(i) + "]");
    paint(cd45_level, disc_of(spec.cd45_blobs[i]), spec.cd45_blobs[i].intensity, &cd45_mask);
  }

  const auto ck_box = tight_box(ck_mask);
  std::vector<TruthCandidate> candidates;
  for (std::size_t i = 0; i < spec.dapi_blobs.size(); ++i) {
    const auto& b = spec.dapi_blobs[i];
    const std::string name = "dapi_blobs[" + std::to_string(i) + "]";
    if (!(b.planted_ck_overlap >= 0.0 && b.planted_ck_overlap <= 1.0) ||
        !(b.planted_cd45_overlap >= 0.0 && b.planted_cd45_overlap <= 1.0)) {
      throw Error(ErrorCode::infeasible_scene, name + ": planted overlaps must lie in [0,1]");
    }
    if (b.radius < 1) throw Error(ErrorCode::infeasible_scene, name + ": radius must be positive");

    // Place the nucleus against the CK layer.
    // Every overlap in [0,1] is reachable with the centre within 2r+2 of the CK box.
    BoundingBox window{0, 0, W, H};
    if (ck_box) window = pad_and_clamp(*ck_box, 2 * b.radius + 2, W, H).value_or(window);
    const auto nucleus = detail::solve_position(
        b.radius, 2 * b.cx, 2 * b.cy, window, W, H, b.planted_ck_overlap, [&](const detail::HalfDisc& d) {
          std::size_t area = 0, inter = 0;
          detail::for_each_pixel(d, W, H, [&](int x, int y) {
            ++area;
            inter += ck_mask(x, y);
          });
          return std::pair{static_cast<double>(inter) / static_cast<double>(area), area};
        });
    if (!nucleus) throw Error(ErrorCode::infeasible_scene, name + " does not fit inside the image");
    if (nucleus->error > 1.0 / static_cast<double>(nucleus->area) + 1e-12) {
      throw Error(ErrorCode::infeasible_scene, name + ": CK overlap " + std::to_string(b.planted_ck_overlap) +
                                                   " is not achievable (best error " +
                                                   std::to_string(nucleus->error) + ")");
    }
    TruthCandidate c;
    c.mask = detail::rasterize(nucleus->disc, W, H);
    c.cx2 = nucleus->disc.cx2;
    c.cy2 = nucleus->disc.cy2;
    for (const auto& other : candidates) {
      if (detail::touches(c.mask, other.mask)) {
        throw Error(ErrorCode::infeasible_scene, name + " touches another nucleus");
      }
    }

    // Place a CD45 disc to reach the requested CD45 coverage of the nucleus.
    if (b.planted_cd45_overlap > 0.0) {
      // Radius r + 2 unless given; the fractions reachable by one radius have
      // gaps, so the default widens the disc until the target is hit.
      const int r0 = b.cd45_radius > 0 ? b.cd45_radius : b.radius + 2;
      const int r_last = b.cd45_radius > 0 ? r0 : r0 + 4;
      const auto nb = tight_box(c.mask).value();
      const double tol = 1.0 / static_cast<double>(nucleus->area) + 1e-12;
      std::optional<detail::Placement> disc;
      for (int r = r0; r <= r_last && !(disc && disc->error <= tol); ++r) {
        const auto cd45_window = pad_and_clamp(nb, r + 1, W, H).value();
        disc = detail::solve_position(
            r, c.cx2, c.cy2, cd45_window, W, H, b.planted_cd45_overlap, [&](const detail::HalfDisc& d) {
              std::size_t area = 0, inter = 0;
              detail::for_each_pixel(nucleus->disc, W, H, [&](int x, int y) {
                ++area;
                inter += (cd45_mask(x, y) || d.contains(x, y)) ? 1 : 0;
              });
              return std::pair{static_cast<double>(inter) / static_cast<double>(area), area};
            });
      }
      if (!disc || disc->error > tol) {
        throw Error(ErrorCode::infeasible_scene,
                    name + ": CD45 overlap " + std::to_string(b.planted_cd45_overlap) + " is not achievable");
      }
      paint(cd45_level, disc->disc, b.cd45_intensity, &cd45_mask);
    }
    paint(dapi_level, nucleus->disc, b.intensity, nullptr);
    candidates.push_back(std::move(c));
  }

  GroundTruth truth{ck_mask, cd45_mask, {}, params};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.p_ck_given_c = overlap_fraction(truth.ck_mask, c.mask);
    c.p_cd45_given_c = overlap_fraction(truth.cd45_mask, c.mask);
    const double tol = 1.0 / static_cast<double>(mask_area(c.mask)) + 1e-12;
    if (std::abs(c.p_cd45_given_c - spec.dapi_blobs[i].planted_cd45_overlap) > tol) {
      throw Error(ErrorCode::infeasible_scene, "dapi_blobs[" + std::to_string(i) +
                                                   "]: CD45 coverage from other blobs departs from the planted value");
    }
    if (std::abs(c.p_ck_given_c - spec.dapi_blobs[i].planted_ck_overlap) > tol) {
      throw Error(ErrorCode::infeasible_scene, "dapi_blobs[" + std::to_string(i) + "]: CK overlap drifted");
    }
    c.is_ctc = decide(c.p_ck_given_c, c.p_cd45_given_c, params);
  }
  truth.candidates = std::move(candidates);

  // Compose intensities: background, max over discs, flare, noise.
  Rng rng(spec.seed);
  auto layer = [&](const std::vector<int>& level) {
    std::vector<std::uint8_t> px(level.size());
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const auto i = static_cast<std::size_t>(y) * W + x;
        int v = level[i] >= 0 ? level[i] : spec.background;
        if (spec.flare) {
          const auto& f = *spec.flare;
          const long long dx = x - f.cx, dy = y - f.cy;
          const auto d2 = dx * dx + dy * dy;
          const auto r2 = 1LL * f.radius * f.radius;
          if (d2 < r2) {
            // strength * (1 - d/R), with d = floor(sqrt(d2)) computed exactly.
            long long d = static_cast<long long>(std::sqrt(static_cast<double>(d2)));
            while (d * d > d2) --d;
            while ((d + 1) * (d + 1) <= d2) ++d;
            v += static_cast<int>(f.strength * (f.radius - d) / f.radius);
          }
        }
        switch (spec.noise.kind) {
          case NoiseKind::none: break;
          case NoiseKind::gaussian: {
            const int a = spec.noise.amplitude;
            long long s = 0;
            for (int k = 0; k < 4; ++k) s += rng.uniform(-a, a);
            v += static_cast<int>(s >= 0 ? (s + 2) / 4 : -((-s + 2) / 4));
            break;
          }
          case NoiseKind::salt_pepper:
            if (rng.uniform(0, 999) < spec.noise.amplitude) v = rng.coin() ? 255 : 0;
            break;
        }
        px[i] = detail::clamp_u8(v);
      }
    }
    return GrayImage(W, H, std::move(px));
  };
  auto ck = layer(ck_level);
  auto dapi = layer(dapi_level);
  auto cd45 = layer(cd45_level);
  return Scene{ChannelSet(std::move(ck), std::move(dapi), std::move(cd45), spec.sample_id), std::move(truth)};
}

/// Parameters for a batch of single-nucleus scenes with planted classes.
struct BatchSpec {
  std::size_t n = 1;
  std::size_t positives = 0;
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
  int ck_radius_min = 20;
  int ck_radius_max = 26;
  int dapi_radius_min = 6;
  int dapi_radius_max = 8;
  /// Minimum distance of planted overlaps from the decision thresholds.
  double margin = 0.05;
  Noise noise{NoiseKind::gaussian, 16};
  /// Adds a CD45 disc away from the cell, as a leukocyte elsewhere in view.
  bool leukocyte_decoy = true;
  DecisionParams params;
};

struct PlannedScene {
  SceneSpec spec;
  bool planted_positive = false;
};

/// Deterministic scene specs for a batch. Positives are spread evenly
/// through the index range.
inline std::vector<PlannedScene> plan_batch(const BatchSpec& b) {
  if (b.n == 0) throw Error(ErrorCode::invalid_argument, "batch size must be at least 1");
  if (b.positives > b.n) throw Error(ErrorCode::invalid_argument, "more positives than samples");
  if (b.params.semantics != Semantics::exclusionary) {
    throw Error(ErrorCode::invalid_argument, "batch planning plants exclusionary-semantics classes");
  }
  const double r1 = b.params.r1, r2 = b.params.r2, m = b.margin;
  if (r1 - m < 0.0 && r1 + m > 1.0) throw Error(ErrorCode::invalid_argument, "margin leaves no room around r1");

  std::vector<PlannedScene> out;
  out.reserve(b.n);
  for (std::size_t i = 0; i < b.n; ++i) {
    Rng rng(derive_seed(b.seed, i));
    // Bresenham-style spread of positives over the index range.
    const bool positive = (i + 1) * b.positives / b.n != i * b.positives / b.n;

    SceneSpec s;
    s.sample_id = "sample_" + std::string(4 - std::min<std::size_t>(4, std::to_string(i).size()), '0') + std::to_string(i);
    s.seed = rng.next();
    s.width = b.width;
    s.height = b.height;
    s.noise = b.noise;

    const int ck_r = static_cast<int>(rng.uniform(b.ck_radius_min, b.ck_radius_max));
    const int jitter = std::max(0, std::min(b.width, b.height) / 16);
    Disc ck{b.width / 2 + static_cast<int>(rng.uniform(-jitter, jitter)),
            b.height / 2 + static_cast<int>(rng.uniform(-jitter, jitter)), ck_r, 160};
    s.ck_blobs.push_back(ck);

    DapiBlob nucleus;
    nucleus.radius = static_cast<int>(rng.uniform(b.dapi_radius_min, b.dapi_radius_max));
    nucleus.cx = ck.cx + static_cast<int>(rng.uniform(-ck_r, ck_r));
    nucleus.cy = ck.cy + static_cast<int>(rng.uniform(-ck_r, ck_r));
    const bool ck_ok_hi = r1 + m <= 1.0;
    if (positive) {
      nucleus.planted_ck_overlap = rng.hundredths(r1 + m, 1.0);
      nucleus.planted_cd45_overlap = rng.coin() ? 0.0 : rng.hundredths(0.0, std::max(0.0, r2 - m));
    } else if (rng.coin() || !ck_ok_hi || r2 + m > 1.0) {
      // CK-negative nucleus.
      nucleus.planted_ck_overlap = rng.hundredths(0.0, std::max(0.0, r1 - m));
      nucleus.planted_cd45_overlap = 0.0;
    } else {
      // Leukocyte: CK-covered but CD45-positive.
      nucleus.planted_ck_overlap = rng.hundredths(r1 + m, 1.0);
      nucleus.planted_cd45_overlap = rng.hundredths(r2 + m, 1.0);
    }
    s.dapi_blobs.push_back(nucleus);

    if (b.leukocyte_decoy) {
      const int r = b.dapi_radius_max;
      const int margin_px = r + 2;
      const int cx = rng.coin() ? margin_px : b.width - 1 - margin_px;
      const int cy = rng.coin() ? margin_px : b.height - 1 - margin_px;
      s.cd45_blobs.push_back(Disc{cx, cy, r, 180});
    }
    out.push_back(PlannedScene{std::move(s), positive});
  }
  return out;
}

}  // namespace ctc::synth
