#pragma once

// Deterministic synthetic clips: static duplicates and procedurally textured
// scenes under known motion. Used as fixtures and as ground truth for the flow
// and curation code.

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>

#include "dive/frame_io.hpp"

namespace dive {

namespace motion {
/// Whole scene (textured background with a bright square) shifts by (dx, dy) px per frame.
struct Translate {
  int dx = 0;
  int dy = 0;
};
/// Bright textured square moves (dx, dy) px per frame over a static background.
struct ObjectTranslate {
  int dx = 0;
  int dy = 0;
};
/// Scale by k per frame about the frame center.
struct Zoom {
  double k = 1.0;
};
/// Rotate by theta radians per frame about the frame center.
struct Rotate {
  double theta = 0.0;
};
/// Combined per-frame similarity: translation (tx, ty), scale k, rotation theta.
struct Similarity {
  double tx = 0.0;
  double ty = 0.0;
  double k = 1.0;
  double theta = 0.0;
};
/// Frames [0, at) are `first`, frames [at, n) are `second`.
struct Cut {
  int at = 0;
  Frame first;
  Frame second;
};
}  // namespace motion

using Motion = std::variant<motion::Translate, motion::ObjectTranslate, motion::Zoom, motion::Rotate,
                            motion::Similarity, motion::Cut>;

struct SynthOptions {
  std::uint64_t seed = 1;
  int square = 0;  // square side in px; 0 picks min(w, h) / 4
  double fps = kDefaultFps;
  std::string item_id = "synthetic";
};

inline FrameSequence synthesize_static(const Frame& frame, int n = 49) {
  if (n < 1) throw input_error("synthesize_static: n must be >= 1");
  FrameSequence seq;
  seq.item_id = "static";
  seq.frames.assign(static_cast<std::size_t>(n), frame);
  return seq;
}

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr long floor_div(long a, long b) noexcept { return a >= 0 ? a / b : -((-a + b - 1) / b); }

/// Value noise on a 4 px lattice, bilinearly interpolated at integer coordinates.
/// Defined over the whole integer plane so shifted views never need edge fill.
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) : seed_(mix64(seed)) {}

  int at(long x, long y, int channel) const noexcept {
    constexpr long s = 4;
    const long cx = floor_div(x, s), cy = floor_div(y, s);
    const long fx = x - cx * s, fy = y - cy * s;
    const long v00 = lattice(cx, cy, channel), v10 = lattice(cx + 1, cy, channel);
    const long v01 = lattice(cx, cy + 1, channel), v11 = lattice(cx + 1, cy + 1, channel);
    const long sum = v00 * (s - fx) * (s - fy) + v10 * fx * (s - fy) + v01 * (s - fx) * fy + v11 * fx * fy;
    return static_cast<int>((sum + s * s / 2) / (s * s));
  }

 private:
  int lattice(long cx, long cy, int channel) const noexcept {
    std::uint64_t h = seed_ ^ mix64(static_cast<std::uint64_t>(cx) * 0x100000001b3ull);
    h = mix64(h ^ (static_cast<std::uint64_t>(cy) * 0xc2b2ae3d27d4eb4full));
    h = mix64(h + static_cast<std::uint64_t>(channel));
    return static_cast<int>(h & 0xff);
  }

  std::uint64_t seed_;
};

struct SceneColors {
  ValueNoise background;
  ValueNoise square;

  explicit SceneColors(std::uint64_t seed) : background(seed), square(seed ^ 0x5a5a5a5a5a5a5a5aull) {}

  void background_rgb(long x, long y, std::uint8_t* out) const noexcept {
    for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(20 + background.at(x, y, c) * 130 / 255);
  }
  void square_rgb(long x, long y, std::uint8_t* out) const noexcept {
    for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(190 + square.at(x, y, c) * 60 / 255);
  }
};

// Start offset along one axis such that a `side` square moving `step` px per
// frame over `n` frames stays inside [0, extent).
inline int square_start(int extent, int side, int step, int n, const char* axis) {
  const long span = static_cast<long>(std::abs(step)) * (n - 1);
  if (side + span > extent)
    throw input_error(std::string("synthesize_moving: square exits the frame along ") + axis);
  const long start = (extent - side - span) / 2 + (step < 0 ? span : 0);
  return static_cast<int>(start);
}

}  // namespace detail

inline FrameSequence synthesize_moving(int width, int height, int n, const Motion& motion,
                                       const SynthOptions& opts = {}) {
  if (width <= 0 || height <= 0) throw input_error("synthesize_moving: dimensions must be positive");
  if (n < 1) throw input_error("synthesize_moving: n must be >= 1");
  const int side = opts.square > 0 ? opts.square : std::max(1, std::min(width, height) / 4);
  const detail::SceneColors colors(opts.seed);

  FrameSequence seq;
  seq.fps = opts.fps;
  seq.item_id = opts.item_id;
  seq.frames.reserve(static_cast<std::size_t>(n));

  auto render = [&](auto&& pixel) {
    for (int f = 0; f < n; ++f) {
      std::vector<std::uint8_t> rgb(3u * static_cast<std::size_t>(width) * height);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) pixel(f, x, y, &rgb[3 * (static_cast<std::size_t>(y) * width + x)]);
      seq.frames.push_back(Frame::from_rgb(width, height, std::move(rgb)));
    }
  };

  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, motion::Translate> || std::is_same_v<M, motion::ObjectTranslate>) {
          const int sx = detail::square_start(width, side, m.dx, n, "x");
          const int sy = detail::square_start(height, side, m.dy, n, "y");
          constexpr bool whole_scene = std::is_same_v<M, motion::Translate>;
          render([&](int f, int x, int y, std::uint8_t* out) {
            const long qx = x - static_cast<long>(m.dx) * f - sx;
            const long qy = y - static_cast<long>(m.dy) * f - sy;
            if (qx >= 0 && qx < side && qy >= 0 && qy < side)
              colors.square_rgb(qx, qy, out);
            else if (whole_scene)
              colors.background_rgb(x - static_cast<long>(m.dx) * f, y - static_cast<long>(m.dy) * f, out);
            else
              colors.background_rgb(x, y, out);
          });
        } else if constexpr (std::is_same_v<M, motion::Cut>) {
          if (m.at < 1 || m.at >= n) throw input_error("synthesize_moving: cut index must be in [1, n)");
          if (m.first.width != width || m.first.height != height || m.second.width != width ||
              m.second.height != height)
            throw input_error("synthesize_moving: cut frames must match the requested size");
          for (int f = 0; f < n; ++f) seq.frames.push_back(f < m.at ? m.first : m.second);
        } else {
          motion::Similarity s;
          if constexpr (std::is_same_v<M, motion::Zoom>) s.k = m.k;
          if constexpr (std::is_same_v<M, motion::Rotate>) s.theta = m.theta;
          if constexpr (std::is_same_v<M, motion::Similarity>) s = m;
          if (!(s.k > 0)) throw input_error("synthesize_moving: scale must be positive");
          const double cx = width / 2.0, cy = height / 2.0;
          const double half = side / 2.0;
          render([&](int f, int x, int y, std::uint8_t* out) {
            // Inverse of the frame-f similarity: pixel -> scene coordinates.
            const double scale = std::pow(s.k, f);
            const double angle = s.theta * f;
            const double px = x + 0.5 - cx - s.tx * f;
            const double py = y + 0.5 - cy - s.ty * f;
            const double c = std::cos(angle), sn = std::sin(angle);
            const double wx = (c * px + sn * py) / scale;
            const double wy = (-sn * px + c * py) / scale;
            const long ix = std::lround(std::floor(wx + cx));
            const long iy = std::lround(std::floor(wy + cy));
            if (std::abs(wx) < half && std::abs(wy) < half)
              colors.square_rgb(ix, iy, out);
            else
              colors.background_rgb(ix, iy, out);
          });
        }
      },
      motion);
  return seq;
}

}  // namespace dive
