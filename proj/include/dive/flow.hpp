#pragma once

// Coarse-to-fine block-matching optical flow on luma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <vector>

#include "dive/detail/json_util.hpp"
#include "dive/frame_io.hpp"

namespace dive {

struct FlowParams {
  int block = 16;
  int levels = 3;
  int search_coarse = 4;
  int search_refine = 2;
};

/// Per-block displacement grid for one frame pair. Block (i, j) covers
/// [i*block, (i+1)*block) x [j*block, (j+1)*block) of the analysed frame.
struct FlowField {
  int width = 0;   // analysed frame size
  int height = 0;
  int block = 16;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<double> u;     // displacement a -> b, px
  std::vector<double> v;
  std::vector<double> cost;  // mean SAD per pixel at the chosen displacement

  static FlowField zeros(int width, int height, int block) {
    FlowField f;
    f.width = width;
    f.height = height;
    f.block = block;
    f.grid_w = width / block;
    f.grid_h = height / block;
    const auto n = static_cast<std::size_t>(f.grid_w) * f.grid_h;
    f.u.assign(n, 0.0);
    f.v.assign(n, 0.0);
    f.cost.assign(n, 0.0);
    return f;
  }

  std::size_t size() const noexcept { return u.size(); }
  std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(j) * grid_w + i; }
  /// Block center in frame-centred coordinates.
  double center_x(std::size_t idx) const noexcept {
    return (static_cast<double>(idx % grid_w) + 0.5) * block - width / 2.0;
  }
  double center_y(std::size_t idx) const noexcept {
    return (static_cast<double>(idx / grid_w) + 0.5) * block - height / 2.0;
  }

  bool operator==(const FlowField&) const = default;
};

/// Blocks excluding the outermost ring; all blocks when the grid is thinner than 3.
inline std::vector<std::size_t> interior_blocks(const FlowField& f) {
  std::vector<std::size_t> out;
  const bool trim_x = f.grid_w >= 3, trim_y = f.grid_h >= 3;
  for (int j = trim_y ? 1 : 0; j < (trim_y ? f.grid_h - 1 : f.grid_h); ++j)
    for (int i = trim_x ? 1 : 0; i < (trim_x ? f.grid_w - 1 : f.grid_w); ++i) out.push_back(f.index(i, j));
  return out;
}

namespace detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> px;

  std::uint8_t at_clamped(int x, int y) const noexcept {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return px[static_cast<std::size_t>(y) * w + x];
  }
};

inline Plane half_size(const Plane& src) {
  Plane dst{src.w / 2, src.h / 2, {}};
  dst.px.resize(static_cast<std::size_t>(dst.w) * dst.h);
  for (int y = 0; y < dst.h; ++y) {
    const std::uint8_t* r0 = &src.px[static_cast<std::size_t>(2 * y) * src.w];
    const std::uint8_t* r1 = r0 + src.w;
    for (int x = 0; x < dst.w; ++x)
      dst.px[static_cast<std::size_t>(y) * dst.w + x] =
          static_cast<std::uint8_t>((r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1] + 2) / 4);
  }
  return dst;
}

// SAD between the a-block at (x0, y0) and the b-block at (x0 + du, y0 + dv);
// samples outside the frame replicate the nearest edge pixel.
inline std::uint32_t block_sad(const Plane& a, const Plane& b, int x0, int y0, int size, int du, int dv) {
  std::uint32_t sad = 0;
  const int bx = x0 + du, by = y0 + dv;
  const bool a_inside = x0 >= 0 && y0 >= 0 && x0 + size <= a.w && y0 + size <= a.h;
  if (a_inside && bx >= 0 && by >= 0 && bx + size <= b.w && by + size <= b.h) {
    for (int y = 0; y < size; ++y) {
      const std::uint8_t* ra = &a.px[static_cast<std::size_t>(y0 + y) * a.w + x0];
      const std::uint8_t* rb = &b.px[static_cast<std::size_t>(by + y) * b.w + bx];
      for (int x = 0; x < size; ++x) sad += static_cast<std::uint32_t>(std::abs(ra[x] - rb[x]));
    }
    return sad;
  }
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      sad += static_cast<std::uint32_t>(
          std::abs(a.at_clamped(x0 + x, y0 + y) - b.at_clamped(bx + x, by + y)));
  return sad;
}

struct Match {
  int u = 0;
  int v = 0;
  std::uint32_t sad = std::numeric_limits<std::uint32_t>::max();

  // Lower SAD wins; ties go to smaller |u|+|v|, then smaller u, then smaller v.
  bool worse_than(int cu, int cv, std::uint32_t csad) const noexcept {
    if (csad != sad) return csad < sad;
    const int m = std::abs(u) + std::abs(v), cm = std::abs(cu) + std::abs(cv);
    if (cm != m) return cm < m;
    if (cu != u) return cu < u;
    return cv < v;
  }
};

inline Match search_block(const Plane& a, const Plane& b, int x0, int y0, int size, int cu, int cv, int radius) {
  Match best;
  for (int dv = cv - radius; dv <= cv + radius; ++dv) {
    for (int du = cu - radius; du <= cu + radius; ++du) {
      const std::uint32_t sad = block_sad(a, b, x0, y0, size, du, dv);
      if (best.worse_than(du, dv, sad)) best = {du, dv, sad};
    }
  }
  return best;
}

inline Plane luma_plane(const Frame& f) { return Plane{f.width, f.height, f.luma}; }

}  // namespace detail

/// Number of pyramid levels actually used for a frame of this size.
inline int effective_levels(int width, int height, const FlowParams& p) {
  int levels = std::max(1, p.levels);
  while (levels > 1 && (std::min(width, height) >> (levels - 1)) < 32) --levels;
  return levels;
}

inline FlowField estimate_flow(const Frame& a, const Frame& b, const FlowParams& p = {}) {
  if (a.width != b.width || a.height != b.height) throw input_error("estimate_flow: frame dimensions differ");
  if (p.block < 1 || std::min(a.width, a.height) < p.block)
    throw input_error("estimate_flow: frame smaller than one block");
  if (p.search_coarse < 0 || p.search_refine < 0) throw input_error("estimate_flow: negative search radius");

  const int levels = effective_levels(a.width, a.height, p);
  std::vector<detail::Plane> pa{detail::luma_plane(a)}, pb{detail::luma_plane(b)};
  for (int l = 1; l < levels; ++l) {
    pa.push_back(detail::half_size(pa.back()));
    pb.push_back(detail::half_size(pb.back()));
  }

  FlowField field = FlowField::zeros(a.width, a.height, p.block);
  std::vector<int> u(field.size(), 0), v(field.size(), 0);
  std::vector<std::uint32_t> sad(field.size(), 0);

  // Every level matches block x block windows centred on the scaled block
  // centre, so coarse levels see more context rather than fewer pixels.
  for (int l = levels - 1; l >= 0; --l) {
    const int size = p.block;
    const bool coarsest = l == levels - 1;
    const int radius = coarsest ? p.search_coarse : p.search_refine;
    for (std::size_t idx = 0; idx < field.size(); ++idx) {
      const int i = static_cast<int>(idx % field.grid_w), j = static_cast<int>(idx / field.grid_w);
      const int x0 = ((2 * i + 1) * p.block >> (l + 1)) - p.block / 2;
      const int y0 = ((2 * j + 1) * p.block >> (l + 1)) - p.block / 2;
      const int cu = coarsest ? 0 : 2 * u[idx], cv = coarsest ? 0 : 2 * v[idx];
      const auto m = detail::search_block(pa[l], pb[l], x0, y0, size, cu, cv, radius);
      u[idx] = m.u;
      v[idx] = m.v;
      sad[idx] = m.sad;
    }
  }

  const double area = static_cast<double>(p.block) * p.block;
  for (std::size_t idx = 0; idx < field.size(); ++idx) {
    field.u[idx] = u[idx];
    field.v[idx] = v[idx];
    field.cost[idx] = sad[idx] / area;
  }
  return field;
}

inline double mean_magnitude(const FlowField& f, const std::vector<std::size_t>& blocks) {
  if (blocks.empty()) return 0.0;
  double sum = 0.0;
  for (auto idx : blocks) sum += std::hypot(f.u[idx], f.v[idx]);
  return sum / static_cast<double>(blocks.size());
}

inline double mean_magnitude(const FlowField& f) {
  if (f.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += std::hypot(f.u[i], f.v[i]);
  return sum / static_cast<double>(f.size());
}

/// Mean absolute luma difference per pixel between each a-block and the
/// b-block displaced by its (rounded) flow vector, clamped to bounds.
inline double warp_residual(const Frame& a, const Frame& b, const FlowField& f, bool interior_only = false) {
  if (a.width != b.width || a.height != b.height || a.width != f.width || a.height != f.height)
    throw input_error("warp_residual: dimension mismatch");
  const auto pa = detail::luma_plane(a), pb = detail::luma_plane(b);
  std::vector<std::size_t> blocks;
  if (interior_only) {
    blocks = interior_blocks(f);
  } else {
    blocks.resize(f.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] = i;
  }
  if (blocks.empty()) return 0.0;
  double total = 0.0;
  for (auto idx : blocks) {
    const int x0 = static_cast<int>(idx % f.grid_w) * f.block, y0 = static_cast<int>(idx / f.grid_w) * f.block;
    total += detail::block_sad(pa, pb, x0, y0, f.block, static_cast<int>(std::lround(f.u[idx])),
                               static_cast<int>(std::lround(f.v[idx])));
  }
  return total / (static_cast<double>(blocks.size()) * f.block * f.block);
}

inline nlohmann::json flow_to_json(const FlowField& f) {
  return {{"width", f.width}, {"height", f.height}, {"block", f.block}, {"grid_w", f.grid_w},
          {"grid_h", f.grid_h}, {"u", f.u}, {"v", f.v}, {"cost", f.cost}};
}

}  // namespace dive
