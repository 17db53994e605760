#pragma once

// Robust 4-parameter similarity fit to a block flow field:
//   du = tx + (k-1) x - theta y
//   dv = ty + theta x + (k-1) y
// with (x, y) block centres relative to the frame centre.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "dive/flow.hpp"

namespace dive {

struct TrimParams {
  double median_factor = 2.0;
  double floor_px = 0.5;
  int passes = 2;
};

struct GlobalMotion {
  double tx = 0.0;
  double ty = 0.0;
  double k = 1.0;
  double theta = 0.0;
  double residual_rms = 0.0;  // over the final inlier set
  double inlier_frac = 0.0;   // final inliers / blocks offered
  bool reliable = false;

  double predicted_u(double x, double y) const noexcept { return tx + (k - 1.0) * x - theta * y; }
  double predicted_v(double x, double y) const noexcept { return ty + theta * x + (k - 1.0) * y; }
};

namespace detail {

// Least squares on the normal equations; nullopt when the system is singular.
inline std::optional<std::array<double, 4>> solve_similarity(const FlowField& f,
                                                             const std::vector<std::size_t>& blocks) {
  if (blocks.size() < 2) return std::nullopt;
  std::array<std::array<double, 5>, 4> m{};  // augmented [AtA | Atb]
  for (auto idx : blocks) {
    const double x = f.center_x(idx), y = f.center_y(idx);
    const std::array<double, 4> ru{1, 0, x, -y}, rv{0, 1, y, x};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m[r][c] += ru[r] * ru[c] + rv[r] * rv[c];
      m[r][4] += ru[r] * f.u[idx] + rv[r] * f.v[idx];
    }
  }
  double scale = 0.0;
  for (int r = 0; r < 4; ++r) scale = std::max(scale, std::abs(m[r][r]));
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    if (std::abs(m[pivot][col]) <= 1e-12 * scale) return std::nullopt;
    std::swap(m[col], m[pivot]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double factor = m[r][col] / m[col][col];
      for (int c = col; c < 5; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  return std::array<double, 4>{m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2], m[3][4] / m[3][3]};
}

inline double block_residual(const FlowField& f, std::size_t idx, const GlobalMotion& g) {
  const double x = f.center_x(idx), y = f.center_y(idx);
  return std::hypot(f.u[idx] - g.predicted_u(x, y), f.v[idx] - g.predicted_v(x, y));
}

}  // namespace detail

/// Fits over `blocks` (all blocks when empty). Degenerate systems come back
/// with reliable == false rather than throwing.
inline GlobalMotion fit_global_motion(const FlowField& f, const std::vector<std::size_t>& blocks = {},
                                      const TrimParams& trim = {}) {
  std::vector<std::size_t> active = blocks;
  if (active.empty()) {
    active.resize(f.size());
    for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  }
  const std::size_t offered = active.size();
  GlobalMotion g;
  if (offered < 8) return g;

  auto apply = [&](const std::array<double, 4>& p) {
    g.tx = p[0];
    g.ty = p[1];
    g.k = 1.0 + p[2];
    g.theta = p[3];
  };
  auto sol = detail::solve_similarity(f, active);
  if (!sol) return g;
  apply(*sol);
  g.reliable = true;

  for (int pass = 0; pass < trim.passes; ++pass) {
    std::vector<double> res(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) res[i] = detail::block_residual(f, active[i], g);
    std::vector<double> sorted = res;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    double median = sorted[sorted.size() / 2];
    if (sorted.size() % 2 == 0) {
      const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2));
      median = 0.5 * (median + lower);
    }
    const double threshold = std::max(trim.median_factor * median, trim.floor_px);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < active.size(); ++i)
      if (res[i] <= threshold) kept.push_back(active[i]);
    if (kept.size() == active.size()) break;
    auto refit = detail::solve_similarity(f, kept);
    if (!refit || kept.size() < 3) {
      g.reliable = false;
      break;
    }
    active = std::move(kept);
    apply(*refit);
  }

  double sq = 0.0;
  for (auto idx : active) {
    const double r = detail::block_residual(f, idx, g);
    sq += r * r;
  }
  g.residual_rms = std::sqrt(sq / static_cast<double>(active.size()));
  g.inlier_frac = static_cast<double>(active.size()) / static_cast<double>(offered);
  return g;
}

}  // namespace dive
