#pragma once

#include <algorithm>
#include <array>
#include <cstdint>

#include "dive/frame_io.hpp"

namespace dive {

/// 32-bin luma histogram (8 levels per bin).
struct LumaHistogram {
  std::array<std::uint32_t, 32> bins{};
  std::uint32_t total = 0;

  void add(std::uint8_t luma) noexcept {
    ++bins[luma >> 3];
    ++total;
  }
};

inline LumaHistogram frame_histogram(const Frame& f) {
  LumaHistogram h;
  for (auto l : f.luma) h.add(l);
  return h;
}

/// Histogram of the size x size region at (x0, y0); out-of-frame samples
/// replicate the nearest edge pixel.
inline LumaHistogram region_histogram(const Frame& f, int x0, int y0, int size) {
  LumaHistogram h;
  for (int y = y0; y < y0 + size; ++y) {
    const int cy = std::clamp(y, 0, f.height - 1);
    for (int x = x0; x < x0 + size; ++x) h.add(f.luma_at(std::clamp(x, 0, f.width - 1), cy));
  }
  return h;
}

/// Normalized intersection sum_b min(p_b, q_b) of the two normalized histograms, in [0, 1].
inline double histogram_intersection(const LumaHistogram& a, const LumaHistogram& b) {
  if (a.total == 0 || b.total == 0) return a.total == b.total ? 1.0 : 0.0;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.bins.size(); ++i)
    sum += std::min(std::uint64_t{a.bins[i]} * b.total, std::uint64_t{b.bins[i]} * a.total);
  return static_cast<double>(sum) / (static_cast<double>(a.total) * b.total);
}

}  // namespace dive
