#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dive/frame_io.hpp"

namespace dive::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dive_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Frame noise_frame(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::uint8_t> rgb(3u * static_cast<std::size_t>(w) * h);
  for (auto& c : rgb) c = static_cast<std::uint8_t>(d(rng));
  return Frame::from_rgb(w, h, std::move(rgb));
}

/// b(x, y) = a(x - dx, y - dy) with replicated edges: content moves by (dx, dy).
inline Frame shifted(const Frame& a, int dx, int dy) {
  std::vector<std::uint8_t> rgb(a.rgb.size());
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const int sx = std::clamp(x - dx, 0, a.width - 1), sy = std::clamp(y - dy, 0, a.height - 1);
      for (int c = 0; c < 3; ++c)
        rgb[3 * (static_cast<std::size_t>(y) * a.width + x) + c] =
            a.rgb[3 * (static_cast<std::size_t>(sy) * a.width + sx) + c];
    }
  return Frame::from_rgb(a.width, a.height, std::move(rgb));
}

}  // namespace dive::testing
