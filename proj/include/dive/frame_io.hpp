#pragma once

// Frame sequences on disk: `<dir>/frame_%05d.{png,ppm}` plus an optional
// `meta.json` {width, height, fps, count}. This is the only place that reads
// or writes pixel files.

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dive/detail/json_util.hpp"
#include "dive/error.hpp"

namespace dive {

namespace fs = std::filesystem;

/// Rec.601 luma, rounded half-up: round(0.299 R + 0.587 G + 0.114 B).
constexpr std::uint8_t luma_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;   // row-major RGB triplets
  std::vector<std::uint8_t> luma;  // row-major, derived from rgb

  static Frame from_rgb(int width, int height, std::vector<std::uint8_t> rgb) {
    if (width <= 0 || height <= 0) throw input_error("frame dimensions must be positive");
    if (rgb.size() != 3u * static_cast<std::size_t>(width) * height)
      throw input_error("rgb buffer size does not match frame dimensions");
    Frame f;
    f.width = width;
    f.height = height;
    f.rgb = std::move(rgb);
    f.update_luma();
    return f;
  }

  static Frame from_gray(int width, int height, const std::vector<std::uint8_t>& gray) {
    std::vector<std::uint8_t> rgb(gray.size() * 3);
    for (std::size_t i = 0; i < gray.size(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = gray[i];
    return from_rgb(width, height, std::move(rgb));
  }

  static Frame filled(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::vector<std::uint8_t> rgb(3u * static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
      rgb[i] = r;
      rgb[i + 1] = g;
      rgb[i + 2] = b;
    }
    return from_rgb(width, height, std::move(rgb));
  }

  void update_luma() {
    luma.resize(static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < luma.size(); ++i)
      luma[i] = luma_of(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  }

  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  std::uint8_t luma_at(int x, int y) const { return luma[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Frame&) const = default;
};

struct FrameSequence {
  std::vector<Frame> frames;
  double fps = 8.0;
  fs::path source;
  std::string item_id;

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  std::size_t size() const noexcept { return frames.size(); }
  double diagonal() const { return std::hypot(double(width()), double(height())); }
};

enum class LoadErrorKind { MissingDirectory, NoFrames, DimensionMismatch, Decode };

class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, fs::path file, const std::string& what)
      : Error(ErrorKind::Input, what), kind_(kind), file_(std::move(file)) {}
  LoadErrorKind load_kind() const noexcept { return kind_; }
  const fs::path& file() const noexcept { return file_; }

 private:
  LoadErrorKind kind_;
  fs::path file_;
};

// ---------------------------------------------------------------------------
// Image codecs

namespace detail {

inline bool ppm_skip_space(const std::string& data, std::size_t& pos) {
  while (pos < data.size()) {
    const char c = data[pos];
    if (c == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++pos;
    } else {
      return true;
    }
  }
  return false;
}

inline std::optional<int> ppm_read_int(const std::string& data, std::size_t& pos) {
  if (!ppm_skip_space(data, pos)) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(data.data() + pos, data.data() + data.size(), value);
  if (ec != std::errc() || ptr == data.data() + pos) return std::nullopt;
  pos = static_cast<std::size_t>(ptr - data.data());
  return value;
}

}  // namespace detail

inline Frame read_ppm(const fs::path& path) {
  auto fail = [&](const std::string& why) {
    return LoadError(LoadErrorKind::Decode, path, path.string() + ": " + why);
  };
  std::string data;
  try {
    data = detail::read_text_file(path);
  } catch (const Error&) {
    throw fail("cannot open");
  }
  if (data.size() < 2 || data[0] != 'P' || data[1] != '6') throw fail("not a binary PPM (P6)");
  std::size_t pos = 2;
  auto w = detail::ppm_read_int(data, pos);
  auto h = detail::ppm_read_int(data, pos);
  auto maxval = detail::ppm_read_int(data, pos);
  if (!w || !h || !maxval || *w <= 0 || *h <= 0) throw fail("bad header");
  if (*maxval != 255) throw fail("only maxval 255 is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t need = 3u * static_cast<std::size_t>(*w) * *h;
  if (data.size() < pos + need) throw fail("truncated raster");
  std::vector<std::uint8_t> rgb(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                data.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return Frame::from_rgb(*w, *h, std::move(rgb));
}

inline void write_ppm(const Frame& frame, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("cannot write " + path.string());
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.rgb.data()), static_cast<std::streamsize>(frame.rgb.size()));
  if (!out) throw input_error("write failed for " + path.string());
}

inline Frame read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw LoadError(LoadErrorKind::Decode, path, path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw LoadError(LoadErrorKind::Decode, path, path.string() + ": " + msg);
  }
  return Frame::from_rgb(static_cast<int>(image.width), static_cast<int>(image.height), std::move(rgb));
}

inline void write_png(const Frame& frame, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, frame.rgb.data(), 0, nullptr))
    throw input_error("cannot write " + path.string() + ": " + image.message);
}

enum class ImageFormat { Png, Ppm };

inline Frame read_image(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path);
  if (ext == ".ppm" || ext == ".PPM") return read_ppm(path);
  throw LoadError(LoadErrorKind::Decode, path, path.string() + ": unsupported image extension");
}

inline void write_image(const Frame& frame, const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return write_png(frame, path);
  if (ext == ".ppm") return write_ppm(frame, path);
  throw input_error(path.string() + ": unsupported image extension");
}

// ---------------------------------------------------------------------------
// Sequences

inline constexpr double kDefaultFps = 8.0;

inline std::string frame_file_name(std::size_t index, ImageFormat format) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.%s", index, format == ImageFormat::Png ? "png" : "ppm");
  return buf;
}

namespace detail {

// Parses `frame_<digits>.png|ppm`; returns the index.
inline std::optional<long> frame_index(const std::string& name) {
  constexpr std::string_view prefix = "frame_";
  if (name.size() <= prefix.size() + 4 || name.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  const auto dot = name.rfind('.');
  if (dot == std::string::npos || dot <= prefix.size()) return std::nullopt;
  const std::string ext = name.substr(dot);
  if (ext != ".png" && ext != ".ppm") return std::nullopt;
  long index = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + dot;
  auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return index;
}

}  // namespace detail

inline FrameSequence load_sequence(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw LoadError(LoadErrorKind::MissingDirectory, dir, "missing video directory: " + dir.string());

  std::vector<std::pair<long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (auto idx = detail::frame_index(entry.path().filename().string())) files.emplace_back(*idx, entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw LoadError(LoadErrorKind::NoFrames, dir, "no frame files in " + dir.string());

  FrameSequence seq;
  seq.source = dir;
  seq.item_id = dir.filename().string();
  if (seq.item_id.empty()) seq.item_id = dir.parent_path().filename().string();
  seq.frames.reserve(files.size());
  for (const auto& [idx, path] : files) {
    Frame f = read_image(path);
    if (!seq.frames.empty() && (f.width != seq.width() || f.height != seq.height()))
      throw LoadError(LoadErrorKind::DimensionMismatch, path,
                      "dimension mismatch: " + path.string() + " is " + std::to_string(f.width) + "x" +
                          std::to_string(f.height) + ", expected " + std::to_string(seq.width()) + "x" +
                          std::to_string(seq.height()));
    seq.frames.push_back(std::move(f));
  }

  const fs::path meta = dir / "meta.json";
  if (fs::exists(meta)) {
    auto j = detail::read_json_file(meta);
    detail::check_keys(j, {"width", "height", "fps", "count"}, meta.string());
    detail::read_opt(j, "fps", seq.fps, meta.string());
    if (!(seq.fps > 0)) throw input_error(meta.string() + ": fps must be positive");
  }
  return seq;
}

inline void write_sequence(const FrameSequence& seq, const fs::path& dir, ImageFormat format = ImageFormat::Png) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw input_error("cannot create output directory " + dir.string());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto path = dir / frame_file_name(i, format);
    if (format == ImageFormat::Png)
      write_png(seq.frames[i], path);
    else
      write_ppm(seq.frames[i], path);
  }
  detail::json meta = {{"width", seq.width()}, {"height", seq.height()}, {"fps", seq.fps}, {"count", seq.size()}};
  detail::write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

/// Box-filtered integer-factor downscale so the longer side is <= max_dim.
/// Returns the input unchanged when it already fits.
inline FrameSequence downscale_for_flow(const FrameSequence& seq, int max_dim = 512) {
  if (max_dim < 32) throw input_error("max_dim must be >= 32");
  const int side = std::max(seq.width(), seq.height());
  if (side <= max_dim) return seq;
  const int factor = (side + max_dim - 1) / max_dim;
  const int w = seq.width() / factor;
  const int h = seq.height() / factor;
  const int area = factor * factor;

  FrameSequence out;
  out.fps = seq.fps;
  out.source = seq.source;
  out.item_id = seq.item_id;
  out.frames.reserve(seq.size());
  for (const Frame& src : seq.frames) {
    std::vector<std::uint8_t> rgb(3u * static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          int sum = 0;
          for (int dy = 0; dy < factor; ++dy) {
            const std::size_t row = static_cast<std::size_t>(y * factor + dy) * src.width;
            for (int dx = 0; dx < factor; ++dx) sum += src.rgb[3 * (row + x * factor + dx) + c];
          }
          rgb[3 * (static_cast<std::size_t>(y) * w + x) + c] = static_cast<std::uint8_t>((sum + area / 2) / area);
        }
      }
    }
    out.frames.push_back(Frame::from_rgb(w, h, std::move(rgb)));
  }
  return out;
}

}  // namespace dive
