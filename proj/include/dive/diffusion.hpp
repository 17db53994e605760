#pragma once

// Latent-video plumbing around the adapter: forward noising, condition-image
// corruption, pseudo-video construction, and a small learnable denoiser with
// the epsilon-prediction loss.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dive/error.hpp"
#include "dive/frame_io.hpp"
#include "dive/mca.hpp"

namespace dive::mca {

struct LatentVideo {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // [f][c][y][x]

  static LatentVideo zeros(std::size_t f, std::size_t c, std::size_t h, std::size_t w) {
    return {f, c, h, w, std::vector<double>(f * c * h * w, 0.0)};
  }

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return values.size(); }
  std::size_t index(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((f * channels + c) * height + y) * width + x;
  }
  double& at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) { return values[index(f, c, y, x)]; }
  double at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const { return values[index(f, c, y, x)]; }
  bool same_shape(const LatentVideo& o) const {
    return frames == o.frames && channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const LatentVideo&) const = default;
};

inline LatentVideo random_latent(std::size_t f, std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  auto z = LatentVideo::zeros(f, c, h, w);
  for (auto& v : z.values) v = n(rng);
  return z;
}

// ---------------------------------------------------------------------------
// Noise schedule

struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  std::size_t steps() const noexcept { return betas.size(); }

  static NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw input_error("noise schedule: no steps");
    NoiseSchedule s;
    double prod = 1.0;
    for (double b : betas) {
      if (!(b > 0 && b < 1)) throw input_error("noise schedule: betas must lie in (0, 1)");
      prod *= 1.0 - b;
      s.alpha_bars.push_back(prod);
    }
    s.betas = std::move(betas);
    return s;
  }

  static NoiseSchedule linear(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i)
      betas[i] = steps == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(steps - 1);
    return from_betas(std::move(betas));
  }

  /// t is 1-based.
  double alpha_bar(std::size_t t) const {
    if (t < 1 || t > steps()) throw input_error("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
    return alpha_bars[t - 1];
  }
};

/// z_t = sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps.
inline LatentVideo q_sample(const LatentVideo& z0, double alpha_bar, const LatentVideo& eps) {
  if (!z0.same_shape(eps)) throw input_error("q_sample: noise shape differs from latent");
  if (!(alpha_bar >= 0 && alpha_bar <= 1)) throw input_error("q_sample: alpha_bar outside [0, 1]");
  const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
  LatentVideo z = z0;
  for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = a * z0.values[i] + s * eps.values[i];
  return z;
}

inline LatentVideo q_sample(const LatentVideo& z0, std::size_t t, const LatentVideo& eps, const NoiseSchedule& sched) {
  return q_sample(z0, sched.alpha_bar(t), eps);
}

// ---------------------------------------------------------------------------
// Condition image

inline constexpr double kConditionLogSigmaMean = -3.0;
inline constexpr double kConditionLogSigmaStd = 0.5;

struct CorruptedImage {
  LatentVideo image;
  double log_sigma = 0;
  double sigma = 0;
};

/// image + exp(log_sigma) * eps, elementwise.
inline CorruptedImage corrupt_condition_image(const LatentVideo& image, double log_sigma, const LatentVideo& eps) {
  if (!image.same_shape(eps)) throw input_error("corrupt_condition_image: noise shape differs from image");
  CorruptedImage out{image, log_sigma, std::exp(log_sigma)};
  for (std::size_t i = 0; i < image.size(); ++i) out.image.values[i] += out.sigma * eps.values[i];
  return out;
}

/// Draws log_sigma ~ N(-3, 0.5^2), then eps ~ N(0, 1) per element.
inline CorruptedImage corrupt_condition_image(const LatentVideo& image, std::mt19937_64& rng) {
  for (double v : image.values)
    if (!std::isfinite(v)) throw input_error("corrupt_condition_image: non-finite input");
  const double log_sigma = std::normal_distribution<double>(kConditionLogSigmaMean, kConditionLogSigmaStd)(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  LatentVideo eps = image;
  for (auto& v : eps.values) v = n(rng);
  return corrupt_condition_image(image, log_sigma, eps);
}

/// Frame 0 is the (single-frame) image, frames 1..F-1 are zero.
inline LatentVideo build_pseudo_video(const LatentVideo& image, std::size_t frames) {
  if (frames == 0) throw input_error("build_pseudo_video: F must be >= 1");
  if (image.frames != 1) throw input_error("build_pseudo_video: condition image must be a single frame");
  auto v = LatentVideo::zeros(frames, image.channels, image.height, image.width);
  std::copy(image.values.begin(), image.values.end(), v.values.begin());
  return v;
}

/// Channel-wise concatenation [a || b] per frame.
inline LatentVideo concat_latents(const LatentVideo& a, const LatentVideo& b) {
  if (a.frames != b.frames || a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw input_error("concat_latents: shape mismatch");
  auto out = LatentVideo::zeros(a.frames, a.channels + b.channels, a.height, a.width);
  const std::size_t chunk = a.channels * a.plane();
  for (std::size_t f = 0; f < a.frames; ++f) {
    std::copy_n(a.values.begin() + static_cast<std::ptrdiff_t>(f * chunk), chunk,
                out.values.begin() + static_cast<std::ptrdiff_t>(2 * f * chunk));
    std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(f * chunk), chunk,
                out.values.begin() + static_cast<std::ptrdiff_t>((2 * f + 1) * chunk));
  }
  return out;
}

/// Stand-in encoder: 2x2 non-overlapping patch mean per channel (odd edges dropped).
inline LatentVideo encode_stub(const LatentVideo& v) {
  if (v.height < 2 || v.width < 2) throw input_error("encode_stub: input smaller than one patch");
  auto out = LatentVideo::zeros(v.frames, v.channels, v.height / 2, v.width / 2);
  for (std::size_t f = 0; f < v.frames; ++f)
    for (std::size_t c = 0; c < v.channels; ++c)
      for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x)
          out.at(f, c, y, x) = 0.25 * (v.at(f, c, 2 * y, 2 * x) + v.at(f, c, 2 * y, 2 * x + 1) +
                                       v.at(f, c, 2 * y + 1, 2 * x) + v.at(f, c, 2 * y + 1, 2 * x + 1));
  return out;
}

/// RGB frame as a one-frame, 3-channel latent scaled to [-1, 1].
inline LatentVideo frame_to_latent(const Frame& frame) {
  auto v = LatentVideo::zeros(1, 3, static_cast<std::size_t>(frame.height), static_cast<std::size_t>(frame.width));
  for (std::size_t y = 0; y < v.height; ++y)
    for (std::size_t x = 0; x < v.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        v.at(0, c, y, x) = frame.rgb[3 * (y * v.width + x) + c] / 127.5 - 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Denoiser and loss

/// (z_in, t, f_c) -> predicted noise with z0's shape.
using Denoiser = std::function<LatentVideo(const LatentVideo&, std::size_t, const FeatureMatrix&)>;

inline FeatureMatrix token_mean(const FeatureMatrix& f) {
  auto m = FeatureMatrix::zeros(1, f.dim);
  for (std::size_t t = 0; t < f.tokens; ++t)
    for (std::size_t d = 0; d < f.dim; ++d) m.at(0, d) += f.at(t, d) / static_cast<double>(f.tokens);
  return m;
}

/// eps_hat[c] = sum_c' A[c][c'] z_in[c'] + sum_d B[c][d] mean_t(f_c)[d], per pixel.
struct ToyDenoiser {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t cond_dim = 0;
  std::vector<double> a;  // out x in
  std::vector<double> b;  // out x cond_dim

  static ToyDenoiser zeros(std::size_t in_channels, std::size_t out_channels, std::size_t cond_dim) {
    return {in_channels, out_channels, cond_dim, std::vector<double>(out_channels * in_channels, 0.0),
            std::vector<double>(out_channels * cond_dim, 0.0)};
  }

  static ToyDenoiser random(std::size_t in_channels, std::size_t out_channels, std::size_t cond_dim,
                            std::mt19937_64& rng, double sd = 0.3) {
    auto d = zeros(in_channels, out_channels, cond_dim);
    std::normal_distribution<double> n(0.0, sd);
    for (auto& v : d.a) v = n(rng);
    for (auto& v : d.b) v = n(rng);
    return d;
  }

  LatentVideo operator()(const LatentVideo& z_in, std::size_t /*t*/, const FeatureMatrix& f_c) const {
    if (z_in.channels != in_channels) throw input_error("toy denoiser: input channel count mismatch");
    if (f_c.dim != cond_dim) throw input_error("toy denoiser: condition width mismatch");
    const FeatureMatrix pooled = token_mean(f_c);
    auto out = LatentVideo::zeros(z_in.frames, out_channels, z_in.height, z_in.width);
    const std::size_t plane = z_in.plane();
    for (std::size_t f = 0; f < z_in.frames; ++f)
      for (std::size_t c = 0; c < out_channels; ++c) {
        double bias = 0.0;
        for (std::size_t d = 0; d < cond_dim; ++d) bias += b[c * cond_dim + d] * pooled.at(0, d);
        double* dst = &out.values[out.index(f, c, 0, 0)];
        for (std::size_t p = 0; p < plane; ++p) dst[p] = bias;
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
          const double w = a[c * in_channels + ci];
          const double* src = &z_in.values[z_in.index(f, ci, 0, 0)];
          for (std::size_t p = 0; p < plane; ++p) dst[p] += w * src[p];
        }
      }
    return out;
  }

  struct Grads {
    std::vector<double> a, b;
    FeatureMatrix f_c;
  };

  /// Gradients of sum(d_out * eps_hat) w.r.t. A, B and f_c.
  Grads backward(const LatentVideo& z_in, const FeatureMatrix& f_c, const LatentVideo& d_out) const {
    Grads g{std::vector<double>(a.size(), 0.0), std::vector<double>(b.size(), 0.0), FeatureMatrix::zeros(f_c.tokens, f_c.dim)};
    const FeatureMatrix pooled = token_mean(f_c);
    const std::size_t plane = z_in.plane();
    std::vector<double> d_pooled(cond_dim, 0.0);
    for (std::size_t f = 0; f < z_in.frames; ++f)
      for (std::size_t c = 0; c < out_channels; ++c) {
        const double* go = &d_out.values[d_out.index(f, c, 0, 0)];
        double gsum = 0.0;
        for (std::size_t p = 0; p < plane; ++p) gsum += go[p];
        for (std::size_t d = 0; d < cond_dim; ++d) {
          g.b[c * cond_dim + d] += gsum * pooled.at(0, d);
          d_pooled[d] += gsum * b[c * cond_dim + d];
        }
        for (std::size_t ci = 0; ci < in_channels; ++ci) {
          const double* src = &z_in.values[z_in.index(f, ci, 0, 0)];
          double s = 0.0;
          for (std::size_t p = 0; p < plane; ++p) s += go[p] * src[p];
          g.a[c * in_channels + ci] += s;
        }
      }
    for (std::size_t t = 0; t < f_c.tokens; ++t)
      for (std::size_t d = 0; d < cond_dim; ++d) g.f_c.at(t, d) = d_pooled[d] / static_cast<double>(f_c.tokens);
    return g;
  }

  std::vector<double*> parameters() {
    std::vector<double*> out;
    for (auto& v : a) out.push_back(&v);
    for (auto& v : b) out.push_back(&v);
    return out;
  }
};

/// mean((eps - eps_hat)^2) and dL/d eps_hat.
inline double mse(const LatentVideo& eps, const LatentVideo& eps_hat, LatentVideo* grad = nullptr) {
  if (!eps.same_shape(eps_hat)) throw input_error("denoiser output shape differs from the noise");
  const double n = static_cast<double>(eps.size());
  double sum = 0.0;
  if (grad) *grad = eps_hat;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double r = eps_hat.values[i] - eps.values[i];
    sum += r * r;
    if (grad) grad->values[i] = 2.0 * r / n;
  }
  return sum / n;
}

/// One training example with its noise fixed, so the loss is a deterministic function of the parameters.
struct DiffusionSample {
  LatentVideo z0;
  std::size_t t = 1;
  LatentVideo eps;
  const LatentVideo* condition = nullptr;  // z_p, concatenated in front of z_t when set
};

inline LatentVideo denoiser_input(const DiffusionSample& s, const NoiseSchedule& sched) {
  LatentVideo z_t = q_sample(s.z0, s.t, s.eps, sched);
  return s.condition ? concat_latents(*s.condition, z_t) : z_t;
}

/// Noise-prediction loss for a given sample.
inline double diffusion_loss(const DiffusionSample& s, const FeatureMatrix& f_c, const Denoiser& denoiser,
                             const NoiseSchedule& sched) {
  return mse(s.eps, denoiser(denoiser_input(s, sched), s.t, f_c));
}

/// Draws eps ~ N(0, I) from `rng`, then evaluates the loss.
inline double diffusion_loss(const LatentVideo& z0, std::size_t t, const FeatureMatrix& f_c, const Denoiser& denoiser,
                             std::mt19937_64& rng, const NoiseSchedule& sched, const LatentVideo* condition = nullptr) {
  std::normal_distribution<double> n(0.0, 1.0);
  DiffusionSample s{z0, t, z0, condition};
  for (auto& v : s.eps.values) v = n(rng);
  return diffusion_loss(s, f_c, denoiser, sched);
}

/// Mean loss over the batch; accumulates parameter gradients when `grad` is set.
inline double toy_batch_loss(const ToyDenoiser& d, const std::vector<DiffusionSample>& batch, const FeatureMatrix& f_c,
                             const NoiseSchedule& sched, ToyDenoiser::Grads* grad = nullptr) {
  if (batch.empty()) throw input_error("training batch is empty");
  if (grad) *grad = {std::vector<double>(d.a.size(), 0.0), std::vector<double>(d.b.size(), 0.0), FeatureMatrix::zeros(f_c.tokens, f_c.dim)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    const LatentVideo z_in = denoiser_input(s, sched);
    LatentVideo g;
    total += mse(s.eps, d(z_in, s.t, f_c), grad ? &g : nullptr) * scale;
    if (grad) {
      for (auto& v : g.values) v *= scale;
      const auto part = d.backward(z_in, f_c, g);
      for (std::size_t i = 0; i < part.a.size(); ++i) grad->a[i] += part.a[i];
      for (std::size_t i = 0; i < part.b.size(); ++i) grad->b[i] += part.b[i];
      for (std::size_t i = 0; i < part.f_c.values.size(); ++i) grad->f_c.values[i] += part.f_c.values[i];
    }
  }
  return total;
}

/// Plain gradient descent on A and B; returns the loss before each step plus the final loss.
inline std::vector<double> train_toy_denoiser(ToyDenoiser& d, const std::vector<DiffusionSample>& batch,
                                              const FeatureMatrix& f_c, const NoiseSchedule& sched, int steps,
                                              double learning_rate) {
  std::vector<double> history;
  for (int step = 0; step < steps; ++step) {
    ToyDenoiser::Grads g;
    history.push_back(toy_batch_loss(d, batch, f_c, sched, &g));
    for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] -= learning_rate * g.a[i];
    for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] -= learning_rate * g.b[i];
  }
  history.push_back(toy_batch_loss(d, batch, f_c, sched));
  return history;
}

}  // namespace dive::mca
