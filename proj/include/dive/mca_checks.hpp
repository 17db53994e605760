#pragma once

// Self-checks for the adapter and denoiser (used by `dive mca-demo` and the tests).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "dive/diffusion.hpp"
#include "dive/mca.hpp"
#include "dive/sha256.hpp"

namespace dive::mca {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of `loss` around *param.
template <typename Loss>
double central_difference(double* param, Loss&& loss, double h = 1e-5) {
  const double saved = *param;
  *param = saved + h;
  const double up = loss();
  *param = saved - h;
  const double down = loss();
  *param = saved;
  return (up - down) / (2.0 * h);
}

inline double weighted_sum(const FeatureMatrix& a, const FeatureMatrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * w.values[i];
  return s;
}

/// Random non-zero adapter (z layers included) for gradient checks.
inline McaParams random_params(std::size_t d_m, std::size_t d_t, std::size_t hidden, std::mt19937_64& rng) {
  McaParams p = McaParams::init(d_m, d_t, rng, hidden);
  p.z_m = Linear::random(d_t, d_t, rng);
  p.z_t = Linear::random(d_t, d_t, rng);
  return p;
}

struct ZeroInitResult {
  int cases = 0;
  int exact = 0;
};

/// f_c == f_t bit for bit over random shapes with freshly initialized adapters.
inline ZeroInitResult check_zero_init_identity(std::uint64_t seed, int cases = 100) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> tok(1, 12), dim(1, 16);
  ZeroInitResult r;
  for (int c = 0; c < cases; ++c) {
    const std::size_t d_m = dim(rng), d_t = dim(rng), h = dim(rng);
    const auto f_i = random_features(tok(rng), d_m, rng, 3.0);
    const auto f_a = random_features(tok(rng), d_m, rng, 3.0);
    const auto f_t = random_features(tok(rng), d_t, rng, 3.0);
    const auto p = McaParams::init(d_m, d_t, rng, h);
    ++r.cases;
    if (mca_forward(f_i, f_a, f_t, p) == f_t) ++r.exact;
  }
  return r;
}

struct GradientCheckResult {
  int instances = 0;
  std::size_t scalars_checked = 0;
  double max_rel_error_mca = 0.0;
  double max_rel_error_denoiser = 0.0;

  double max_rel_error() const { return std::max(max_rel_error_mca, max_rel_error_denoiser); }
};

/// Analytic vs central-difference gradients for every adapter parameter and
/// input, and for every denoiser parameter and its condition input.
inline GradientCheckResult check_gradients(std::uint64_t seed, int instances = 20, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  GradientCheckResult r;
  std::uniform_int_distribution<std::size_t> small(1, 4);
  for (int inst = 0; inst < instances; ++inst) {
    ++r.instances;
    const std::size_t t_tok = 1 + small(rng) % 3, d_m = 1 + small(rng), d_t = 1 + small(rng) % 3, hid = small(rng);
    auto f_i = random_features(small(rng) + 1, d_m, rng);
    auto f_a = random_features(small(rng), d_m, rng);
    auto f_t = random_features(t_tok, d_t, rng);
    auto p = random_params(d_m, d_t, hid, rng);
    const auto up = random_features(t_tok, d_t, rng);

    const auto g = mca_backward(f_i, f_a, f_t, p, up);
    auto loss = [&] { return weighted_sum(mca_forward(f_i, f_a, f_t, p), up); };
    auto grads_copy = g.params;
    const auto params = p.parameters();
    const auto analytic = grads_copy.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      r.max_rel_error_mca = std::max(r.max_rel_error_mca, relative_error(*analytic[k], central_difference(params[k], loss, h)));
      ++r.scalars_checked;
    }
    for (auto [x, gx] : {std::pair{&f_i, &g.f_i}, std::pair{&f_a, &g.f_a}, std::pair{&f_t, &g.f_t}})
      for (std::size_t k = 0; k < x->values.size(); ++k) {
        r.max_rel_error_mca =
            std::max(r.max_rel_error_mca, relative_error(gx->values[k], central_difference(&x->values[k], loss, h)));
        ++r.scalars_checked;
      }

    // Denoiser: loss = mse(eps, D(concat(z_p, z_t), f_c)).
    const std::size_t frames = 1 + small(rng) % 2, ch = small(rng) % 3 + 1, side = 1 + small(rng) % 3;
    const auto sched = NoiseSchedule::linear();
    const auto cond = random_latent(frames, ch, side, side, rng);
    DiffusionSample s{random_latent(frames, ch, side, side, rng), 1 + rng() % 1000,
                      random_latent(frames, ch, side, side, rng), &cond};
    auto den = ToyDenoiser::random(2 * ch, ch, d_t, rng);
    ToyDenoiser::Grads dg;
    toy_batch_loss(den, {s}, f_t, sched, &dg);
    auto dloss = [&] { return toy_batch_loss(den, {s}, f_t, sched); };
    const auto dparams = den.parameters();
    std::vector<double> danalytic = dg.a;
    danalytic.insert(danalytic.end(), dg.b.begin(), dg.b.end());
    for (std::size_t k = 0; k < dparams.size(); ++k) {
      r.max_rel_error_denoiser =
          std::max(r.max_rel_error_denoiser, relative_error(danalytic[k], central_difference(dparams[k], dloss, h)));
      ++r.scalars_checked;
    }
    for (std::size_t k = 0; k < f_t.values.size(); ++k) {
      r.max_rel_error_denoiser = std::max(
          r.max_rel_error_denoiser, relative_error(dg.f_c.values[k], central_difference(&f_t.values[k], dloss, h)));
      ++r.scalars_checked;
    }
  }
  return r;
}

struct VarianceCheckResult {
  double min_variance = 0.0;
  double max_variance = 0.0;
};

/// Sample variance of q_sample output for unit-variance z0 and eps at several timesteps.
inline VarianceCheckResult check_q_sample_variance(std::uint64_t seed, std::size_t samples = 10000) {
  std::mt19937_64 rng(seed);
  const auto sched = NoiseSchedule::linear();
  VarianceCheckResult r{1e300, -1e300};
  for (std::size_t t : {1u, 10u, 250u, 500u, 750u, 1000u}) {
    const auto z0 = random_latent(1, 1, 1, samples, rng);
    const auto eps = random_latent(1, 1, 1, samples, rng);
    const auto z = q_sample(z0, t, eps, sched);
    double mean = 0.0, sq = 0.0;
    for (double v : z.values) mean += v / static_cast<double>(samples);
    for (double v : z.values) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(samples - 1);
    r.min_variance = std::min(r.min_variance, var);
    r.max_variance = std::max(r.max_variance, var);
  }
  return r;
}

struct TrainingCheckResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
  double reduction() const { return initial_loss > 0 ? 1.0 - final_loss / initial_loss : 0.0; }
};

/// Fixed synthetic batch built from the full conditioning path (pseudo video
/// from a corrupted condition frame, adapter features), toy denoiser trained
/// from zero with gradient descent.
inline TrainingCheckResult check_training(std::uint64_t seed, int steps = 200, double learning_rate = 0.5) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t F = 4, C = 3, H = 4, W = 4, d_m = 6, d_t = 4;
  const auto sched = NoiseSchedule::linear();
  const auto p = McaParams::init(d_m, d_t, rng);
  const auto f_c = mca_forward(random_features(5, d_m, rng), random_features(3, d_m, rng), random_features(2, d_t, rng), p);

  std::vector<LatentVideo> conditions;
  std::vector<DiffusionSample> batch;
  conditions.reserve(8);
  for (int i = 0; i < 8; ++i) {
    const auto video = random_latent(F, C, 2 * H, 2 * W, rng);
    const auto z0 = encode_stub(video);
    LatentVideo first = LatentVideo::zeros(1, C, H, W);
    std::copy_n(z0.values.begin(), first.size(), first.values.begin());
    conditions.push_back(build_pseudo_video(corrupt_condition_image(first, rng).image, F));
    batch.push_back({z0, 1 + rng() % sched.steps(), random_latent(F, C, H, W, rng), nullptr});
  }
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i].condition = &conditions[i];

  auto den = ToyDenoiser::zeros(2 * C, C, d_t);
  const auto history = train_toy_denoiser(den, batch, f_c, sched, steps, learning_rate);
  return {history.front(), history.back(), steps};
}

/// Seeded reference instance whose output digest is pinned in a regression fixture.
struct ReferenceInstance {
  std::size_t tokens_i = 6, tokens_a = 3, tokens_t = 4, d_m = 8, d_t = 5, hidden = 7;
  FeatureMatrix f_i, f_a, f_t;
  McaParams params;
};

inline ReferenceInstance reference_instance(std::uint64_t seed) {
  ReferenceInstance r;
  std::mt19937_64 rng(seed);
  r.f_i = random_features(r.tokens_i, r.d_m, rng);
  r.f_a = random_features(r.tokens_a, r.d_m, rng);
  r.f_t = random_features(r.tokens_t, r.d_t, rng);
  r.params = random_params(r.d_m, r.d_t, r.hidden, rng);
  return r;
}

/// SHA-256 over the %.17g text of every value, one per line.
inline std::string digest(const FeatureMatrix& m) {
  Sha256 h;
  char buf[40];
  for (double v : m.values) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g\n", v);
    h.update(buf, static_cast<std::size_t>(n));
  }
  return h.hex();
}

}  // namespace dive::mca
