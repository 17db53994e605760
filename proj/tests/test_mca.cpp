#include <gtest/gtest.h>

#include <numeric>

#include "dive/detail/json_util.hpp"
#include "dive/mca_checks.hpp"

namespace dive::mca {
namespace {

FeatureMatrix scalar(double v) { return {1, 1, {v}}; }

Linear scalar_linear(double w, double b) { return {1, 1, {w}, {b}}; }

TEST(McaForward, ScalarWalkThrough) {
  // Hand walk-through: M(1) = 1*gelu(1*1 + 0) + 0 for both MLPs, Z_m = Z_t = identity.
  const double gelu1 = 0.5 * 1.0 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  const double expected = (gelu1 + gelu1) + (0.5 + 0.5);
  EXPECT_NEAR(gelu1, 0.841345, 1e-6);
  EXPECT_NEAR(expected, 2.682690, 1e-6);

  McaParams p;
  p.m_i = {scalar_linear(1, 0), scalar_linear(1, 0)};
  p.m_a = p.m_i;
  p.z_m = scalar_linear(1, 0);
  p.z_t = scalar_linear(1, 0);
  const auto f_c = mca_forward(scalar(1), scalar(1), scalar(0.5), p);
  EXPECT_NEAR(f_c.values[0], 2.682690, 1e-6);
  EXPECT_NEAR(f_c.values[0], expected, 1e-15);
}

TEST(McaForward, ZeroInitIsBitwiseIdentity) {
  std::mt19937_64 rng(1);
  const auto f_t = random_features(3, 4, rng);
  const auto p = McaParams::init(5, 4, rng);
  EXPECT_EQ(mca_forward(random_features(7, 5, rng), random_features(2, 5, rng), f_t, p), f_t);
  const auto r = check_zero_init_identity(2024, 100);
  EXPECT_EQ(r.cases, 100);
  EXPECT_EQ(r.exact, 100);
}

TEST(McaForward, ZeroInitWeightsAreExactlyZero) {
  std::mt19937_64 rng(3);
  const auto p = McaParams::init(4, 3, rng);
  for (const Linear* l : {&p.z_m, &p.z_t}) {
    for (double v : l->w) EXPECT_EQ(v, 0.0);
    for (double v : l->b) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(p.m_i.l1.out, 3u);  // hidden width defaults to d_t
}

TEST(AdaptivePool, Buckets) {
  const FeatureMatrix x{4, 1, {1, 3, 5, 9}};
  EXPECT_EQ(adaptive_mean_pool(x, 2).values, (std::vector<double>{2, 7}));
  const FeatureMatrix y{5, 1, {1, 2, 3, 4, 5}};
  EXPECT_EQ(adaptive_mean_pool(y, 2).values, (std::vector<double>{2, 4}));  // [0,3) and [2,5)
  const FeatureMatrix z{2, 1, {1, 3}};
  EXPECT_EQ(adaptive_mean_pool(z, 4).values, (std::vector<double>{1, 1, 3, 3}));
  EXPECT_EQ(adaptive_mean_pool(x, 4), x);
  EXPECT_THROW(adaptive_mean_pool(x, 0), Error);
}

TEST(McaForward, ShapeErrors) {
  std::mt19937_64 rng(4);
  const auto p = McaParams::init(5, 4, rng);
  EXPECT_THROW(mca_forward(random_features(2, 6, rng), random_features(2, 5, rng), random_features(2, 4, rng), p), Error);
  EXPECT_THROW(mca_forward(random_features(2, 5, rng), random_features(2, 5, rng), random_features(2, 3, rng), p), Error);
  EXPECT_THROW(mca_forward(FeatureMatrix::zeros(0, 5), random_features(2, 5, rng), random_features(2, 4, rng), p), Error);
}

TEST(McaBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(5);
  const auto f_i = random_features(3, 4, rng), f_a = random_features(2, 4, rng), f_t = random_features(2, 3, rng);
  auto p = random_params(4, 3, 5, rng);
  auto g = mca_backward(f_i, f_a, f_t, p, FeatureMatrix::zeros(2, 3));
  for (double* v : g.params.parameters()) EXPECT_EQ(*v, 0.0);
  for (const auto* m : {&g.f_i, &g.f_a, &g.f_t})
    for (double v : m->values) EXPECT_EQ(v, 0.0);
}

TEST(McaBackward, TextGradientAtZeroInitIsUpstream) {
  std::mt19937_64 rng(6);
  const auto f_t = random_features(3, 4, rng);
  const auto p = McaParams::init(2, 4, rng);
  const auto up = random_features(3, 4, rng);
  const auto g = mca_backward(random_features(5, 2, rng), random_features(1, 2, rng), f_t, p, up);
  EXPECT_EQ(g.f_t, up);
  for (double v : g.f_i.values) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(mca_backward(random_features(5, 2, rng), random_features(1, 2, rng), f_t, p, FeatureMatrix::zeros(2, 4)),
               Error);
}

TEST(GradientCheck, AllParametersMatchCentralDifferences) {
  const auto r = check_gradients(7, 20);
  EXPECT_EQ(r.instances, 20);
  EXPECT_GT(r.scalars_checked, 1000u);
  EXPECT_LT(r.max_rel_error_mca, 1e-4);
  EXPECT_LT(r.max_rel_error_denoiser, 1e-4);
}

TEST(GradientCheck, GeluDerivative) {
  for (double x = -4; x <= 4; x += 0.37) {
    const double numeric = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
    EXPECT_LT(relative_error(gelu_grad(x), numeric), 1e-7) << x;
  }
}

TEST(ConditionImage, FixedLogSigma) {
  auto zero = LatentVideo::zeros(1, 2, 2, 2);
  LatentVideo eps = zero;
  std::iota(eps.values.begin(), eps.values.end(), -3.0);
  const auto c = corrupt_condition_image(zero, -3.0, eps);
  EXPECT_NEAR(c.sigma, 0.049787, 1e-6);
  EXPECT_EQ(c.sigma, std::exp(-3.0));
  for (std::size_t i = 0; i < eps.size(); ++i) EXPECT_EQ(c.image.values[i], c.sigma * eps.values[i]);
}

TEST(ConditionImage, LogSigmaDistribution) {
  std::mt19937_64 rng(99);
  const auto img = LatentVideo::zeros(1, 1, 1, 1);
  const int n = 100000;
  double sum = 0, sq = 0;
  std::vector<double> draws;
  for (int i = 0; i < n; ++i) {
    const auto c = corrupt_condition_image(img, rng);
    EXPECT_DOUBLE_EQ(c.sigma, std::exp(c.log_sigma));
    sum += c.log_sigma;
    draws.push_back(c.log_sigma);
  }
  const double mean = sum / n;
  for (double d : draws) sq += (d - mean) * (d - mean);
  EXPECT_NEAR(mean, -3.0, 0.01);
  EXPECT_NEAR(std::sqrt(sq / (n - 1)), 0.5, 0.01);
}

TEST(PseudoVideo, FirstFrameThenZeros) {
  std::mt19937_64 rng(8);
  const auto img = random_latent(1, 3, 4, 4, rng);
  const auto v = build_pseudo_video(img, 49);
  EXPECT_EQ(v.frames, 49u);
  double total = 0, img_total = 0;
  for (std::size_t f = 0; f < 49; ++f)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
          if (f == 0) EXPECT_EQ(v.at(f, c, y, x), img.at(0, c, y, x));
          else EXPECT_EQ(v.at(f, c, y, x), 0.0);
          total += v.at(f, c, y, x);
        }
  for (double x : img.values) img_total += x;
  EXPECT_EQ(total, img_total);
  EXPECT_EQ(build_pseudo_video(img, 1), img);
  EXPECT_THROW(build_pseudo_video(img, 0), Error);
}

TEST(ConcatLatents, ChannelsStack) {
  std::mt19937_64 rng(9);
  const auto a = random_latent(3, 2, 2, 3, rng), b = random_latent(3, 2, 2, 3, rng);
  const auto z = concat_latents(a, b);
  EXPECT_EQ(z.channels, 4u);
  EXPECT_EQ(z.frames, 3u);
  EXPECT_EQ(z.height, 2u);
  EXPECT_EQ(z.width, 3u);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
          EXPECT_EQ(z.at(f, c, y, x), a.at(f, c, y, x));
          EXPECT_EQ(z.at(f, c + 2, y, x), b.at(f, c, y, x));
        }
  EXPECT_THROW(concat_latents(a, random_latent(2, 2, 2, 3, rng)), Error);
}

TEST(EncodeStub, PatchMeans) {
  LatentVideo v = LatentVideo::zeros(1, 1, 2, 4);
  v.values = {1, 3, 5, 7, 1, 3, 5, 7};
  EXPECT_EQ(encode_stub(v).values, (std::vector<double>{2, 6}));
}

TEST(NoiseSchedule, LinearDefaults) {
  const auto s = NoiseSchedule::linear();
  ASSERT_EQ(s.steps(), 1000u);
  EXPECT_DOUBLE_EQ(s.betas.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.betas.back(), 0.02);
  EXPECT_LE(s.alpha_bars.front(), 1.0);
  for (std::size_t i = 1; i < s.steps(); ++i) EXPECT_LT(s.alpha_bars[i], s.alpha_bars[i - 1]);
  EXPECT_GT(s.alpha_bars.back(), 0.0);
  EXPECT_THROW(s.alpha_bar(0), Error);
  EXPECT_THROW(s.alpha_bar(1001), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), Error);
}

TEST(QSample, EndpointsAndVariance) {
  std::mt19937_64 rng(10);
  const auto z0 = random_latent(2, 2, 3, 3, rng), eps = random_latent(2, 2, 3, 3, rng);
  EXPECT_EQ(q_sample(z0, 1.0, eps), z0);
  EXPECT_EQ(q_sample(z0, 0.0, eps), eps);
  const auto v = check_q_sample_variance(11);
  EXPECT_NEAR(v.min_variance, 1.0, 0.05);
  EXPECT_NEAR(v.max_variance, 1.0, 0.05);
  EXPECT_THROW(q_sample(z0, 0, eps, NoiseSchedule::linear()), Error);
}

TEST(DiffusionLoss, OracleAndZeroDenoisers) {
  std::mt19937_64 rng(12);
  const auto sched = NoiseSchedule::linear();
  const auto f_c = random_features(2, 3, rng);
  DiffusionSample s{random_latent(2, 2, 4, 4, rng), 500, random_latent(2, 2, 4, 4, rng), nullptr};
  const LatentVideo eps = s.eps;
  const Denoiser oracle = [&](const LatentVideo&, std::size_t, const FeatureMatrix&) { return eps; };
  EXPECT_EQ(diffusion_loss(s, f_c, oracle, sched), 0.0);

  const auto big = random_latent(1, 1, 100, 100, rng);
  const Denoiser zero = [](const LatentVideo& z, std::size_t, const FeatureMatrix&) {
    return LatentVideo::zeros(z.frames, z.channels, z.height, z.width);
  };
  EXPECT_NEAR(diffusion_loss(big, 300, f_c, zero, rng, sched), 1.0, 0.05);

  const Denoiser wrong = [](const LatentVideo&, std::size_t, const FeatureMatrix&) { return LatentVideo::zeros(1, 1, 1, 1); };
  EXPECT_THROW(diffusion_loss(s, f_c, wrong, sched), Error);
}

TEST(DiffusionLoss, ToyDenoiserTrainingReducesLoss) {
  const auto r = check_training(13);
  EXPECT_EQ(r.steps, 200);
  EXPECT_GT(r.initial_loss, 0.5);
  EXPECT_GE(r.reduction(), 0.30) << r.initial_loss << " -> " << r.final_loss;
}

TEST(ReferenceFixture, DigestIsPinned) {
  const auto fixture = detail::read_json_file(std::filesystem::path(DIVE_TEST_DATA_DIR) / "mca_reference.json");
  const auto inst = reference_instance(fixture.at("seed").get<std::uint64_t>());
  EXPECT_EQ(fixture.at("f_c_shape"), (nlohmann::json{inst.tokens_t, inst.d_t}));
  const auto f_c = mca_forward(inst.f_i, inst.f_a, inst.f_t, inst.params);
  EXPECT_EQ(digest(f_c), fixture.at("f_c_sha256").get<std::string>());
  EXPECT_NEAR(f_c.values[0], fixture.at("f_c_first").get<double>(), 1e-12);
}

}  // namespace
}  // namespace dive::mca
