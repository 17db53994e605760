#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dive/dynamics.hpp"
#include "dive/synth.hpp"
#include "support.hpp"

namespace dive {
namespace {

FrameSequence reversed(FrameSequence seq) {
  std::reverse(seq.frames.begin(), seq.frames.end());
  return seq;
}

void expect_profile_invariants(const DynamicsProfile& p, std::size_t frames) {
  ASSERT_EQ(p.per_pair_motion.size(), frames - 1);
  const double mean = std::accumulate(p.per_pair_motion.begin(), p.per_pair_motion.end(), 0.0) /
                      static_cast<double>(p.per_pair_motion.size());
  EXPECT_DOUBLE_EQ(p.raw_mean, mean);
  EXPECT_GE(p.score, 0.0);
  EXPECT_LE(p.score, 1.0);
}

TEST(DynamicScore, StaticClipIsExactlyZero) {
  const auto seq = synthesize_static(testing::noise_frame(96, 64, 3), 49);
  const auto p = dynamic_score(seq);
  expect_profile_invariants(p, 49);
  EXPECT_EQ(p.score, 0.0);
  EXPECT_EQ(p.raw_mean, 0.0);
  EXPECT_TRUE(is_static(p));
}

TEST(DynamicScore, SmallFastClipSaturates) {
  const auto seq = synthesize_moving(64, 64, 10, motion::Translate{3, 0});
  const auto p = dynamic_score(seq);
  expect_profile_invariants(p, 10);
  // 3 px over a 90.51 px diagonal is 0.0331 per pair, above d_ref = 0.02.
  EXPECT_NEAR(p.raw_mean, 3.0 / std::hypot(64.0, 64.0), 1e-12);
  EXPECT_EQ(p.score, 1.0);
  EXPECT_FALSE(is_static(p));
}

TEST(DynamicScore, OnePixelPerFrameAt256) {
  const auto seq = synthesize_moving(256, 256, 12, motion::Translate{1, 0});
  const auto p = dynamic_score(seq);
  const double expected = 1.0 / std::hypot(256.0, 256.0) / 0.02;  // 0.13811
  EXPECT_NEAR(p.score, expected, 1e-12);
  EXPECT_NEAR(p.score, 0.1381, 0.005);
}

TEST(DynamicScore, MonotoneInSpeed) {
  double previous = -1.0;
  for (int speed = 0; speed <= 3; ++speed) {
    const auto p = dynamic_score(synthesize_moving(256, 256, 8, motion::Translate{speed, 0}));
    EXPECT_GE(p.score, previous) << "speed " << speed;
    if (speed > 0) EXPECT_GT(p.score, previous);
    previous = p.score;
  }
}

TEST(DynamicScore, SaturationAtDref) {
  for (double d_ref : {0.005, 0.01, 0.02, 0.05}) {
    const auto p = dynamic_score(synthesize_moving(128, 128, 6, motion::Translate{2, 1}), {.d_ref = d_ref});
    EXPECT_LE(p.score, 1.0);
    if (p.raw_mean >= d_ref) EXPECT_EQ(p.score, 1.0);
  }
}

TEST(DynamicScore, ReversalInvariantOnTranslations) {
  for (auto m : {motion::Translate{2, 0}, motion::Translate{0, -3}, motion::Translate{1, 1}}) {
    const auto seq = synthesize_moving(192, 160, 9, m, {.seed = 5});
    EXPECT_EQ(dynamic_score(seq).score, dynamic_score(reversed(seq)).score);
  }
}

TEST(DynamicScore, SubjectOnlyRemovesCameraPan) {
  const auto pan = synthesize_moving(256, 256, 6, motion::Translate{3, 0});
  EXPECT_NEAR(dynamic_score(pan, {.subject_only = true}).score, 0.0, 1e-12);
  const auto object = synthesize_moving(256, 256, 6, motion::ObjectTranslate{3, 0}, {.square = 96});
  const auto p = dynamic_score(object, {.subject_only = true});
  EXPECT_TRUE(p.subject_only);
  EXPECT_GT(p.score, 0.0);
}

TEST(DynamicScore, SingleFrameIsError) {
  EXPECT_THROW(dynamic_score(synthesize_static(testing::noise_frame(64, 64, 1), 1)), Error);
}

TEST(IsStatic, OneMovingPairAmongStillPairs) {
  auto seq = synthesize_static(synthesize_moving(64, 64, 1, motion::Translate{0, 0}).frames[0], 49);
  const auto moved = synthesize_moving(64, 64, 2, motion::Translate{3, 0});
  for (std::size_t i = 0; i < 25; ++i) seq.frames[i] = moved.frames[0];
  for (std::size_t i = 25; i < 49; ++i) seq.frames[i] = moved.frames[1];
  const auto p = dynamic_score(seq);
  EXPECT_GE(p.raw_mean, 1e-4);
  EXPECT_FALSE(is_static(p));
  EXPECT_EQ(std::count_if(p.per_pair_motion.begin(), p.per_pair_motion.end(), [](double m) { return m > 0; }), 1);
}

TEST(DynamicScore, JsonRecordFields) {
  const auto j = to_json(dynamic_score(synthesize_moving(64, 64, 3, motion::Translate{1, 0}, {.item_id = "clip"})));
  EXPECT_EQ(j.at("item_id"), "clip");
  EXPECT_TRUE(j.contains("score"));
  EXPECT_TRUE(j.contains("raw_mean"));
  EXPECT_EQ(j.at("per_pair_motion").size(), 2u);
}

}  // namespace
}  // namespace dive
