#include <gtest/gtest.h>

#include <random>

#include "dive/bench.hpp"
#include "dive/synth.hpp"
#include "support.hpp"

namespace dive {
namespace {

// Independent oracles: percentile by explicit interpolation
// on a copy, and the no-ties Spearman formula 1 - 6*sum(d^2)/(n(n^2-1)).
double oracle_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const double f = std::floor(h);
  if (f + 1 >= static_cast<double>(v.size())) return v.back();
  const auto i = static_cast<std::size_t>(f);
  return v[i] * (1 - (h - f)) + v[i + 1] * (h - f);
}

double oracle_spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto rank_of = [](const std::vector<double>& v, std::size_t i) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double w) { return w < v[i]; })) + 1;
  };
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) d2 += std::pow(rank_of(x, i) - rank_of(y, i), 2);
  const double dn = static_cast<double>(n);
  return 1 - 6 * d2 / (dn * (dn * dn - 1));
}

TEST(DynamicRange, Examples) {
  EXPECT_EQ(dynamic_range({0.3, 0.3, 0.3}), 0.0);
  EXPECT_NEAR(dynamic_range({0.0, 1.0}), 90.0, 1e-12);
  EXPECT_NEAR(dynamic_range({0.0, 0.25, 0.5, 0.75, 1.0}), 90.0, 1e-12);
  EXPECT_EQ(dynamic_range({0.7}), 0.0);
  EXPECT_THROW(dynamic_range({}), Error);
}

TEST(DynamicRange, MatchesOracleAndSymmetries) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(2 + trial % 40);
    for (auto& x : s) x = u(rng);
    const double dr = dynamic_range(s);
    EXPECT_NEAR(dr, 100 * (oracle_percentile(s, 0.95) - oracle_percentile(s, 0.05)), 1e-9);
    auto perm = s;
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_DOUBLE_EQ(dynamic_range(perm), dr);
    std::vector<double> flipped;
    for (double x : s) flipped.push_back(1 - x);
    EXPECT_NEAR(dynamic_range(flipped), dr, 1e-9);
  }
}

TEST(DynamicsControllability, Endpoints) {
  EXPECT_EQ(dynamics_controllability({{1, 0.1}, {2, 0.2}, {3, 0.3}, {4, 0.4}, {5, 0.5}}), 100.0);
  EXPECT_EQ(dynamics_controllability({{1, 0.5}, {2, 0.4}, {3, 0.3}, {4, 0.2}, {5, 0.1}}), 0.0);
  EXPECT_EQ(dynamics_controllability({{1, 0.0}, {2, 0.0}, {5, 0.0}}), 50.0);
  EXPECT_EQ(dynamics_controllability({{3, 0.1}, {3, 0.9}}), 50.0);
  EXPECT_THROW(dynamics_controllability({{1, 0.0}}), Error);
}

TEST(DynamicsControllability, MatchesOracleAndIsRankBased) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3 + trial % 20), y(x.size());
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    EXPECT_NEAR(spearman_rho(x, y), oracle_spearman_no_ties(x, y), 1e-12);
    std::vector<double> z;
    for (double v : y) z.push_back(std::exp(3 * v) - 7);
    EXPECT_NEAR(spearman_rho(x, z), spearman_rho(x, y), 1e-15);
  }
}

TEST(DynamicsControllability, AverageRanksForTies) {
  EXPECT_EQ(average_ranks({5, 1, 5, 3}), (std::vector<double>{3.5, 1, 3.5, 2}));
  // degrees with ties against scores: closed form by hand
  // g ranks [1.5,1.5,3,4], s ranks [1,2,3,4] -> rho = 4.5 / sqrt(4.5 * 5)
  EXPECT_NEAR(spearman_rho({1, 1, 2, 3}, {0.1, 0.2, 0.3, 0.4}), 4.5 / std::sqrt(4.5 * 5.0), 1e-15);
}

ItemResult item(std::string id, int g, double s, double ms, double bc, double sc, double nat) {
  ItemResult r;
  r.item_id = std::move(id);
  r.degree = g;
  r.score = s;
  r.ms = ms;
  r.bc = bc;
  r.sc = sc;
  r.nat = nat;
  r.q = 100 * (ms + bc + sc + nat) / 4;
  r.dbq_contrib = s * r.q;
  return r;
}

TEST(AggregateReport, OneDynamicPerfectClipAmongStatics) {
  for (int k = 1; k <= 6; ++k) {
    ModelReport r;
    r.model_name = "m";
    for (int i = 0; i < k; ++i) r.per_item.push_back(item("static" + std::to_string(i), 1, 0, 1, 1, 1, 1));
    r.per_item.push_back(item("dyn", 5, 1, 1, 1, 1, 1));
    aggregate_report(r);
    EXPECT_NEAR(r.dbq, 100.0 / (k + 1), 1e-12);
    EXPECT_NEAR(r.dbq_by_dim.ms, 100.0 / (k + 1), 1e-12);
  }
}

TEST(AggregateReport, DimensionBreakdownAndOrdering) {
  ModelReport r;
  r.model_name = "m";
  r.per_item = {item("b", 2, 0.5, 0.8, 0.6, 0.4, 0.2), item("a", 4, 1.0, 1, 1, 1, 1)};
  aggregate_report(r);
  EXPECT_EQ(r.per_item.front().item_id, "a");
  EXPECT_EQ(r.n_items, 2u);
  EXPECT_NEAR(r.dbq_by_dim.ms, (100 + 0.5 * 80) / 2, 1e-12);
  EXPECT_NEAR(r.dbq_by_dim.nat, (100 + 0.5 * 20) / 2, 1e-12);
  EXPECT_NEAR(r.dbq, (100 + 0.5 * 50) / 2, 1e-12);
  EXPECT_EQ(r.dc, 100.0);
}

class BenchFixture : public ::testing::Test {
 protected:
  testing::TempDir tmp{"bench"};

  std::string write_clip(const std::string& name, const FrameSequence& seq) {
    write_sequence(seq, tmp / name, ImageFormat::Ppm);
    return name;
  }

  nlohmann::json entry(const std::string& id, const std::string& dir, std::optional<int> degree,
                       const std::string& prompt = "a scene") {
    nlohmann::json j = {{"item_id", id}, {"prompt", prompt}, {"image_path", "img.png"}, {"video_dir", dir}};
    if (degree) j["degree"] = *degree;
    return j;
  }

  BenchManifest manifest(const nlohmann::json& items) {
    const auto path = tmp / "manifest.json";
    detail::write_text_file(path, nlohmann::json{{"model_name", "model-x"}, {"items", items}}.dump());
    return BenchManifest::load(path);
  }
};

TEST_F(BenchFixture, AllStaticManifest) {
  nlohmann::json items = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) {
    const auto dir = write_clip("s" + std::to_string(i), synthesize_static(testing::noise_frame(64, 64, i), 8));
    items.push_back(entry("s" + std::to_string(i), dir, 1 + i));
  }
  DegreeAnnotator ann(Lexicon::builtin(), nullptr, nullptr);
  const auto r = run_benchmark(manifest(items), {}, ann);
  EXPECT_EQ(r.n_items, 4u);
  EXPECT_EQ(r.dr, 0.0);
  EXPECT_EQ(r.dc, 50.0);
  EXPECT_EQ(r.dbq, 0.0);
}

TEST_F(BenchFixture, SingleTranslateItem) {
  const auto dir = write_clip("t", synthesize_moving(64, 64, 6, motion::Translate{3, 0}));
  DegreeAnnotator ann(Lexicon::builtin(), nullptr, nullptr);
  const auto r = run_benchmark(manifest(nlohmann::json::array({entry("t", dir, 5)})), {}, ann);
  EXPECT_EQ(r.n_items, 1u);
  EXPECT_EQ(r.per_item[0].score, 1.0);
  EXPECT_EQ(r.per_item[0].degree, 5);
  EXPECT_EQ(r.dc, 50.0);
  EXPECT_EQ(r.dr, 0.0);
}

TEST_F(BenchFixture, UnreadableItemIsExcludedAndNoted) {
  nlohmann::json items = nlohmann::json::array();
  items.push_back(entry("a", write_clip("a", synthesize_static(testing::noise_frame(64, 64, 1), 4)), 1));
  items.push_back(entry("b", "does_not_exist", 3));
  items.push_back(entry("c", write_clip("c", synthesize_moving(64, 64, 4, motion::Translate{1, 0})), 4));
  DegreeAnnotator ann(Lexicon::builtin(), nullptr, nullptr);
  const auto r = run_benchmark(manifest(items), {.jobs = 2}, ann);
  EXPECT_EQ(r.n_items, 2u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].item_id, "b");
  EXPECT_NE(r.failures[0].error.find("does_not_exist"), std::string::npos);
  EXPECT_EQ(to_json(r).at("n_failed"), 1);
}

TEST_F(BenchFixture, AllFailedIsError) {
  DegreeAnnotator ann(Lexicon::builtin(), nullptr, nullptr);
  EXPECT_THROW(run_benchmark(manifest(nlohmann::json::array({entry("x", "nope", 2)})), {}, ann), Error);
}

TEST_F(BenchFixture, DegreesResolvedByAnnotatorWhenMissing) {
  const auto dir = write_clip("v", synthesize_static(testing::noise_frame(64, 64, 2), 3));
  nlohmann::json items = nlohmann::json::array({entry("v1", dir, std::nullopt, "a volcano erupting"),
                                                entry("v2", dir, std::nullopt, "a cat sleeping"), entry("v3", dir, 3)});
  DegreeAnnotator ann(Lexicon::builtin(), nullptr, nullptr);
  const auto r = run_benchmark(manifest(items), {}, ann);
  EXPECT_EQ(r.per_item[0].degree, 5);
  EXPECT_EQ(r.per_item[0].degree_source, "lexicon");
  EXPECT_EQ(r.per_item[1].degree, 1);
  EXPECT_EQ(r.per_item[2].degree_source, "manifest");
}

TEST_F(BenchFixture, ManifestValidation) {
  EXPECT_THROW(manifest(nlohmann::json::array({entry("a", "x", 1), entry("a", "y", 2)})), Error);
  EXPECT_THROW(manifest(nlohmann::json::array({entry("a", "x", 6)})), Error);
  auto extra = entry("a", "x", 1);
  extra["colour"] = "red";
  EXPECT_THROW(manifest(nlohmann::json::array({extra})), Error);
  EXPECT_THROW(BenchManifest::load(tmp / "absent.json"), Error);
  const auto m = manifest(nlohmann::json::array({entry("a", "clip", 1)}));
  EXPECT_EQ(m.items[0].video_dir, tmp / "clip");
}

TEST(Reports, JsonRoundTripCsvAndLeaderboard) {
  ModelReport a;
  a.model_name = "alpha";
  a.per_item = {item("x", 1, 0.2, 0.9, 0.8, 0.7, 0.6), item("y", 5, 0.9, 1, 1, 1, 0.5), item("z,1", 3, 0.5, 1, 1, 1, 1)};
  a.failures = {{"w", "missing"}};
  aggregate_report(a);
  EXPECT_EQ(model_report_from_json(nlohmann::json::parse(to_json(a).dump())), a);

  const auto csv = report_csv(a);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(a.n_items + 1));
  EXPECT_NE(csv.find("\"z,1\""), std::string::npos);

  ModelReport b = a;
  b.model_name = "beta";
  b.dbq = a.dbq + 5;
  const auto md = leaderboard_markdown({a, b});
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 4);
  EXPECT_LT(md.find("| beta"), md.find("| alpha"));

  testing::TempDir tmp("emit");
  const auto files = emit_report(a, tmp / "out");
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "report_alpha.json");
  EXPECT_EQ(load_report(files[0]), a);
  EXPECT_TRUE(std::filesystem::exists(tmp / "out" / "leaderboard.md"));
}

}  // namespace
}  // namespace dive
