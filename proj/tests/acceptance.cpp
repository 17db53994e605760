// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "dive/cli.hpp"
#include "study_fixture.hpp"
#include "support.hpp"

namespace {

using namespace dive;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int run_dive(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "dive");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "dive exited %d: %s\n", code, e.str().c_str());
  return code;
}

std::string num(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Frame textured_frame(int w, int h, std::uint64_t seed) {
  return synthesize_moving(w, h, 1, motion::Translate{0, 0}, {.seed = seed}).frames[0];
}

// 1. A duplicated still image scores zero everywhere.
Outcome static_exploit() {
  testing::TempDir tmp("acc_static");
  write_png(textured_frame(256, 192, 1), tmp / "image.png");
  if (run_dive({"static-gen", "--image", (tmp / "image.png").string(), "--n", "49", "--out", (tmp / "clip").string()}))
    return {false, "static-gen failed"};
  std::string scored;
  if (run_dive({"score", (tmp / "clip").string()}, &scored)) return {false, "score failed"};
  const double s = nlohmann::json::parse(scored).at("dynamics").at("score").get<double>();

  nlohmann::json items = nlohmann::json::array();
  const std::vector<std::string> prompts{"a calm lake", "a dog runs", "fireworks explode", "a slow breeze"};
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string id = "still" + std::to_string(i);
    write_sequence(synthesize_static(textured_frame(128, 128, 20 + i), 49), tmp / id, ImageFormat::Ppm);
    items.push_back({{"item_id", id}, {"prompt", prompts[i]}, {"video_dir", id}});
  }
  detail::write_text_file(tmp / "m.json", nlohmann::json{{"model_name", "static"}, {"items", items}}.dump());
  std::string rep;
  if (run_dive({"bench", "--offline", "--jobs", "1", "--manifest", (tmp / "m.json").string()}, &rep))
    return {false, "bench failed"};
  const auto r = nlohmann::json::parse(rep);
  const double dr = r.at("dr"), dc = r.at("dc"), dbq = r.at("dbq");
  const bool pass = s == 0.0 && dr <= 1.0 && std::abs(dc - 50.0) <= 2.0 && dbq <= 8.26 && dbq == 0.0;
  return {pass, "score " + num(s) + ", DR " + num(dr) + " (<= 1.0), DC " + num(dc) + " (50 +- 2), DBQ " + num(dbq) +
                    " (0, <= 8.26)"};
}

// 2. Integer translations are recovered block by block; the score grows with speed.
Outcome flow_oracle() {
  std::vector<double> scores;
  std::size_t wrong = 0, checked = 0;
  for (int speed : {1, 2, 3}) {
    const auto seq = synthesize_moving(256, 256, 6, motion::Translate{static_cast<double>(speed), 0}, {.seed = 3});
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
      const auto f = estimate_flow(seq.frames[k], seq.frames[k + 1]);
      for (auto idx : interior_blocks(f)) {
        ++checked;
        wrong += f.u[idx] != speed || f.v[idx] != 0;
      }
    }
    scores.push_back(dynamic_score(analyze_video(seq)).score);
  }
  const double expected_1px = 1.0 / std::hypot(256.0, 256.0) / 0.02;
  const bool increasing = scores[0] < scores[1] && scores[1] < scores[2];
  const bool pass = wrong == 0 && increasing && std::abs(scores[0] - 0.138) <= 0.005;
  return {pass, std::to_string(checked - wrong) + "/" + std::to_string(checked) + " interior blocks exact; s = " +
                    num(scores[0], "%.4f") + ", " + num(scores[1], "%.4f") + ", " + num(scores[2], "%.4f") +
                    " (s(1px) target 0.138 +- 0.005, closed form " + num(expected_1px, "%.4f") + ")"};
}

// 3. Controllability endpoints.
Outcome dc_endpoints() {
  std::vector<std::pair<int, double>> ordered, reversed, constant;
  for (int g = 1; g <= 5; ++g) {
    ordered.push_back({g, 0.2 * g});
    reversed.push_back({g, 1.0 - 0.2 * g});
    constant.push_back({g, 0.4});
  }
  const double a = dynamics_controllability(ordered), b = dynamics_controllability(reversed),
               c = dynamics_controllability(constant);
  return {a == 100.0 && b == 0.0 && c == 50.0, "ordered " + num(a) + ", reversed " + num(b) + ", constant " + num(c)};
}

// 4.
Outcome zero_init() {
  const auto r = mca::check_zero_init_identity(4, 100);
  return {r.cases == 100 && r.exact == 100, std::to_string(r.exact) + "/" + std::to_string(r.cases) + " bitwise equal"};
}

// 5.
Outcome gradients() {
  const auto r = mca::check_gradients(5, 20);
  return {r.instances == 20 && r.max_rel_error() < 1e-4,
          "max relative error " + num(r.max_rel_error(), "%.3e") + " (adapter " + num(r.max_rel_error_mca, "%.2e") +
              ", denoiser " + num(r.max_rel_error_denoiser, "%.2e") + ") over " + std::to_string(r.scalars_checked) +
              " scalars, 20 instances"};
}

// 6.
Outcome diffusion() {
  const auto v = mca::check_q_sample_variance(6, 10000);
  const auto t = mca::check_training(6, 200);
  const bool pass = std::abs(v.min_variance - 1) <= 0.05 && std::abs(v.max_variance - 1) <= 0.05 && t.reduction() >= 0.30;
  return {pass, "variance [" + num(v.min_variance, "%.4f") + ", " + num(v.max_variance, "%.4f") + "]; loss " +
                    num(t.initial_loss, "%.4f") + " -> " + num(t.final_loss, "%.4f") + " (" +
                    num(100 * t.reduction(), "%.1f") + "% drop in 200 steps)"};
}

// 7. Full-response items sum to 10; published totals normalize to the published shares.
Outcome study_arithmetic() {
  const auto f = testing::overall_quality_fixture();
  const auto r = aggregate_study(f.records, f.cfg);
  const auto& d = r.dimensions.at(0);
  bool sums_ok = true;
  int full_items = 0;
  for (const auto& item : d.items) {
    if (item.abstentions) continue;
    ++full_items;
    int total = 0;
    double sum = 0;
    for (std::size_t m = 0; m < item.weights.size(); ++m) {
      total += item.weights[m];
      sum += item.scores[m];
    }
    sums_ok = sums_ok && total == 10 * f.cfg.n_volunteers_expected && fixed2(sum) == "10.00";
  }
  const auto pct = normalize_scores({99.8, 149.6, 127.6, 77});
  const std::vector<std::string> want{"21.98", "32.95", "28.11", "16.96"};
  bool pct_ok = true, fixture_ok = true;
  std::string got;
  for (std::size_t m = 0; m < 4; ++m) {
    pct_ok = pct_ok && fixed2(pct[m]) == want[m];
    fixture_ok = fixture_ok && fixed2(d.models[m].normalized_pct) == want[m];
    got += (m ? ", " : "") + fixed2(pct[m]);
  }
  return {sums_ok && full_items >= 3 && pct_ok && fixture_ok,
          std::to_string(full_items) + " full-response items sum to 10; shares " + got +
              (fixture_ok ? " (also from the 50-item store)" : " (50-item store disagrees)")};
}

// 8.
Outcome curation_corpus() {
  testing::TempDir tmp("acc_curate");
  write_sequence(synthesize_static(textured_frame(128, 128, 5), 10), tmp / "smooth");
  write_sequence(synthesize_moving(128, 128, 10, motion::Cut{5, textured_frame(128, 128, 6), testing::noise_frame(128, 128, 7)}),
                 tmp / "cut");
  write_sequence(synthesize_moving(256, 256, 6, motion::Similarity{4, 0, 1.02, 0}), tmp / "mixed");
  const auto r = curate({{"smooth", tmp / "smooth"}, {"cut", tmp / "cut"}, {"mixed", tmp / "mixed"}});
  std::string reasons;
  for (const auto& v : r.drop)
    for (const auto& why : v.reasons) reasons += (reasons.empty() ? "" : ", ") + v.item_id + ":" + why;
  const bool pass = r.keep.size() == 1 && r.keep[0].item_id == "smooth" && r.drop.size() == 2 &&
                    r.drop[0].item_id == "cut" && r.drop[0].reasons == std::vector<std::string>{"transition"} &&
                    r.drop[0].cuts == std::vector<std::size_t>{4} &&
                    r.drop[1].reasons == std::vector<std::string>{"mixed_motion"};
  return {pass, "keep " + std::to_string(r.keep.size()) + ", drop " + std::to_string(r.drop.size()) + " (" + reasons +
                    "), cut index " + (r.drop.empty() || r.drop[0].cuts.empty() ? "none" : std::to_string(r.drop[0].cuts[0]))};
}

// 9.
Outcome determinism() {
  testing::TempDir tmp("acc_determinism");
  const std::vector<std::pair<double, std::string>> clips{{0, "a still pond"},        {1, "a cat walks slowly"},
                                                          {2, "clouds drift"},        {3, "a horse gallops"},
                                                          {4, "a car speeds away"},   {5, "a huge explosion"}};
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string id = "item" + std::to_string(i);
    write_sequence(synthesize_moving(128, 128, 8, motion::Translate{clips[i].first, 0.5 * clips[i].first}, {.seed = 40 + i}),
                   tmp / id);
    items.push_back({{"item_id", id}, {"prompt", clips[i].second}, {"video_dir", id}});
  }
  detail::write_text_file(tmp / "m.json", nlohmann::json{{"model_name", "toy"}, {"items", items}}.dump());
  for (const char* out : {"a", "b"})
    if (run_dive({"bench", "--manifest", (tmp / "m.json").string(), "--offline", "--seed", "7", "--out", (tmp / out).string()}))
      return {false, "bench failed"};
  const auto a = detail::read_text_file(tmp / "a" / "report_toy.json");
  const auto b = detail::read_text_file(tmp / "b" / "report_toy.json");
  return {a == b && !a.empty(), std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 = no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "static-video exploit", 5, static_exploit},
      {2, "flow oracle", 10, flow_oracle},
      {3, "controllability endpoints", 0, dc_endpoints},
      {4, "adapter zero-init identity", 1, zero_init},
      {5, "gradient check", 10, gradients},
      {6, "diffusion sanity", 30, diffusion},
      {7, "human-study arithmetic", 0, study_arithmetic},
      {8, "curation corpus", 5, curation_corpus},
      {9, "bench determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %d %s: %s [%.2fs%s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s > 0 ? ", limit " : "", c.budget_s > 0 ? num(c.budget_s, "%gs").c_str() : "");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
