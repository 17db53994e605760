#pragma once

// `dive` command line. run_cli() returns the process exit code:
// 0 success, 1 usage, 2 input/IO, 3 internal invariant violation.

#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dive/bench.hpp"
#include "dive/config.hpp"
#include "dive/curation.hpp"
#include "dive/mca_checks.hpp"
#include "dive/study_server.hpp"
#include "dive/synth.hpp"

namespace dive {

inline constexpr const char* kCliUsageSummary = R"(Subcommands:
  score <video_dir> [--subject-only]
  bench --manifest M [--out DIR]
  annotate --manifest M [--out FILE]
  curate --manifest M --out DIR
  static-gen --image F [--n 49] --out DIR [--format png|ppm]
  mca-demo [--seed S]
  human-study aggregate --config C [--store F]
  serve-study --config C [--port P] [--host H] [--ui DIR]
  report merge <files...> [--out DIR]
Global flags (accepted before or after the subcommand):
  --config FILE  --json  --offline  --seed S  --jobs N
Exit codes: 0 ok, 1 usage, 2 input/IO, 3 internal invariant violation.)";

namespace cli_detail {

struct Globals {
  std::string config_path;
  bool json = false;
  bool offline = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
};

inline Config resolve_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
  if (g.seed_opt && g.seed_opt->count()) c.seed = g.seed;
  if (g.jobs_opt && g.jobs_opt->count()) c.jobs = g.jobs;
  if (c.jobs == 0) c.jobs = std::max(1u, std::thread::hardware_concurrency());
  return c;
}

/// Annotator wiring: lexicon, cache and (unless offline or unconfigured) the chat client.
struct AnnotatorStack {
  std::unique_ptr<DegreeCache> cache;
  std::unique_ptr<ChatClient> client;
  std::unique_ptr<DegreeAnnotator> annotator;

  AnnotatorStack(const Config& c, bool offline, std::ostream& err) {
    Lexicon lex = c.paths.lexicon.empty() ? Lexicon::builtin() : Lexicon::from_file(c.paths.lexicon);
    std::string tmpl(assets::kDegreeRequestTemplate);
    if (!c.paths.request_template.empty()) tmpl = detail::read_text_file(c.paths.request_template);
    cache = c.paths.degree_cache.empty() ? std::make_unique<DegreeCache>() : std::make_unique<DegreeCache>(c.paths.degree_cache);
    if (!offline) {
      if (c.llm.endpoint.empty())
        err << "warning: no llm.endpoint configured; degrees come from the lexicon\n";
      else
        client = std::make_unique<HttpChatClient>(c.llm);
    }
    annotator = std::make_unique<DegreeAnnotator>(std::move(lex), cache.get(), client.get(), c.llm.max_retries, tmpl,
                                                  [&err](const std::string& m) { err << "warning: " << m << '\n'; });
  }
};

inline std::string report_summary(const ModelReport& r) {
  std::ostringstream s;
  s << r.model_name << ": items " << r.n_items << ", failed " << r.failures.size() << ", DR " << fixed2(r.dr)
    << ", DC " << fixed2(r.dc) << ", DBQ " << fixed2(r.dbq) << '\n';
  return s.str();
}

inline nlohmann::json report_headline(const ModelReport& r) {
  return {{"model_name", r.model_name}, {"n_items", r.n_items}, {"n_failed", r.failures.size()},
          {"dr", r.dr},                 {"dc", r.dc},           {"dbq", r.dbq}};
}

inline std::vector<CurationItem> curation_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw input_error("manifest not found: " + path.string());
  const auto j = detail::read_json_file(path);
  if (j.is_array()) return curation_items_from_json(j, path.parent_path());
  std::vector<CurationItem> items;
  for (const auto& it : BenchManifest::from_json(j, path.parent_path()).items) items.push_back({it.item_id, it.video_dir});
  return items;
}

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
  nlohmann::json values;
};

inline std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::vector<CheckLine> mca_demo_checks(std::uint64_t seed) {
  using namespace mca;
  std::vector<CheckLine> out;
  const auto z = check_zero_init_identity(seed, 100);
  out.push_back({"zero_init_identity", z.exact == z.cases,
                 std::to_string(z.exact) + "/" + std::to_string(z.cases) + " bitwise equal",
                 {{"cases", z.cases}, {"exact", z.exact}}});
  const auto g = check_gradients(seed + 1, 20);
  out.push_back({"gradient_check", g.max_rel_error() < 1e-4,
                 "max relative error " + fmt(g.max_rel_error(), "%.3e") + " over " + std::to_string(g.scalars_checked) +
                     " scalars (limit 1e-4)",
                 {{"instances", g.instances},
                  {"scalars_checked", g.scalars_checked},
                  {"max_rel_error_adapter", g.max_rel_error_mca},
                  {"max_rel_error_denoiser", g.max_rel_error_denoiser}}});
  const auto v = check_q_sample_variance(seed + 2);
  out.push_back({"q_sample_variance", std::abs(v.min_variance - 1) <= 0.05 && std::abs(v.max_variance - 1) <= 0.05,
                 "variance in [" + fmt(v.min_variance, "%.4f") + ", " + fmt(v.max_variance, "%.4f") + "] (1 +- 0.05)",
                 {{"min_variance", v.min_variance}, {"max_variance", v.max_variance}}});
  const auto t = check_training(seed + 3);
  out.push_back({"loss_descent", t.reduction() >= 0.30,
                 "loss " + fmt(t.initial_loss, "%.4f") + " -> " + fmt(t.final_loss, "%.4f") + " in " +
                     std::to_string(t.steps) + " steps (" + fmt(100 * t.reduction(), "%.1f") + "% drop, need 30%)",
                 {{"initial_loss", t.initial_loss}, {"final_loss", t.final_loss}, {"steps", t.steps}}});
  return out;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Image-to-video dynamics evaluation: scoring, benchmark reports, curation, study service.", "dive"};
  app.fallthrough();
  app.require_subcommand(1);
  app.footer(kCliUsageSummary);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout");
  app.add_flag("--offline", g.offline, "Never contact the LLM endpoint; degrees from manifest, cache or lexicon");
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for randomized checks");
  g.jobs_opt = app.add_option("--jobs", g.jobs, "Worker threads (0 = logical CPUs)");

  std::string video_dir, manifest, out_path, image, format = "png", store, study_config, host = "127.0.0.1", ui_dir;
  bool subject_only = false;
  int n_frames = 49, port = 8080;
  std::vector<std::string> report_files;

  auto* score = app.add_subcommand("score", "Dynamic score and quality profile of one clip (JSON)");
  score->add_option("video_dir", video_dir, "Directory of frames")->required();
  score->add_flag("--subject-only", subject_only, "Subtract fitted camera motion before measuring");

  auto* bench = app.add_subcommand("bench", "Score every manifest item and report DR, DC and DBQ");
  bench->add_option("--manifest", manifest, "Benchmark manifest JSON")->required();
  bench->add_option("--out", out_path, "Write report_<model>.json/.csv and leaderboard.md here");

  auto* annotate = app.add_subcommand("annotate", "Assign a 1-5 dynamic degree to every manifest item");
  annotate->add_option("--manifest", manifest, "Benchmark manifest JSON")->required();
  annotate->add_option("--out", out_path, "Write annotations as JSONL to this file");

  auto* curate_cmd = app.add_subcommand("curate", "Split clips into keep.json and drop.json");
  curate_cmd->add_option("--manifest", manifest, "Curation list or benchmark manifest JSON")->required();
  curate_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* static_gen = app.add_subcommand("static-gen", "Write a clip that repeats one image");
  static_gen->add_option("--image", image, "Input PNG or PPM")->required();
  static_gen->add_option("--n", n_frames, "Frame count")->check(CLI::Range(1, 100000));
  static_gen->add_option("--out", out_path, "Output directory")->required();
  static_gen->add_option("--format", format, "Frame format")->check(CLI::IsMember({"png", "ppm"}));

  auto* mca_demo = app.add_subcommand("mca-demo", "Adapter self-checks: zero-init identity, gradients, loss descent");

  auto* human = app.add_subcommand("human-study", "Ranking study tools");
  human->require_subcommand(1);
  auto* aggregate = human->add_subcommand("aggregate", "Scores and shares from a response store");
  aggregate->add_option("--config", study_config, "Study config JSON")->required();
  aggregate->add_option("--store", store, "Response store (default: study_<id>.jsonl in the study store_dir)");

  auto* serve = app.add_subcommand("serve-study", "Serve the study HTTP API");
  serve->add_option("--config", study_config, "Study config JSON")->required();
  serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--ui", ui_dir, "Static files served at /")->check(CLI::ExistingDirectory);

  auto* report = app.add_subcommand("report", "Report tools");
  report->require_subcommand(1);
  auto* merge = report->add_subcommand("merge", "Leaderboard from several report JSON files");
  merge->add_option("files", report_files, "report_<model>.json files")->required();
  merge->add_option("--out", out_path, "Write leaderboard.md here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*score) {
      const Config c = resolve_config(g);
      FrameSequence seq = load_sequence(video_dir);
      if (seq.item_id.empty()) seq.item_id = std::filesystem::path(video_dir).filename().string();
      const auto analysis = analyze_video(seq, c.analysis);
      DynamicsConfig dc = c.dynamics;
      dc.subject_only = dc.subject_only || subject_only;
      const auto dyn = dynamic_score(analysis, dc, c.analysis.trim);
      const auto q = quality_profile(analysis, dyn, c.quality);
      for (const auto& w : q.warnings) err << "warning: " << w << '\n';
      const nlohmann::json j{{"item_id", seq.item_id}, {"dynamics", to_json(dyn)}, {"quality", to_json(q)}};
      out << (g.json ? j.dump() : j.dump(2)) << '\n';
      return 0;
    }
    if (*bench) {
      const Config c = resolve_config(g);
      const auto m = BenchManifest::load(manifest);
      AnnotatorStack stack(c, g.offline, err);
      const BenchConfig bc{c.analysis, c.dynamics, c.quality, c.jobs, {}};
      const auto r = run_benchmark(m, bc, *stack.annotator);
      for (const auto& f : r.failures) err << "warning: item " << f.item_id << " skipped: " << f.error << '\n';
      if (out_path.empty()) {
        out << to_json(r).dump(2) << '\n';
        return 0;
      }
      const auto written = emit_report(r, out_path);
      if (g.json) {
        auto j = report_headline(r);
        j["written"] = nlohmann::json::array();
        for (const auto& p : written) j["written"].push_back(p.string());
        out << j.dump() << '\n';
      } else {
        out << report_summary(r);
        for (const auto& p : written) out << "wrote " << p.string() << '\n';
      }
      return 0;
    }
    if (*annotate) {
      const Config c = resolve_config(g);
      const auto m = BenchManifest::load(manifest);
      AnnotatorStack stack(c, g.offline, err);
      std::vector<DegreeItem> todo;
      for (const auto& it : m.items)
        if (!it.degree) todo.push_back({it.item_id, it.prompt, it.image_path});
      const auto done = stack.annotator->annotate_all(todo, static_cast<std::size_t>(std::max(1, c.llm.max_in_flight)));
      std::vector<DegreeAnnotation> all;
      std::size_t next = 0;
      for (const auto& it : m.items)
        all.push_back(it.degree ? DegreeAnnotation{it.item_id, *it.degree, DegreeSource::Manifest, {}} : done[next++]);
      std::string lines;
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& a : all) {
        lines += to_json(a).dump() + "\n";
        arr.push_back(to_json(a));
      }
      if (!out_path.empty()) detail::write_text_file(out_path, lines);
      if (g.json) {
        out << arr.dump() << '\n';
      } else if (out_path.empty()) {
        out << lines;
      } else {
        for (const auto& a : all) out << a.item_id << '\t' << a.degree << '\t' << to_string(a.source) << '\n';
      }
      return 0;
    }
    if (*curate_cmd) {
      const Config c = resolve_config(g);
      const auto r = curate(curation_manifest(manifest), c.curation, c.analysis, c.jobs);
      write_curation(r, out_path);
      if (g.json) {
        nlohmann::json j{{"keep", nlohmann::json::array()}, {"drop", nlohmann::json::array()}};
        for (const auto& v : r.keep) j["keep"].push_back(v.item_id);
        for (const auto& v : r.drop) j["drop"].push_back({{"item_id", v.item_id}, {"reasons", v.reasons}});
        out << j.dump() << '\n';
      } else {
        out << "kept " << r.keep.size() << ", dropped " << r.drop.size() << '\n';
        for (const auto& v : r.drop) {
          out << "  drop " << v.item_id << ':';
          for (const auto& reason : v.reasons) out << ' ' << reason;
          out << '\n';
        }
      }
      return 0;
    }
    if (*static_gen) {
      const auto seq = synthesize_static(read_image(image), n_frames);
      write_sequence(seq, out_path, format == "ppm" ? ImageFormat::Ppm : ImageFormat::Png);
      if (g.json)
        out << nlohmann::json{{"frames", seq.size()}, {"out", out_path}}.dump() << '\n';
      else
        out << "wrote " << seq.size() << " frames to " << out_path << '\n';
      return 0;
    }
    if (*mca_demo) {
      const Config c = resolve_config(g);
      const auto checks = mca_demo_checks(c.seed);
      bool all = true;
      nlohmann::json j{{"seed", c.seed}, {"checks", nlohmann::json::array()}};
      for (const auto& ch : checks) {
        all = all && ch.pass;
        if (!g.json) out << (ch.pass ? "PASS " : "FAIL ") << ch.name << ": " << ch.detail << '\n';
        j["checks"].push_back({{"name", ch.name}, {"pass", ch.pass}, {"values", ch.values}});
      }
      j["pass"] = all;
      if (g.json) out << j.dump() << '\n';
      return all ? 0 : 3;
    }
    if (*aggregate) {
      const auto cfg = load_study_config(study_config);
      const std::filesystem::path path = store.empty() ? cfg.store_path() : std::filesystem::path(store);
      if (!store.empty() && !std::filesystem::exists(path)) throw input_error("store not found: " + path.string());
      const auto results = aggregate_study(load_store(path, cfg), cfg);
      out << (g.json ? to_json(results).dump(2) + "\n" : study_results_text(results));
      return 0;
    }
    if (*serve) {
      const auto cfg = load_study_config(study_config);
      cfg.check_media();
      StudyService service(cfg);
      httplib::Server server;
      mount_study(server, service);
      if (!ui_dir.empty()) server.set_mount_point("/", ui_dir);
      const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
      if (bound < 0) throw input_error("cannot bind " + host + ":" + std::to_string(port));
      out << "serving study " << cfg.study_id << " on http://" << host << ':' << bound << " (store "
          << cfg.store_path().string() << ")" << std::endl;
      if (!server.listen_after_bind()) throw input_error("server stopped unexpectedly");
      return 0;
    }
    if (*merge) {
      std::vector<ModelReport> reports;
      for (const auto& f : report_files) {
        if (!std::filesystem::exists(f)) throw input_error("report not found: " + f);
        reports.push_back(load_report(f));
      }
      const std::string md = leaderboard_markdown(reports);
      if (!out_path.empty()) detail::write_text_file(std::filesystem::path(out_path) / "leaderboard.md", md);
      if (g.json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : reports) arr.push_back(report_headline(r));
        out << arr.dump() << '\n';
      } else {
        out << md;
      }
      return 0;
    }
    err << "error: no subcommand\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Input);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Input);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Invariant);
  }
}

}  // namespace dive
