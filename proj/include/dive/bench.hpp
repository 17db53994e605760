#pragma once

// Benchmark harness: per-item dynamics + quality, then DR / DC / DBQ per model.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dive/detail/format.hpp"
#include "dive/detail/json_util.hpp"
#include "dive/dynamics.hpp"
#include "dive/frame_io.hpp"
#include "dive/parallel.hpp"
#include "dive/prompt_degree.hpp"
#include "dive/quality.hpp"

namespace dive {

namespace fs = std::filesystem;

struct BenchItem {
  std::string item_id;
  std::string prompt;
  fs::path image_path;
  fs::path video_dir;
  std::optional<int> degree;
};

struct BenchManifest {
  std::string model_name;
  std::vector<BenchItem> items;

  /// Relative paths resolve against `base_dir`.
  static BenchManifest from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
    detail::check_keys(j, {"model_name", "items"}, "manifest");
    BenchManifest m;
    m.model_name = detail::read_req<std::string>(j, "model_name", "manifest");
    if (m.model_name.empty()) throw input_error("manifest: model_name is empty");
    const auto items = detail::read_req<nlohmann::json>(j, "items", "manifest");
    if (!items.is_array()) throw input_error("manifest.items: expected an array");
    std::set<std::string> seen;
    auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    for (const auto& ji : items) {
      detail::check_keys(ji, {"item_id", "prompt", "image_path", "video_dir", "degree"}, "manifest item");
      BenchItem it;
      it.item_id = detail::read_req<std::string>(ji, "item_id", "manifest item");
      detail::read_opt(ji, "prompt", it.prompt, "manifest item");
      std::string image, video = detail::read_req<std::string>(ji, "video_dir", "manifest item");
      detail::read_opt(ji, "image_path", image, "manifest item");
      it.image_path = resolve(image);
      it.video_dir = resolve(video);
      if (ji.contains("degree") && !ji["degree"].is_null()) {
        const int g = detail::read_req<int>(ji, "degree", "manifest item");
        if (g < 1 || g > 5) throw input_error("manifest item " + it.item_id + ": degree must be 1..5");
        it.degree = g;
      }
      if (!seen.insert(it.item_id).second) throw input_error("manifest: duplicate item_id '" + it.item_id + "'");
      m.items.push_back(std::move(it));
    }
    return m;
  }

  static BenchManifest load(const fs::path& path) {
    if (!fs::exists(path)) throw input_error("manifest not found: " + path.string());
    return from_json(detail::read_json_file(path), path.parent_path());
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& it : items) {
      nlohmann::json j = {{"item_id", it.item_id}, {"prompt", it.prompt}, {"image_path", it.image_path.string()},
                          {"video_dir", it.video_dir.string()}};
      if (it.degree) j["degree"] = *it.degree;
      out.push_back(std::move(j));
    }
    return {{"model_name", model_name}, {"items", std::move(out)}};
  }
};

// ---------------------------------------------------------------------------
// Aggregate metrics

/// Linear interpolation at fractional index q*(n-1) of the sorted values.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw input_error("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double dynamic_range(const std::vector<double>& scores) {
  if (scores.empty()) throw input_error("dynamic_range: empty score list");
  return 100.0 * (percentile(scores, 0.95) - percentile(scores, 0.05));
}

/// 1-based ranks, ties share the mean of the positions they occupy.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

/// Pearson correlation of average ranks; 0 when either side has no spread.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw input_error("spearman_rho: length mismatch");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double dynamics_controllability(const std::vector<std::pair<int, double>>& pairs) {
  if (pairs.size() < 2) throw input_error("dynamics_controllability: need at least 2 items");
  std::vector<double> g, s;
  for (const auto& [degree, score] : pairs) {
    g.push_back(degree);
    s.push_back(score);
  }
  return 50.0 * (1.0 + spearman_rho(g, s));
}

// ---------------------------------------------------------------------------
// Reports

struct ItemResult {
  std::string item_id;
  int degree = 2;
  std::string degree_source = "manifest";
  double score = 0;
  double q = 0;
  double dbq_contrib = 0;
  double ms = 0, bc = 0, sc = 0, nat = 0;
  std::string nat_source = "proxy";

  bool operator==(const ItemResult&) const = default;
};

struct ItemFailure {
  std::string item_id;
  std::string error;

  bool operator==(const ItemFailure&) const = default;
};

struct DimensionScores {
  double ms = 0, bc = 0, sc = 0, nat = 0;

  bool operator==(const DimensionScores&) const = default;
};

struct ModelReport {
  std::string model_name;
  std::size_t n_items = 0;
  double dr = 0;
  double dc = 50;
  double dbq = 0;
  DimensionScores dbq_by_dim;
  bool subject_only = false;
  std::vector<ItemResult> per_item;  // sorted by item_id
  std::vector<ItemFailure> failures;

  bool operator==(const ModelReport&) const = default;
};

inline nlohmann::json to_json(const ItemResult& r) {
  return {{"item_id", r.item_id}, {"degree", r.degree}, {"degree_source", r.degree_source},
          {"score", r.score},     {"q", r.q},           {"dbq_contrib", r.dbq_contrib},
          {"ms", r.ms},           {"bc", r.bc},         {"sc", r.sc},
          {"nat", r.nat},         {"nat_source", r.nat_source}};
}

inline nlohmann::json to_json(const ModelReport& r) {
  nlohmann::json items = nlohmann::json::array(), failures = nlohmann::json::array();
  for (const auto& it : r.per_item) items.push_back(to_json(it));
  for (const auto& f : r.failures) failures.push_back({{"item_id", f.item_id}, {"error", f.error}});
  return {{"model_name", r.model_name},
          {"n_items", r.n_items},
          {"n_failed", r.failures.size()},
          {"dr", r.dr},
          {"dc", r.dc},
          {"dbq", r.dbq},
          {"dbq_by_dim", {{"ms", r.dbq_by_dim.ms}, {"bc", r.dbq_by_dim.bc}, {"sc", r.dbq_by_dim.sc}, {"nat", r.dbq_by_dim.nat}}},
          {"subject_only", r.subject_only},
          {"per_item", std::move(items)},
          {"failures", std::move(failures)}};
}

inline ModelReport model_report_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "report";
  detail::check_keys(j, {"model_name", "n_items", "n_failed", "dr", "dc", "dbq", "dbq_by_dim", "subject_only",
                         "per_item", "failures"},
                     ctx);
  ModelReport r;
  r.model_name = detail::read_req<std::string>(j, "model_name", ctx);
  r.n_items = detail::read_req<std::size_t>(j, "n_items", ctx);
  r.dr = detail::read_req<double>(j, "dr", ctx);
  r.dc = detail::read_req<double>(j, "dc", ctx);
  r.dbq = detail::read_req<double>(j, "dbq", ctx);
  detail::read_opt(j, "subject_only", r.subject_only, ctx);
  const auto dims = detail::read_req<nlohmann::json>(j, "dbq_by_dim", ctx);
  r.dbq_by_dim = {detail::read_req<double>(dims, "ms", ctx), detail::read_req<double>(dims, "bc", ctx),
                  detail::read_req<double>(dims, "sc", ctx), detail::read_req<double>(dims, "nat", ctx)};
  for (const auto& ji : detail::read_req<nlohmann::json>(j, "per_item", ctx)) {
    ItemResult it;
    it.item_id = detail::read_req<std::string>(ji, "item_id", ctx);
    it.degree = detail::read_req<int>(ji, "degree", ctx);
    detail::read_opt(ji, "degree_source", it.degree_source, ctx);
    it.score = detail::read_req<double>(ji, "score", ctx);
    it.q = detail::read_req<double>(ji, "q", ctx);
    it.dbq_contrib = detail::read_req<double>(ji, "dbq_contrib", ctx);
    detail::read_opt(ji, "ms", it.ms, ctx);
    detail::read_opt(ji, "bc", it.bc, ctx);
    detail::read_opt(ji, "sc", it.sc, ctx);
    detail::read_opt(ji, "nat", it.nat, ctx);
    detail::read_opt(ji, "nat_source", it.nat_source, ctx);
    r.per_item.push_back(std::move(it));
  }
  if (j.contains("failures"))
    for (const auto& jf : j.at("failures"))
      r.failures.push_back({detail::read_req<std::string>(jf, "item_id", ctx), detail::read_req<std::string>(jf, "error", ctx)});
  if (r.per_item.size() != r.n_items) throw input_error("report: n_items does not match per_item");
  return r;
}

inline ModelReport load_report(const fs::path& path) { return model_report_from_json(detail::read_json_file(path)); }

/// Fills the aggregate fields from `per_item` (sorted by item_id first).
inline void aggregate_report(ModelReport& r) {
  std::sort(r.per_item.begin(), r.per_item.end(), [](auto& a, auto& b) { return a.item_id < b.item_id; });
  std::sort(r.failures.begin(), r.failures.end(), [](auto& a, auto& b) { return a.item_id < b.item_id; });
  r.n_items = r.per_item.size();
  if (r.per_item.empty()) throw input_error("benchmark: no item could be scored");
  std::vector<double> scores;
  std::vector<std::pair<int, double>> pairs;
  double dbq = 0;
  DimensionScores dims;
  for (const auto& it : r.per_item) {
    scores.push_back(it.score);
    pairs.emplace_back(it.degree, it.score);
    dbq += it.dbq_contrib;
    dims.ms += it.score * 100.0 * it.ms;
    dims.bc += it.score * 100.0 * it.bc;
    dims.sc += it.score * 100.0 * it.sc;
    dims.nat += it.score * 100.0 * it.nat;
  }
  const double n = static_cast<double>(r.n_items);
  r.dr = dynamic_range(scores);
  r.dc = pairs.size() >= 2 ? dynamics_controllability(pairs) : 50.0;
  r.dbq = dbq / n;
  r.dbq_by_dim = {dims.ms / n, dims.bc / n, dims.sc / n, dims.nat / n};
}

struct BenchConfig {
  AnalysisConfig analysis;
  DynamicsConfig dynamics;
  QualityConfig quality;
  std::size_t jobs = 1;
  NaturalnessScorer naturalness_scorer;
};

/// Scores every item; degrees come from the manifest, else `annotator`
/// (cache, then client, then lexicon). Items that fail are listed, not scored.
inline ModelReport run_benchmark(const BenchManifest& manifest, const BenchConfig& cfg, DegreeAnnotator& annotator) {
  struct Outcome {
    std::optional<ItemResult> result;
    std::optional<ItemFailure> failure;
  };
  auto score_item = [&](const BenchItem& item) -> Outcome {
    try {
      ItemResult r;
      r.item_id = item.item_id;
      if (item.degree) {
        r.degree = *item.degree;
        r.degree_source = "manifest";
      } else {
        const auto ann = annotator.annotate({item.item_id, item.prompt, item.image_path});
        r.degree = ann.degree;
        r.degree_source = to_string(ann.source);
      }
      FrameSequence seq = load_sequence(item.video_dir);
      seq.item_id = item.item_id;
      const auto analysis = analyze_video(seq, cfg.analysis);
      const auto dyn = dynamic_score(analysis, cfg.dynamics, cfg.analysis.trim);
      const auto qual = quality_profile(analysis, dyn, cfg.quality, cfg.naturalness_scorer);
      r.score = dyn.score;
      r.q = qual.q;
      r.dbq_contrib = qual.dbq_contrib;
      r.ms = qual.ms;
      r.bc = qual.bc;
      r.sc = qual.sc;
      r.nat = qual.nat;
      r.nat_source = qual.nat_source;
      return {r, std::nullopt};
    } catch (const Error& e) {
      return {std::nullopt, ItemFailure{item.item_id, e.what()}};
    }
  };
  const auto outcomes = parallel_map(manifest.items, cfg.jobs, score_item);

  ModelReport report;
  report.model_name = manifest.model_name;
  report.subject_only = cfg.dynamics.subject_only;
  for (const auto& o : outcomes) {
    if (o.result) report.per_item.push_back(*o.result);
    if (o.failure) report.failures.push_back(*o.failure);
  }
  if (report.per_item.empty()) {
    std::string why = manifest.items.empty() ? "manifest has no items" : "all items failed";
    if (!report.failures.empty()) why += " (first: " + report.failures.front().item_id + ": " + report.failures.front().error + ")";
    throw input_error("benchmark " + manifest.model_name + ": " + why);
  }
  aggregate_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string file_safe(std::string_view name) {
  std::string out(name);
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return out;
}

inline std::string number_text(double x) { return nlohmann::json(x).dump(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string report_csv(const ModelReport& r) {
  std::ostringstream out;
  out << "item_id,degree,degree_source,score,q,dbq_contrib,ms,bc,sc,nat\n";
  for (const auto& it : r.per_item)
    out << csv_field(it.item_id) << ',' << it.degree << ',' << it.degree_source << ',' << number_text(it.score) << ','
        << number_text(it.q) << ',' << number_text(it.dbq_contrib) << ',' << number_text(it.ms) << ','
        << number_text(it.bc) << ',' << number_text(it.sc) << ',' << number_text(it.nat) << '\n';
  return out.str();
}

/// Markdown table, one row per model, highest DBQ first (ties by name).
inline std::string leaderboard_markdown(std::vector<ModelReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const ModelReport& a, const ModelReport& b) {
    if (a.dbq != b.dbq) return a.dbq > b.dbq;
    return a.model_name < b.model_name;
  });
  std::ostringstream out;
  out << "| Model | Items | DR | DC | DBQ | MS | BC | SC | Nat |\n";
  out << "|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    out << "| " << r.model_name << " | " << r.n_items << " | " << fixed2(r.dr) << " | " << fixed2(r.dc) << " | "
        << fixed2(r.dbq) << " | " << fixed2(r.dbq_by_dim.ms) << " | " << fixed2(r.dbq_by_dim.bc) << " | "
        << fixed2(r.dbq_by_dim.sc) << " | " << fixed2(r.dbq_by_dim.nat) << " |\n";
  }
  return out.str();
}

struct ReportFormats {
  bool json = true;
  bool csv = true;
  bool md = true;
};

/// Writes report_<model>.json/.csv and leaderboard.md; returns the paths written.
inline std::vector<fs::path> emit_report(const ModelReport& r, const fs::path& out_dir, ReportFormats formats = {}) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw input_error("cannot create output directory " + out_dir.string());
  std::vector<fs::path> written;
  const std::string stem = "report_" + file_safe(r.model_name);
  if (formats.json) {
    written.push_back(out_dir / (stem + ".json"));
    detail::write_text_file(written.back(), to_json(r).dump(2) + "\n");
  }
  if (formats.csv) {
    written.push_back(out_dir / (stem + ".csv"));
    detail::write_text_file(written.back(), report_csv(r));
  }
  if (formats.md) {
    written.push_back(out_dir / "leaderboard.md");
    detail::write_text_file(written.back(), leaderboard_markdown({r}));
  }
  return written;
}

}  // namespace dive
