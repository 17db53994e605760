#pragma once

// Ranking study: rank-to-points conversion, abstention-aware aggregation and
// the append-only JSONL response log.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dive/detail/format.hpp"
#include "dive/detail/json_util.hpp"
#include "dive/error.hpp"

namespace dive {

enum class StudyDimension { Dynamics, Naturalness, TextCompliance, Overall };

inline const char* to_string(StudyDimension d) {
  switch (d) {
    case StudyDimension::Dynamics: return "dynamics";
    case StudyDimension::Naturalness: return "naturalness";
    case StudyDimension::TextCompliance: return "text_compliance";
    case StudyDimension::Overall: return "overall";
  }
  return "?";
}

inline StudyDimension study_dimension_from_string(const std::string& s) {
  for (auto d : {StudyDimension::Dynamics, StudyDimension::Naturalness, StudyDimension::TextCompliance,
                 StudyDimension::Overall})
    if (s == to_string(d)) return d;
  throw input_error("unknown study dimension '" + s + "'");
}

/// One volunteer's answer for one item and dimension: a full ranking (best first) or an abstention.
struct RankingRecord {
  std::string volunteer_id;
  std::string item_id;
  StudyDimension dimension = StudyDimension::Overall;
  std::vector<std::string> ranking;
  bool abstain = false;
  std::string timestamp;

  bool operator==(const RankingRecord&) const = default;
};

inline nlohmann::json to_json(const RankingRecord& r) {
  nlohmann::json j{{"volunteer_id", r.volunteer_id},
                   {"item_id", r.item_id},
                   {"dimension", to_string(r.dimension)},
                   {"abstain", r.abstain}};
  j["ranking"] = r.ranking;
  j["timestamp"] = r.timestamp;
  return j;
}

inline RankingRecord ranking_record_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"volunteer_id", "item_id", "dimension", "ranking", "abstain", "timestamp"}, "ranking record");
  RankingRecord r;
  r.volunteer_id = detail::read_req<std::string>(j, "volunteer_id", "ranking record");
  r.item_id = detail::read_req<std::string>(j, "item_id", "ranking record");
  r.dimension = study_dimension_from_string(detail::read_req<std::string>(j, "dimension", "ranking record"));
  detail::read_opt(j, "ranking", r.ranking, "ranking record");
  detail::read_opt(j, "abstain", r.abstain, "ranking record");
  detail::read_opt(j, "timestamp", r.timestamp, "ranking record");
  return r;
}

struct StudyModel {
  std::string id;
  std::map<std::string, std::filesystem::path> media;  // item_id -> file
};

struct StudyConfig {
  std::string study_id;
  std::vector<StudyModel> models;
  std::vector<std::string> items;
  std::vector<StudyDimension> dimensions;
  int n_volunteers_expected = 0;
  std::filesystem::path store_dir = ".";

  void validate() const {
    if (study_id.empty() || !std::all_of(study_id.begin(), study_id.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
        }))
      throw input_error("study_id must be non-empty and use only [A-Za-z0-9_-]");
    if (models.size() < 2) throw input_error("study needs at least 2 models");
    if (dimensions.empty()) throw input_error("study needs at least one dimension");
    if (items.empty()) throw input_error("study needs at least one item");
    if (n_volunteers_expected < 1) throw input_error("n_volunteers_expected must be >= 1");
    std::set<std::string> ids;
    for (const auto& m : models)
      if (m.id.empty() || !ids.insert(m.id).second) throw input_error("duplicate or empty model id '" + m.id + "'");
    const std::set<std::string> item_set(items.begin(), items.end());
    if (item_set.size() != items.size()) throw input_error("duplicate item id in study");
    if (std::set<StudyDimension>(dimensions.begin(), dimensions.end()).size() != dimensions.size())
      throw input_error("duplicate dimension in study");
    for (const auto& m : models)
      for (const auto& [item, _] : m.media)
        if (!item_set.count(item)) throw input_error("model " + m.id + " has media for unknown item " + item);
  }

  std::size_t model_index(const std::string& id) const {
    for (std::size_t i = 0; i < models.size(); ++i)
      if (models[i].id == id) return i;
    return models.size();
  }
  bool has_item(const std::string& id) const { return std::find(items.begin(), items.end(), id) != items.end(); }
  bool has_dimension(StudyDimension d) const {
    return std::find(dimensions.begin(), dimensions.end(), d) != dimensions.end();
  }

  std::filesystem::path store_path() const { return store_dir / ("study_" + study_id + ".jsonl"); }

  /// Every configured media file must exist.
  void check_media() const {
    for (const auto& m : models)
      for (const auto& [item, path] : m.media)
        if (!std::filesystem::is_regular_file(path))
          throw input_error("media for " + m.id + "/" + item + " not readable: " + path.string());
  }
};

inline StudyConfig study_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  constexpr const char* ctx = "study config";
  detail::check_keys(j, {"study_id", "models", "items", "dimensions", "n_volunteers_expected", "store_dir"}, ctx);
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).lexically_normal();
  };
  StudyConfig c;
  c.study_id = detail::read_req<std::string>(j, "study_id", ctx);
  c.items = detail::read_req<std::vector<std::string>>(j, "items", ctx);
  c.n_volunteers_expected = detail::read_req<int>(j, "n_volunteers_expected", ctx);
  std::vector<std::string> dims{"dynamics", "naturalness", "text_compliance", "overall"};
  detail::read_opt(j, "dimensions", dims, ctx);
  for (const auto& d : dims) c.dimensions.push_back(study_dimension_from_string(d));
  std::string store = ".";
  detail::read_opt(j, "store_dir", store, ctx);
  c.store_dir = resolve(store);
  const auto& models = j.at("models");
  if (!models.is_array()) throw input_error("study config: models must be an array");
  for (const auto& m : models) {
    StudyModel sm;
    if (m.is_string()) {
      sm.id = m.get<std::string>();
    } else {
      detail::check_keys(m, {"id", "media"}, "study model");
      sm.id = detail::read_req<std::string>(m, "id", "study model");
      std::map<std::string, std::string> media;
      detail::read_opt(m, "media", media, "study model");
      for (const auto& [item, path] : media) sm.media[item] = resolve(path);
    }
    c.models.push_back(std::move(sm));
  }
  c.validate();
  return c;
}

inline StudyConfig load_study_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw input_error("study config not found: " + path.string());
  return study_config_from_json(detail::read_json_file(path), path.parent_path());
}

/// Points for finishing at 1-based `position` among `n_models`: first gets n, last gets 1.
inline int weight_of_rank(int position, int n_models) {
  if (n_models < 1 || position < 1 || position > n_models)
    throw input_error("rank " + std::to_string(position) + " outside 1.." + std::to_string(n_models));
  return n_models + 1 - position;
}

/// Throws input_error naming the problem when `r` does not fit the study.
inline void validate_record(const RankingRecord& r, const StudyConfig& cfg) {
  if (r.volunteer_id.empty()) throw input_error("volunteer_id is empty");
  if (!cfg.has_item(r.item_id)) throw input_error("unknown item '" + r.item_id + "'");
  if (!cfg.has_dimension(r.dimension))
    throw input_error(std::string("dimension '") + to_string(r.dimension) + "' is not part of this study");
  if (r.abstain) {
    if (!r.ranking.empty()) throw input_error("abstention must not carry a ranking");
    return;
  }
  if (r.ranking.size() != cfg.models.size())
    throw input_error("ranking must order all " + std::to_string(cfg.models.size()) + " models (got " +
                      std::to_string(r.ranking.size()) + ")");
  std::set<std::string> seen;
  for (const auto& m : r.ranking) {
    if (cfg.model_index(m) == cfg.models.size()) throw input_error("unknown model '" + m + "' in ranking");
    if (!seen.insert(m).second) throw input_error("model '" + m + "' ranked twice");
  }
}

using ResponseKey = std::tuple<std::string, std::string, StudyDimension>;  // volunteer, item, dimension

inline ResponseKey response_key(const RankingRecord& r) { return {r.volunteer_id, r.item_id, r.dimension}; }

// ---------------------------------------------------------------------------
// Aggregation

struct ModelScore {
  std::string model;
  int total_weight = 0;
  double overall_score = 0.0;   // sum over items of item scores
  double normalized_pct = 0.0;  // share of the dimension's total
};

struct ItemScores {
  std::string item_id;
  std::vector<int> weights;     // per model, config order
  std::vector<double> scores;   // weights / n_volunteers_expected
  int responses = 0;
  int abstentions = 0;
};

struct DimensionResult {
  StudyDimension dimension = StudyDimension::Overall;
  std::vector<ModelScore> models;
  std::vector<ItemScores> items;  // config item order
  int responses = 0;
  int abstentions = 0;
};

struct StudyResults {
  std::string study_id;
  int n_volunteers_expected = 0;
  std::vector<DimensionResult> dimensions;
};

/// 100 * x_i / sum(x); all zeros when the sum is zero.
inline std::vector<double> normalize_scores(const std::vector<double>& overall) {
  double total = 0.0;
  for (double v : overall) {
    if (!(v >= 0)) throw input_error("scores must be non-negative");
    total += v;
  }
  std::vector<double> out(overall.size(), 0.0);
  if (total > 0)
    for (std::size_t i = 0; i < overall.size(); ++i) out[i] = 100.0 * overall[i] / total;
  return out;
}

/// Per item and dimension, each model's points summed over responding volunteers and divided by
/// the expected volunteer count (abstainers stay in the denominator); overall = sum over items.
inline StudyResults aggregate_study(const std::vector<RankingRecord>& records, const StudyConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.models.size();
  const double v = cfg.n_volunteers_expected;
  StudyResults out{cfg.study_id, cfg.n_volunteers_expected, {}};
  std::map<StudyDimension, std::size_t> dim_index;
  std::map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < cfg.items.size(); ++i) item_index[cfg.items[i]] = i;
  for (auto d : cfg.dimensions) {
    dim_index[d] = out.dimensions.size();
    DimensionResult dr{d, {}, {}, 0, 0};
    for (const auto& m : cfg.models) dr.models.push_back({m.id, 0, 0.0, 0.0});
    for (const auto& it : cfg.items) dr.items.push_back({it, std::vector<int>(n, 0), std::vector<double>(n, 0.0), 0, 0});
    out.dimensions.push_back(std::move(dr));
  }

  std::set<ResponseKey> seen;
  for (const auto& r : records) {
    validate_record(r, cfg);
    if (!seen.insert(response_key(r)).second)
      throw input_error("duplicate response from " + r.volunteer_id + " for " + r.item_id + "/" + to_string(r.dimension));
    auto& dr = out.dimensions[dim_index.at(r.dimension)];
    auto& item = dr.items[item_index.at(r.item_id)];
    if (item.responses + item.abstentions >= cfg.n_volunteers_expected)
      throw input_error("more answers than n_volunteers_expected for " + r.item_id + "/" + to_string(r.dimension));
    if (r.abstain) {
      ++item.abstentions;
      ++dr.abstentions;
      continue;
    }
    ++item.responses;
    ++dr.responses;
    for (std::size_t p = 0; p < r.ranking.size(); ++p)
      item.weights[cfg.model_index(r.ranking[p])] += weight_of_rank(static_cast<int>(p) + 1, static_cast<int>(n));
  }

  for (auto& dr : out.dimensions) {
    std::vector<double> overall(n, 0.0);
    for (auto& item : dr.items)
      for (std::size_t m = 0; m < n; ++m) {
        item.scores[m] = item.weights[m] / v;
        dr.models[m].total_weight += item.weights[m];
      }
    for (std::size_t m = 0; m < n; ++m) overall[m] = dr.models[m].overall_score = dr.models[m].total_weight / v;
    const auto pct = normalize_scores(overall);
    for (std::size_t m = 0; m < n; ++m) dr.models[m].normalized_pct = pct[m];
  }
  return out;
}

/// 1-based positions by overall score, ties share the better position.
inline std::vector<int> score_ranks(const DimensionResult& d) {
  std::vector<int> ranks;
  for (const auto& m : d.models) {
    int better = 0;
    for (const auto& o : d.models) better += o.overall_score > m.overall_score;
    ranks.push_back(better + 1);
  }
  return ranks;
}

inline nlohmann::json to_json(const StudyResults& r) {
  nlohmann::json dims = nlohmann::json::object();
  for (const auto& d : r.dimensions) {
    nlohmann::json models = nlohmann::json::array();
    const auto ranks = score_ranks(d);
    for (std::size_t m = 0; m < d.models.size(); ++m)
      models.push_back({{"model", d.models[m].model},
                        {"total_weight", d.models[m].total_weight},
                        {"overall_score", d.models[m].overall_score},
                        {"normalized_pct", d.models[m].normalized_pct},
                        {"rank", ranks[m]}});
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : d.items) {
      nlohmann::json scores = nlohmann::json::object();
      for (std::size_t m = 0; m < d.models.size(); ++m) scores[d.models[m].model] = it.scores[m];
      items.push_back({{"item_id", it.item_id},
                       {"scores", scores},
                       {"responses", it.responses},
                       {"abstentions", it.abstentions}});
    }
    dims[to_string(d.dimension)] = {
        {"models", models}, {"items", items}, {"responses", d.responses}, {"abstentions", d.abstentions}};
  }
  return {{"study_id", r.study_id}, {"n_volunteers_expected", r.n_volunteers_expected}, {"dimensions", dims}};
}

/// Plain-text summary: one block per dimension, one line per model.
inline std::string study_results_text(const StudyResults& r) {
  std::string out;
  for (const auto& d : r.dimensions) {
    out += std::string(to_string(d.dimension)) + " (" + std::to_string(d.responses) + " rankings, " +
           std::to_string(d.abstentions) + " abstentions)\n";
    const auto ranks = score_ranks(d);
    for (std::size_t m = 0; m < d.models.size(); ++m) {
      char line[256];
      std::snprintf(line, sizeof line, "  %-24s score %9.2f  share %6.2f%%  rank %d\n", d.models[m].model.c_str(),
                    d.models[m].overall_score, d.models[m].normalized_pct, ranks[m]);
      out += line;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Store

struct StoreProblem {
  std::size_t line = 0;
  std::string message;
};

struct StoreContents {
  std::vector<RankingRecord> records;
  std::vector<StoreProblem> problems;
};

/// Reads every line, collecting malformed ones instead of stopping. A missing file is an empty store.
inline StoreContents read_store(const std::filesystem::path& path, const StudyConfig& cfg) {
  StoreContents out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open store " + path.string());
  std::set<ResponseKey> seen;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      auto r = ranking_record_from_json(nlohmann::json::parse(line));
      validate_record(r, cfg);
      if (!seen.insert(response_key(r)).second) throw input_error("duplicate response");
      out.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      out.problems.push_back({no, e.what()});
    } catch (const Error& e) {
      out.problems.push_back({no, e.what()});
    }
  }
  if (in.bad()) throw input_error("read failed for store " + path.string());
  return out;
}

/// Strict load: the first malformed line is an error naming its line number.
inline std::vector<RankingRecord> load_store(const std::filesystem::path& path, const StudyConfig& cfg) {
  auto c = read_store(path, cfg);
  if (!c.problems.empty()) {
    const auto& p = c.problems.front();
    std::string msg = path.string() + ":" + std::to_string(p.line) + ": " + p.message;
    if (c.problems.size() > 1) msg += " (" + std::to_string(c.problems.size() - 1) + " more bad lines)";
    throw input_error(msg);
  }
  return std::move(c.records);
}

inline void append_store(const std::filesystem::path& path, const RankingRecord& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw input_error("cannot open store " + path.string() + " for append");
  out << to_json(r).dump() << '\n';
  out.flush();
  if (!out) throw input_error("append failed for store " + path.string());
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace dive
