#pragma once

// JSON run configuration shared by every subcommand. Unknown keys and
// out-of-range values are errors.

#include <filesystem>
#include <string>

#include "dive/curation.hpp"
#include "dive/detail/json_util.hpp"
#include "dive/dynamics.hpp"
#include "dive/prompt_degree.hpp"
#include "dive/quality.hpp"

namespace dive {

struct RunPaths {
  std::filesystem::path degree_cache;  // JSONL; empty = in-memory only
  std::filesystem::path lexicon;       // TSV; empty = built-in
  std::filesystem::path request_template;
};

struct Config {
  AnalysisConfig analysis;
  DynamicsConfig dynamics;
  QualityConfig quality;
  CurationConfig curation;
  LlmClientConfig llm;
  RunPaths paths;
  std::size_t jobs = 0;  // 0 = logical CPUs
  std::uint64_t seed = 0;

  void validate() const {
    auto range = [](double v, double lo, double hi, const char* name) {
      if (!(v >= lo && v <= hi))
        throw input_error(std::string(name) + " must be in [" + detail::json(lo).dump() + ", " + detail::json(hi).dump() +
                          "], got " + detail::json(v).dump());
    };
    const auto& f = analysis.flow;
    range(f.block, 4, 128, "flow.block");
    range(f.levels, 1, 8, "flow.levels");
    range(f.search_coarse, 1, 64, "flow.search_coarse");
    range(f.search_refine, 1, 32, "flow.search_refine");
    range(analysis.max_dim, 32, 16384, "analysis.max_dim");
    range(analysis.trim.median_factor, 1, 100, "trim.median_factor");
    range(analysis.trim.floor_px, 0, 1000, "trim.floor_px");
    range(analysis.trim.passes, 0, 10, "trim.passes");
    range(dynamics.d_ref, 1e-6, 1, "dynamics.d_ref");
    range(quality.a_ref, 1e-6, 1, "quality.a_ref");
    range(quality.r_ref, 1e-6, 1, "quality.r_ref");
    range(quality.gamma, 0, 10, "quality.gamma");
    range(static_cast<double>(jobs), 0, 1024, "jobs");
    curation.validate();
    llm.validate();
  }
};

namespace detail {

template <typename T>
void read_section(const json& root, const char* name, std::initializer_list<std::string_view> keys, T&& reader) {
  const auto it = root.find(name);
  if (it == root.end() || it->is_null()) return;
  check_keys(*it, keys, name);
  reader(*it, std::string(name));
}

}  // namespace detail

/// Relative paths resolve against `base_dir`.
inline Config config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read_opt;
  detail::check_keys(j, {"flow", "analysis", "trim", "dynamics", "quality", "curation", "llm", "paths", "jobs", "seed"},
                     "config");
  Config c;
  detail::read_section(j, "flow", {"block", "levels", "search_coarse", "search_refine"}, [&](auto& s, auto ctx) {
    read_opt(s, "block", c.analysis.flow.block, ctx);
    read_opt(s, "levels", c.analysis.flow.levels, ctx);
    read_opt(s, "search_coarse", c.analysis.flow.search_coarse, ctx);
    read_opt(s, "search_refine", c.analysis.flow.search_refine, ctx);
  });
  detail::read_section(j, "analysis", {"max_dim"}, [&](auto& s, auto ctx) { read_opt(s, "max_dim", c.analysis.max_dim, ctx); });
  detail::read_section(j, "trim", {"median_factor", "floor_px", "passes"}, [&](auto& s, auto ctx) {
    read_opt(s, "median_factor", c.analysis.trim.median_factor, ctx);
    read_opt(s, "floor_px", c.analysis.trim.floor_px, ctx);
    read_opt(s, "passes", c.analysis.trim.passes, ctx);
  });
  detail::read_section(j, "dynamics", {"d_ref", "subject_only"}, [&](auto& s, auto ctx) {
    read_opt(s, "d_ref", c.dynamics.d_ref, ctx);
    read_opt(s, "subject_only", c.dynamics.subject_only, ctx);
  });
  detail::read_section(j, "quality", {"a_ref", "r_ref", "gamma"}, [&](auto& s, auto ctx) {
    read_opt(s, "a_ref", c.quality.a_ref, ctx);
    read_opt(s, "r_ref", c.quality.r_ref, ctx);
    read_opt(s, "gamma", c.quality.gamma, ctx);
  });
  detail::read_section(j, "curation",
                       {"hist_thresh", "loss_thresh", "lost_cost", "static_shift", "static_scale", "static_rotation",
                        "motion_shift", "motion_scale", "motion_rotation", "residual_ratio", "min_inlier_frac"},
                       [&](auto& s, auto ctx) {
                         auto& k = c.curation;
                         read_opt(s, "hist_thresh", k.hist_thresh, ctx);
                         read_opt(s, "loss_thresh", k.loss_thresh, ctx);
                         read_opt(s, "lost_cost", k.lost_cost, ctx);
                         read_opt(s, "static_shift", k.static_shift, ctx);
                         read_opt(s, "static_scale", k.static_scale, ctx);
                         read_opt(s, "static_rotation", k.static_rotation, ctx);
                         read_opt(s, "motion_shift", k.motion_shift, ctx);
                         read_opt(s, "motion_scale", k.motion_scale, ctx);
                         read_opt(s, "motion_rotation", k.motion_rotation, ctx);
                         read_opt(s, "residual_ratio", k.residual_ratio, ctx);
                         read_opt(s, "min_inlier_frac", k.min_inlier_frac, ctx);
                       });
  detail::read_section(j, "llm", {"endpoint", "model", "api_key_env", "timeout", "max_retries", "max_in_flight"},
                       [&](auto& s, auto ctx) {
                         read_opt(s, "endpoint", c.llm.endpoint, ctx);
                         read_opt(s, "model", c.llm.model, ctx);
                         read_opt(s, "api_key_env", c.llm.api_key_env, ctx);
                         read_opt(s, "timeout", c.llm.timeout, ctx);
                         read_opt(s, "max_retries", c.llm.max_retries, ctx);
                         read_opt(s, "max_in_flight", c.llm.max_in_flight, ctx);
                       });
  detail::read_section(j, "paths", {"degree_cache", "lexicon", "request_template"}, [&](auto& s, auto ctx) {
    auto path = [&](const char* key, std::filesystem::path& out) {
      std::string p;
      read_opt(s, key, p, ctx);
      if (p.empty()) return;
      out = p;
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
    };
    path("degree_cache", c.paths.degree_cache);
    path("lexicon", c.paths.lexicon);
    path("request_template", c.paths.request_template);
  });
  long long jobs = 0;
  detail::read_opt(j, "jobs", jobs, "config");
  if (jobs < 0) throw input_error("jobs must be >= 0");
  c.jobs = static_cast<std::size_t>(jobs);
  detail::read_opt(j, "seed", c.seed, "config");
  c.validate();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw input_error("config not found: " + path.string());
  return config_from_json(detail::read_json_file(path), path.parent_path());
}

}  // namespace dive
