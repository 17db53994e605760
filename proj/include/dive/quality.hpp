#pragma once

// Quality sub-metrics (motion smoothness, background/subject consistency,
// naturalness) and the dynamics-gated per-video quality contribution.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dive/dynamics.hpp"
#include "dive/histogram.hpp"

namespace dive {

struct QualityConfig {
  double a_ref = 0.01;  // mean acceleration (fraction of diagonal) that zeroes ms
  double r_ref = 0.1;   // mean warp residual (fraction of 255) that zeroes nat
  double gamma = 1.0;   // exponent on s in the gate
};

struct SmoothnessResult {
  double ms = 1.0;
  bool insufficient_evidence = false;  // fewer than two flow fields
};

inline SmoothnessResult motion_smoothness(const std::vector<FlowField>& flows, double diag, double a_ref = 0.01) {
  if (flows.size() < 2) return {1.0, true};
  if (!(diag > 0) || !(a_ref > 0)) throw input_error("motion_smoothness: diag and a_ref must be positive");
  const auto blocks = interior_blocks(flows.front());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < flows.size(); ++k) {
    const FlowField &f0 = flows[k], &f1 = flows[k + 1];
    if (f0.grid_w != f1.grid_w || f0.grid_h != f1.grid_h)
      throw input_error("motion_smoothness: flow grids differ");
    double sum = 0.0;
    for (auto idx : blocks) sum += std::hypot(f1.u[idx] - f0.u[idx], f1.v[idx] - f0.v[idx]);
    total += blocks.empty() ? 0.0 : sum / static_cast<double>(blocks.size()) / diag;
  }
  const double accel = total / static_cast<double>(flows.size() - 1);
  return {1.0 - std::clamp(accel / a_ref, 0.0, 1.0), false};
}

enum class Region { Background, Subject };

/// Interior blocks split by time-averaged motion: the lowest quartile is
/// background, the highest is subject. Ties resolve by block index.
inline std::vector<std::size_t> select_region_blocks(const std::vector<FlowField>& flows, Region region) {
  if (flows.empty()) throw input_error("region_consistency: no flow fields");
  auto blocks = interior_blocks(flows.front());
  const std::size_t quartile = blocks.size() / 4;
  if (quartile == 0) throw input_error("region_consistency: fewer than 4 interior blocks");
  std::vector<double> avg(flows.front().size(), 0.0);
  for (const auto& f : flows)
    for (auto idx : blocks) avg[idx] += std::hypot(f.u[idx], f.v[idx]);
  std::stable_sort(blocks.begin(), blocks.end(), [&](std::size_t a, std::size_t b) { return avg[a] < avg[b]; });
  if (region == Region::Background) return {blocks.begin(), blocks.begin() + static_cast<std::ptrdiff_t>(quartile)};
  return {blocks.end() - static_cast<std::ptrdiff_t>(quartile), blocks.end()};
}

inline double region_consistency(const FrameSequence& seq, const std::vector<FlowField>& flows, Region region) {
  if (flows.size() + 1 != seq.size()) throw input_error("region_consistency: flows do not match sequence");
  const auto blocks = select_region_blocks(flows, region);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const FlowField& f = flows[k];
    for (auto idx : blocks) {
      const int x0 = static_cast<int>(idx % f.grid_w) * f.block, y0 = static_cast<int>(idx / f.grid_w) * f.block;
      int x1 = x0, y1 = y0;
      if (region == Region::Subject) {
        x1 += static_cast<int>(std::lround(f.u[idx]));
        y1 += static_cast<int>(std::lround(f.v[idx]));
      }
      sum += histogram_intersection(region_histogram(seq.frames[k], x0, y0, f.block),
                                    region_histogram(seq.frames[k + 1], x1, y1, f.block));
      ++count;
    }
  }
  return count == 0 ? 1.0 : sum / static_cast<double>(count);
}

/// External naturalness verdict in [0, 1]; nullopt or an exception means failure.
using NaturalnessScorer = std::function<std::optional<double>(const FrameSequence&)>;

struct NaturalnessResult {
  double nat = 1.0;
  std::string source = "proxy";
  std::optional<std::string> warning;
};

inline double naturalness_proxy(const FrameSequence& seq, const std::vector<FlowField>& flows, double r_ref = 0.1) {
  if (flows.size() + 1 != seq.size()) throw input_error("naturalness: flows do not match sequence");
  if (flows.empty()) return 1.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < flows.size(); ++k)
    sum += warp_residual(seq.frames[k], seq.frames[k + 1], flows[k], /*interior_only=*/true);
  const double mean = sum / static_cast<double>(flows.size());
  return 1.0 - std::clamp(mean / 255.0 / r_ref, 0.0, 1.0);
}

inline NaturalnessResult naturalness(const FrameSequence& seq, const std::vector<FlowField>& flows,
                                     const NaturalnessScorer& scorer = {}, double r_ref = 0.1) {
  NaturalnessResult out;
  if (scorer) {
    try {
      if (auto v = scorer(seq); v && std::isfinite(*v) && *v >= 0.0 && *v <= 1.0) {
        out.nat = *v;
        out.source = "external";
        return out;
      }
      out.warning = "external naturalness scorer returned no valid verdict; using proxy";
    } catch (const std::exception& e) {
      out.warning = std::string("external naturalness scorer failed (") + e.what() + "); using proxy";
    }
  }
  out.nat = naturalness_proxy(seq, flows, r_ref);
  return out;
}

struct QualityProfile {
  double ms = 1.0;
  double bc = 1.0;
  double sc = 1.0;
  double nat = 1.0;
  double q = 100.0;
  double dbq_contrib = 0.0;
  std::string nat_source = "proxy";
  bool ms_insufficient = false;
  std::vector<std::string> warnings;
};

/// q = 100 * mean(ms, bc, sc, nat); dbq_contrib = s^gamma * q.
inline double gated_contribution(double score, double q, double gamma = 1.0) {
  return (gamma == 1.0 ? score : std::pow(score, gamma)) * q;
}

inline QualityProfile quality_profile(const VideoAnalysis& analysis, const DynamicsProfile& dyn,
                                      const QualityConfig& cfg = {}, const NaturalnessScorer& scorer = {}) {
  QualityProfile p;
  const auto sm = motion_smoothness(analysis.flows, analysis.diagonal(), cfg.a_ref);
  p.ms = sm.ms;
  p.ms_insufficient = sm.insufficient_evidence;
  if (sm.insufficient_evidence) p.warnings.push_back("motion smoothness: fewer than 2 flow fields, ms set to 1");
  p.bc = region_consistency(analysis.seq, analysis.flows, Region::Background);
  p.sc = region_consistency(analysis.seq, analysis.flows, Region::Subject);
  auto nat = naturalness(analysis.seq, analysis.flows, scorer, cfg.r_ref);
  p.nat = nat.nat;
  p.nat_source = nat.source;
  if (nat.warning) p.warnings.push_back(*nat.warning);
  p.q = 100.0 * (p.ms + p.bc + p.sc + p.nat) / 4.0;
  p.dbq_contrib = gated_contribution(dyn.score, p.q, cfg.gamma);
  return p;
}

inline QualityProfile quality_profile(const FrameSequence& seq, const DynamicsProfile& dyn,
                                      const QualityConfig& cfg = {}, const AnalysisConfig& analysis_cfg = {},
                                      const NaturalnessScorer& scorer = {}) {
  return quality_profile(analyze_video(seq, analysis_cfg), dyn, cfg, scorer);
}

inline nlohmann::json to_json(const QualityProfile& p) {
  return {{"ms", p.ms}, {"bc", p.bc}, {"sc", p.sc}, {"nat", p.nat}, {"q", p.q}, {"dbq_contrib", p.dbq_contrib},
          {"nat_source", p.nat_source}, {"ms_insufficient", p.ms_insufficient}};
}

}  // namespace dive
