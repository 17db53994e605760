#pragma once

// Per-video dynamic score s in [0, 1] from block-flow magnitudes.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dive/detail/json_util.hpp"
#include "dive/flow.hpp"
#include "dive/global_motion.hpp"

namespace dive {

struct AnalysisConfig {
  FlowParams flow;
  int max_dim = 512;
  TrimParams trim;
};

/// A clip at flow resolution together with its consecutive-pair flow fields.
struct VideoAnalysis {
  FrameSequence seq;
  std::vector<FlowField> flows;  // flows[k] maps frame k -> k+1

  double diagonal() const { return seq.diagonal(); }
};

inline VideoAnalysis analyze_video(const FrameSequence& input, const AnalysisConfig& cfg = {}) {
  if (input.size() < 2) throw input_error("video needs at least 2 frames: " + input.item_id);
  VideoAnalysis out{downscale_for_flow(input, cfg.max_dim), {}};
  out.flows.reserve(out.seq.size() - 1);
  for (std::size_t k = 0; k + 1 < out.seq.size(); ++k)
    out.flows.push_back(estimate_flow(out.seq.frames[k], out.seq.frames[k + 1], cfg.flow));
  return out;
}

struct DynamicsConfig {
  double d_ref = 0.02;  // per-pair motion (fraction of diagonal) that saturates s
  bool subject_only = false;
};

struct DynamicsProfile {
  std::string item_id;
  std::vector<double> per_pair_motion;  // interior mean magnitude / diagonal
  double raw_mean = 0.0;
  double score = 0.0;
  bool subject_only = false;
};

inline DynamicsProfile dynamic_score(const VideoAnalysis& analysis, const DynamicsConfig& cfg = {},
                                     const TrimParams& trim = {}) {
  if (analysis.flows.empty()) throw input_error("dynamic_score: need at least 2 frames");
  if (!(cfg.d_ref > 0)) throw input_error("dynamic_score: d_ref must be positive");
  const double diag = analysis.diagonal();
  DynamicsProfile p;
  p.item_id = analysis.seq.item_id;
  p.subject_only = cfg.subject_only;
  for (const FlowField& f : analysis.flows) {
    const auto blocks = interior_blocks(f);
    double magnitude = 0.0;
    if (cfg.subject_only) {
      const GlobalMotion g = fit_global_motion(f, blocks, trim);
      double sum = 0.0;
      for (auto idx : blocks) {
        const double x = f.center_x(idx), y = f.center_y(idx);
        const double du = g.reliable ? f.u[idx] - g.predicted_u(x, y) : f.u[idx];
        const double dv = g.reliable ? f.v[idx] - g.predicted_v(x, y) : f.v[idx];
        sum += std::hypot(du, dv);
      }
      magnitude = blocks.empty() ? 0.0 : sum / static_cast<double>(blocks.size());
    } else {
      magnitude = mean_magnitude(f, blocks);
    }
    p.per_pair_motion.push_back(magnitude / diag);
  }
  double sum = 0.0;
  for (double m : p.per_pair_motion) sum += m;
  p.raw_mean = sum / static_cast<double>(p.per_pair_motion.size());
  p.score = std::clamp(p.raw_mean / cfg.d_ref, 0.0, 1.0);
  return p;
}

inline DynamicsProfile dynamic_score(const FrameSequence& seq, const DynamicsConfig& cfg = {},
                                     const AnalysisConfig& analysis_cfg = {}) {
  if (seq.size() < 2) throw input_error("dynamic_score: single-frame sequence " + seq.item_id);
  return dynamic_score(analyze_video(seq, analysis_cfg), cfg, analysis_cfg.trim);
}

inline bool is_static(const DynamicsProfile& p, double eps = 1e-4) { return p.raw_mean < eps; }

inline nlohmann::json to_json(const DynamicsProfile& p) {
  return {{"item_id", p.item_id},
          {"score", p.score},
          {"raw_mean", p.raw_mean},
          {"per_pair_motion", p.per_pair_motion},
          {"subject_only", p.subject_only}};
}

}  // namespace dive
