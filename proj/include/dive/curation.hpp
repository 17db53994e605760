#pragma once

// Clip filtering: transition (cut) detection and single-camera-motion checks.
//
// Camera motion is named after the direction the *content* moves: content
// drifting toward +x is pan_right, toward +y (down the image) is tilt_down,
// content growing (k > 1) is zoom_in.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dive/detail/json_util.hpp"
#include "dive/dynamics.hpp"
#include "dive/global_motion.hpp"
#include "dive/histogram.hpp"
#include "dive/parallel.hpp"

namespace dive {

enum class CameraMotion {
  Static,
  PanLeft,
  PanRight,
  TiltUp,
  TiltDown,
  ZoomIn,
  ZoomOut,
  Rotate,
  Mixed,
  Uncertain,
};

inline std::string to_string(CameraMotion m) {
  switch (m) {
    case CameraMotion::Static: return "static";
    case CameraMotion::PanLeft: return "pan_left";
    case CameraMotion::PanRight: return "pan_right";
    case CameraMotion::TiltUp: return "tilt_up";
    case CameraMotion::TiltDown: return "tilt_down";
    case CameraMotion::ZoomIn: return "zoom_in";
    case CameraMotion::ZoomOut: return "zoom_out";
    case CameraMotion::Rotate: return "rotate";
    case CameraMotion::Mixed: return "mixed";
    case CameraMotion::Uncertain: return "uncertain";
  }
  return "uncertain";
}

inline CameraMotion camera_motion_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(CameraMotion::Uncertain); ++i)
    if (to_string(static_cast<CameraMotion>(i)) == s) return static_cast<CameraMotion>(i);
  throw input_error("unknown camera motion '" + std::string(s) + "'");
}

struct CurationConfig {
  double hist_thresh = 0.5;      // frame-histogram intersection below this is a cut
  double loss_thresh = 0.5;      // fraction of lost interior blocks above this is a cut
  double lost_cost = 30.0;       // mean SAD per pixel that counts a block as lost
  double static_shift = 0.002;   // x diagonal
  double static_scale = 0.001;
  double static_rotation = 0.001;
  double motion_shift = 0.004;   // x diagonal
  double motion_scale = 0.002;
  double motion_rotation = 0.002;
  double residual_ratio = 0.3;   // residual_rms vs mean flow magnitude
  double min_inlier_frac = 0.6;

  void validate() const {
    auto in01 = [](double v, const char* name) {
      if (!(v >= 0 && v <= 1)) throw input_error(std::string("curation.") + name + " must be in [0, 1]");
    };
    in01(hist_thresh, "hist_thresh");
    in01(loss_thresh, "loss_thresh");
    in01(min_inlier_frac, "min_inlier_frac");
    for (double v : {lost_cost, static_shift, static_scale, static_rotation, motion_shift, motion_scale,
                     motion_rotation, residual_ratio})
      if (!(v > 0)) throw input_error("curation thresholds must be positive");
    if (static_shift > motion_shift || static_scale > motion_scale || static_rotation > motion_rotation)
      throw input_error("curation: static thresholds must not exceed motion thresholds");
  }
};

/// Pair indices k (frames k, k+1) that look like transitions.
inline std::vector<std::size_t> detect_cuts(const VideoAnalysis& a, const CurationConfig& cfg = {}) {
  std::vector<std::size_t> cuts;
  for (std::size_t k = 0; k < a.flows.size(); ++k) {
    const double inter =
        histogram_intersection(frame_histogram(a.seq.frames[k]), frame_histogram(a.seq.frames[k + 1]));
    const auto blocks = interior_blocks(a.flows[k]);
    std::size_t lost = 0;
    for (auto idx : blocks)
      if (a.flows[k].cost[idx] > cfg.lost_cost) ++lost;
    const double lost_frac = blocks.empty() ? 0.0 : static_cast<double>(lost) / static_cast<double>(blocks.size());
    if (inter < cfg.hist_thresh || lost_frac > cfg.loss_thresh) cuts.push_back(k);
  }
  return cuts;
}

inline std::vector<std::size_t> detect_cuts(const FrameSequence& seq, const CurationConfig& cfg = {},
                                            const AnalysisConfig& analysis = {}) {
  return detect_cuts(analyze_video(seq, analysis), cfg);
}

/// Pair-averaged similarity parameters plus the evidence used to trust them.
struct CameraMotionEstimate {
  CameraMotion motion = CameraMotion::Uncertain;
  double tx = 0, ty = 0, k = 1, theta = 0;
  double residual_rms = 0;
  double inlier_frac = 0;
  double mean_flow = 0;  // px per pair, interior blocks
  bool reliable = false;
};

/// Classifies pairs [first_pair, last_pair) of the analysis (all pairs by default).
inline CameraMotionEstimate classify_camera_motion(const VideoAnalysis& a, const CurationConfig& cfg = {},
                                                   const TrimParams& trim = {}, std::size_t first_pair = 0,
                                                   std::size_t last_pair = SIZE_MAX) {
  last_pair = std::min(last_pair, a.flows.size());
  CameraMotionEstimate e;
  if (first_pair >= last_pair) return e;
  const double n = static_cast<double>(last_pair - first_pair);
  e.k = 0;
  e.reliable = true;
  for (std::size_t p = first_pair; p < last_pair; ++p) {
    const auto blocks = interior_blocks(a.flows[p]);
    const auto g = fit_global_motion(a.flows[p], blocks, trim);
    e.reliable = e.reliable && g.reliable;
    e.tx += g.tx / n;
    e.ty += g.ty / n;
    e.k += g.k / n;
    e.theta += g.theta / n;
    e.residual_rms += g.residual_rms / n;
    e.inlier_frac += g.inlier_frac / n;
    e.mean_flow += mean_magnitude(a.flows[p], blocks) / n;
  }
  if (!e.reliable || e.residual_rms > cfg.residual_ratio * e.mean_flow || e.inlier_frac < cfg.min_inlier_frac) {
    e.motion = CameraMotion::Uncertain;
    return e;
  }
  const double d = a.diagonal();
  if (std::abs(e.tx) < cfg.static_shift * d && std::abs(e.ty) < cfg.static_shift * d &&
      std::abs(e.k - 1) < cfg.static_scale && std::abs(e.theta) < cfg.static_rotation) {
    e.motion = CameraMotion::Static;
    return e;
  }
  const std::array<double, 4> strength{std::abs(e.tx) / (cfg.motion_shift * d), std::abs(e.ty) / (cfg.motion_shift * d),
                                       std::abs(e.k - 1) / cfg.motion_scale, std::abs(e.theta) / cfg.motion_rotation};
  const std::array<CameraMotion, 4> named{e.tx > 0 ? CameraMotion::PanRight : CameraMotion::PanLeft,
                                          e.ty > 0 ? CameraMotion::TiltDown : CameraMotion::TiltUp,
                                          e.k > 1 ? CameraMotion::ZoomIn : CameraMotion::ZoomOut, CameraMotion::Rotate};
  const auto strong = std::count_if(strength.begin(), strength.end(), [](double s) { return s >= 1.0; });
  if (strong >= 2) {
    e.motion = CameraMotion::Mixed;
  } else if (strong == 1) {
    e.motion = named[static_cast<std::size_t>(std::max_element(strength.begin(), strength.end()) - strength.begin())];
  } else {
    e.motion = CameraMotion::Uncertain;  // moving, but below every category threshold
  }
  return e;
}

struct CurationVerdict {
  std::string item_id;
  CameraMotion camera_motion = CameraMotion::Uncertain;
  std::vector<std::size_t> cuts;
  bool keep = false;
  std::vector<std::string> reasons;
  std::string error;  // io failures only
  CameraMotionEstimate estimate;
};

inline bool verdict_keep(const CurationVerdict& v) {
  return v.cuts.empty() && v.camera_motion != CameraMotion::Mixed && v.camera_motion != CameraMotion::Uncertain;
}

/// Cuts first; cut-free clips are then checked for a single camera motion.
inline CurationVerdict curate_video(const FrameSequence& seq, const CurationConfig& cfg = {},
                                    const AnalysisConfig& analysis_cfg = {}) {
  CurationVerdict v;
  v.item_id = seq.item_id;
  const auto a = analyze_video(seq, analysis_cfg);
  v.cuts = detect_cuts(a, cfg);
  if (!v.cuts.empty()) {
    // Describe the longest cut-free stretch for information; the clip is dropped regardless.
    std::size_t best_begin = 0, best_len = 0, begin = 0;
    auto consider = [&](std::size_t end) {
      if (end > begin && end - begin > best_len) {
        best_begin = begin;
        best_len = end - begin;
      }
    };
    for (auto c : v.cuts) {
      consider(c);
      begin = c + 1;
    }
    consider(a.flows.size());
    v.estimate = classify_camera_motion(a, cfg, analysis_cfg.trim, best_begin, best_begin + best_len);
    v.camera_motion = v.estimate.motion;
    v.reasons.push_back("transition");
  } else {
    v.estimate = classify_camera_motion(a, cfg, analysis_cfg.trim);
    v.camera_motion = v.estimate.motion;
    if (v.camera_motion == CameraMotion::Mixed) v.reasons.push_back("mixed_motion");
    if (v.camera_motion == CameraMotion::Uncertain) v.reasons.push_back("uncertain_motion");
  }
  v.keep = verdict_keep(v);
  return v;
}

inline nlohmann::json to_json(const CurationVerdict& v) {
  nlohmann::json j = {{"item_id", v.item_id},
                      {"camera_motion", to_string(v.camera_motion)},
                      {"cuts", v.cuts},
                      {"keep", v.keep},
                      {"reasons", v.reasons},
                      {"motion_fit",
                       {{"tx", v.estimate.tx},
                        {"ty", v.estimate.ty},
                        {"k", v.estimate.k},
                        {"theta", v.estimate.theta},
                        {"residual_rms", v.estimate.residual_rms},
                        {"inlier_frac", v.estimate.inlier_frac},
                        {"mean_flow", v.estimate.mean_flow}}}};
  if (!v.error.empty()) j["error"] = v.error;
  return j;
}

struct CurationItem {
  std::string item_id;
  std::filesystem::path video_dir;
};

/// Input list: [{item_id, video_dir}, ...]; relative dirs resolve against `base_dir`.
inline std::vector<CurationItem> curation_items_from_json(const nlohmann::json& j,
                                                          const std::filesystem::path& base_dir = {}) {
  if (!j.is_array()) throw input_error("curation manifest: expected a JSON array");
  std::vector<CurationItem> items;
  for (const auto& ji : j) {
    detail::check_keys(ji, {"item_id", "video_dir"}, "curation item");
    CurationItem it{detail::read_req<std::string>(ji, "item_id", "curation item"),
                    detail::read_req<std::string>(ji, "video_dir", "curation item")};
    if (it.video_dir.is_relative()) it.video_dir = base_dir / it.video_dir;
    items.push_back(std::move(it));
  }
  return items;
}

struct CurationResult {
  std::vector<CurationVerdict> verdicts;  // sorted by item_id
  std::vector<CurationVerdict> keep;
  std::vector<CurationVerdict> drop;
};

inline CurationResult curate(const std::vector<CurationItem>& items, const CurationConfig& cfg = {},
                             const AnalysisConfig& analysis_cfg = {}, std::size_t jobs = 1) {
  cfg.validate();
  auto verdicts = parallel_map(items, jobs, [&](const CurationItem& it) {
    try {
      FrameSequence seq = load_sequence(it.video_dir);
      seq.item_id = it.item_id;
      return curate_video(seq, cfg, analysis_cfg);
    } catch (const Error& e) {
      CurationVerdict v;
      v.item_id = it.item_id;
      v.reasons = {"io"};
      v.error = e.what();
      return v;
    }
  });
  std::sort(verdicts.begin(), verdicts.end(), [](auto& a, auto& b) { return a.item_id < b.item_id; });
  CurationResult out;
  for (const auto& v : verdicts) (v.keep ? out.keep : out.drop).push_back(v);
  out.verdicts = std::move(verdicts);
  return out;
}

/// Writes keep.json and drop.json (each a JSON list of verdicts).
inline void write_curation(const CurationResult& r, const std::filesystem::path& out_dir) {
  auto list = [](const std::vector<CurationVerdict>& vs) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : vs) j.push_back(to_json(v));
    return j.dump(2) + "\n";
  };
  detail::write_text_file(out_dir / "keep.json", list(r.keep));
  detail::write_text_file(out_dir / "drop.json", list(r.drop));
}

}  // namespace dive
