#include "arcap/analysis.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace arcap {

QualityReport assess(const std::vector<TickQuality>& ticks, double visibility_threshold, std::uint64_t speed_tolerance) {
  QualityReport r;
  r.frames = ticks.size();
  r.visibility_threshold = visibility_threshold;
  r.speed_tolerance = speed_tolerance;
  if (ticks.empty()) return r;

  double sum = 0.0;
  r.min_visible_fraction = 1.0;
  for (const auto& t : ticks) {
    if (t.events & event_bit(FeedbackKind::Collision)) ++r.collision_ticks;
    if (t.events & event_bit(FeedbackKind::SpeedLimit)) ++r.speed_mismatch_ticks;
    r.min_visible_fraction = std::min(r.min_visible_fraction, t.visible_fraction);
    sum += t.visible_fraction;
  }
  r.mean_visible_fraction = sum / static_cast<double>(ticks.size());
  r.replayable = r.collision_ticks == 0 && r.speed_mismatch_ticks <= speed_tolerance &&
                 r.min_visible_fraction >= visibility_threshold;
  return r;
}

QualityReport analyze_session(const DemoSession& session, const AnalysisThresholds& thresholds) {
  if (session.status() != SessionStatus::Finalized)
    throw StateError("session '" + session.id() + "' is " + to_string(session.status()) + ", not finalized");
  const EngineConfig& cfg = session.config;
  const double threshold = thresholds.visibility_threshold.value_or(cfg.visibility_threshold);
  const auto watch = cfg.effective_watch_points();

  std::vector<TickQuality> ticks;
  ticks.reserve(session.frames.size());
  for (const auto& f : session.frames) {
    Pose headset = f.headset;
    headset.orientation.normalize();
    const VisibilityResult vis = check_visibility(headset * cfg.camera.mount, cfg.camera, watch, threshold);
    ticks.push_back({f.events, vis.visible_fraction});
  }
  QualityReport r = assess(ticks, threshold, thresholds.speed_tolerance);
  r.session = session.id();
  return r;
}

std::string report_to_json(const QualityReport& r) {
  const nlohmann::json j{{"session", r.session},
                         {"frames", r.frames},
                         {"collision_ticks", r.collision_ticks},
                         {"speed_mismatch_ticks", r.speed_mismatch_ticks},
                         {"min_visible_fraction", r.min_visible_fraction},
                         {"mean_visible_fraction", r.mean_visible_fraction},
                         {"visibility_threshold", r.visibility_threshold},
                         {"speed_tolerance", r.speed_tolerance},
                         {"replayable", r.replayable}};
  return j.dump(2);
}

std::string report_summary(const QualityReport& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%s: %s (%llu frames, %llu collision ticks, %llu speed-mismatch ticks, visibility min %.3f mean %.3f)",
                r.session.c_str(), r.replayable ? "replayable" : "NOT replayable",
                static_cast<unsigned long long>(r.frames), static_cast<unsigned long long>(r.collision_ticks),
                static_cast<unsigned long long>(r.speed_mismatch_ticks), r.min_visible_fraction,
                r.mean_visible_fraction);
  return buf;
}

}  // namespace arcap
