#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "arcap/recording.hpp"

namespace arcap {

struct AnalysisThresholds {
  std::optional<double> visibility_threshold;  // unset: the session's configured threshold
  std::uint64_t speed_tolerance = 0;           // speed-mismatch ticks still considered replayable
};

struct TickQuality {
  std::uint8_t events = 0;  // FeedbackKind bit mask
  double visible_fraction = 1.0;
};

struct QualityReport {
  std::string session;
  std::uint64_t frames = 0;
  std::uint64_t collision_ticks = 0;
  std::uint64_t speed_mismatch_ticks = 0;
  double min_visible_fraction = 0.0;
  double mean_visible_fraction = 0.0;
  double visibility_threshold = kDefaultVisibilityThreshold;
  std::uint64_t speed_tolerance = 0;
  bool replayable = false;

  bool operator==(const QualityReport&) const = default;
};

// Replayable: no collision ticks, at most `speed_tolerance` speed-mismatch
// ticks and the worst visible fraction at or above the threshold. An empty
// session is never replayable.
QualityReport assess(const std::vector<TickQuality>& ticks, double visibility_threshold, std::uint64_t speed_tolerance);

// Counts come from the recorded event masks; visible fractions are recomputed
// from the recorded headset poses with the session's camera and watch points.
// Requires a finalized session (StateError otherwise).
QualityReport analyze_session(const DemoSession& session, const AnalysisThresholds& thresholds = {});

std::string report_to_json(const QualityReport& report);
std::string report_summary(const QualityReport& report);

}  // namespace arcap
