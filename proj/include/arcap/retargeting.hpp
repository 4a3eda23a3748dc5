#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "arcap/pose.hpp"

namespace arcap {

enum class Finger { Thumb = 0, Index = 1, Middle = 2, Ring = 3, Pinky = 4 };

inline constexpr double kMaxFingertipReach = 0.30;  // m from the wrist origin

// One tracker sample. Fingertips are expressed in the wrist frame.
struct HandFrame {
  double timestamp = 0.0;
  Pose wrist;
  Pose headset;
  std::array<Vec3, 5> fingertips{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

  const Vec3& tip(Finger f) const { return fingertips[static_cast<int>(f)]; }
  Vec3& tip(Finger f) { return fingertips[static_cast<int>(f)]; }

  bool operator==(const HandFrame& o) const {
    return timestamp == o.timestamp && wrist == o.wrist && headset == o.headset && fingertips == o.fingertips;
  }
};

// Throws ContractError for non-finite values or implausible fingertip offsets.
void validate_hand_frame(const HandFrame& frame);

enum class GripperCommand { Open, Closed };

struct GripperState {
  GripperCommand state = GripperCommand::Open;
  double last_toggle_time = -std::numeric_limits<double>::infinity();

  bool operator==(const GripperState&) const = default;
};

// Targets are expressed in the virtual robot's base frame.
struct EmbodimentTarget {
  Pose wrist;
  std::optional<std::map<std::string, Vec3>> fingertips;
  std::optional<GripperCommand> gripper;
};

inline constexpr double kDefaultOpenWidth = 0.08;
inline constexpr double kDefaultTogglePeriod = 1.0;

// Thumb, index, middle and ring map to the robot's four fingertip frames; the
// pinky is dropped.
EmbodimentTarget retarget_dex_hand(const HandFrame& frame, const Pose& base = Pose::identity());

struct GripperRetarget {
  EmbodimentTarget target;
  GripperState state;
};

// Tip midpoint follows the index–thumb midpoint; open/close follows the pinch
// distance with a minimum dwell of `toggle_period` between state changes.
GripperRetarget retarget_parallel_gripper(const HandFrame& frame, const GripperState& state,
                                          double open_width = kDefaultOpenWidth,
                                          double toggle_period = kDefaultTogglePeriod,
                                          const Pose& base = Pose::identity());

const char* fingertip_frame_name(Finger f);

}  // namespace arcap
