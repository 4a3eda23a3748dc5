#include "arcap/retargeting.hpp"

#include <cmath>

#include "arcap/errors.hpp"

namespace arcap {

namespace {

bool finite(const Pose& p) { return p.position.allFinite() && p.orientation.coeffs().allFinite(); }

}  // namespace

const char* fingertip_frame_name(Finger f) {
  switch (f) {
    case Finger::Thumb:
      return "thumb_tip";
    case Finger::Index:
      return "index_tip";
    case Finger::Middle:
      return "middle_tip";
    case Finger::Ring:
      return "ring_tip";
    case Finger::Pinky:
      return "pinky_tip";
  }
  return "";
}

void validate_hand_frame(const HandFrame& frame) {
  if (!std::isfinite(frame.timestamp)) throw ContractError("hand frame timestamp is not finite");
  if (!finite(frame.wrist) || !finite(frame.headset)) throw ContractError("hand frame pose is not finite");
  if (std::abs(frame.wrist.orientation.norm() - 1.0) > 1e-6 || std::abs(frame.headset.orientation.norm() - 1.0) > 1e-6)
    throw ContractError("hand frame orientation is not a unit quaternion");
  for (const Vec3& t : frame.fingertips) {
    if (!t.allFinite()) throw ContractError("fingertip position is not finite");
    if (!(t.norm() < kMaxFingertipReach)) throw ContractError("fingertip lies implausibly far from the wrist");
  }
}

EmbodimentTarget retarget_dex_hand(const HandFrame& frame, const Pose& base) {
  const Pose base_inv = base.inverse();
  EmbodimentTarget out;
  out.wrist = base_inv * frame.wrist;
  std::map<std::string, Vec3> tips;
  for (Finger f : {Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring}) {
    const Vec3 world = frame.wrist.transform(frame.tip(f));
    tips[fingertip_frame_name(f)] = base_inv.transform(world);
  }
  out.fingertips = std::move(tips);
  return out;
}

GripperRetarget retarget_parallel_gripper(const HandFrame& frame, const GripperState& state, double open_width,
                                          double toggle_period, const Pose& base) {
  if (!(open_width > 0.0)) throw ContractError("gripper open width must be positive");
  const Vec3 thumb = frame.tip(Finger::Thumb);
  const Vec3 index = frame.tip(Finger::Index);
  const Vec3 midpoint_world = frame.wrist.transform(0.5 * (thumb + index));

  GripperRetarget out;
  out.target.wrist = base.inverse() * Pose(midpoint_world, frame.wrist.orientation);
  out.state = state;
  const GripperCommand desired = (index - thumb).norm() > open_width ? GripperCommand::Open : GripperCommand::Closed;
  if (desired != state.state && frame.timestamp - state.last_toggle_time >= toggle_period) {
    out.state.state = desired;
    out.state.last_toggle_time = frame.timestamp;
  }
  out.target.gripper = out.state.state;
  return out;
}

}  // namespace arcap
