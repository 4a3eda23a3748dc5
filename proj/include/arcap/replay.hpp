#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "arcap/protocol.hpp"

namespace arcap {

// Raw hand-stream file: encoded HandFrameMsg frames back to back, with
// sequence numbers 1..N.
std::vector<std::uint8_t> encode_hand_stream(const std::vector<HandFrameMsg>& frames);
void write_hand_stream(const std::filesystem::path& path, const std::vector<HandFrameMsg>& frames);

// Truncated or malformed streams raise IntegrityError with the byte offset of
// the first bad frame.
std::vector<HandFrameMsg> decode_hand_stream(std::span<const std::uint8_t> bytes);
std::vector<HandFrameMsg> read_hand_stream(const std::filesystem::path& path);

// Hand frame that retargets onto the pose of the tracking frame at `q`.
// Dex-hand fingertips come from forward kinematics; gripper tips sit either
// side of the tracking frame, spread wider or narrower than `open_width`
// depending on `gripper`.
HandFrame synthesize_hand_frame(const RobotModel& model, const JointConfig& q, const Pose& base, const Pose& headset,
                                double timestamp, std::optional<GripperCommand> gripper = std::nullopt,
                                double open_width = kDefaultOpenWidth);

// Rebuilds the operator stream of a recorded session from its joint angles;
// recorded clouds ride along.
std::vector<HandFrameMsg> frames_from_session(const DemoSession& session);

// Frames from a raw hand-stream file or a session directory, with timestamps
// divided by `speed`.
std::vector<HandFrameMsg> replay_source(const std::filesystem::path& source, double speed = 1.0);

}  // namespace arcap
