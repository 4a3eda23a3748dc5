#include "arcap/replay.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "arcap/kinematics.hpp"

namespace arcap {

std::vector<std::uint8_t> encode_hand_stream(const std::vector<HandFrameMsg>& frames) {
  std::vector<std::uint8_t> out;
  std::uint64_t seq = 0;
  for (const auto& f : frames) {
    const auto bytes = encode_message(Message{++seq, f});
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

void write_hand_stream(const std::filesystem::path& path, const std::vector<HandFrameMsg>& frames) {
  const auto bytes = encode_hand_stream(frames);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IntegrityError("cannot write " + path.string());
}

std::vector<HandFrameMsg> decode_hand_stream(std::span<const std::uint8_t> bytes) {
  std::vector<HandFrameMsg> frames;
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto fail = [&](const std::string& why) {
      return IntegrityError("hand stream frame " + std::to_string(frames.size()) + " at byte offset " +
                                std::to_string(offset) + ": " + why,
                            static_cast<std::int64_t>(frames.size()), static_cast<std::int64_t>(offset));
    };
    if (bytes.size() - offset < 4) throw fail("truncated length prefix");
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + offset, 4);
    if (len > kMaxFrameBytes) throw fail("length prefix exceeds the frame limit");
    if (bytes.size() - offset - 4 < len) throw fail("truncated payload");
    Message m;
    try {
      m = decode_message(bytes.subspan(offset, 4 + static_cast<std::size_t>(len)));
    } catch (const ProtocolError& e) {
      throw fail(e.what());
    }
    auto* hf = std::get_if<HandFrameMsg>(&m.body);
    if (!hf) throw fail(std::string("expected hand_frame, found ") + message_type(m.body));
    frames.push_back(std::move(*hf));
    offset += 4 + static_cast<std::size_t>(len);
  }
  return frames;
}

std::vector<HandFrameMsg> read_hand_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_hand_stream(bytes);
}

HandFrame synthesize_hand_frame(const RobotModel& model, const JointConfig& q, const Pose& base, const Pose& headset,
                                double timestamp, std::optional<GripperCommand> gripper, double open_width) {
  const auto fk = forward_kinematics(model, q);
  HandFrame f;
  f.timestamp = timestamp;
  f.headset = headset;
  f.wrist = base * fk.at(model.tracking_frame);
  f.wrist.orientation.normalize();
  // resting offsets for fingers the embodiment does not track
  f.fingertips = {Vec3(0.03, -0.04, 0.08), Vec3(0.0, 0.03, 0.14), Vec3(0.0, 0.01, 0.15), Vec3(0.0, -0.01, 0.14),
                  Vec3(0.0, -0.03, 0.12)};
  switch (model.embodiment) {
    case Embodiment::DexHand: {
      const Pose wrist_inv = fk.at(model.tracking_frame).inverse();
      for (Finger finger : {Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring}) {
        const auto it = fk.find(fingertip_frame_name(finger));
        if (it != fk.end()) f.tip(finger) = wrist_inv.transform(it->second.position);
      }
      break;
    }
    case Embodiment::ParallelGripper: {
      const double half = 0.5 * (gripper == GripperCommand::Closed ? 0.25 * open_width : 1.25 * open_width);
      f.tip(Finger::Thumb) = Vec3(0.0, -half, 0.0);
      f.tip(Finger::Index) = Vec3(0.0, half, 0.0);
      break;
    }
    case Embodiment::Bare:
      break;
  }
  return f;
}

std::vector<HandFrameMsg> frames_from_session(const DemoSession& session) {
  std::vector<HandFrameMsg> out;
  out.reserve(session.frames.size());
  for (const auto& d : session.frames) {
    HandFrameMsg m;
    m.frame = synthesize_hand_frame(session.model, d.q, d.robot_base, d.headset, d.timestamp, d.gripper,
                                    session.config.open_width);
    m.frame.headset.orientation.normalize();
    if (!d.cloud.empty()) m.cloud = d.cloud;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<HandFrameMsg> replay_source(const std::filesystem::path& source, double speed) {
  if (!(speed > 0.0) || !std::isfinite(speed)) throw ContractError("replay speed must be positive");
  std::vector<HandFrameMsg> frames;
  if (std::filesystem::is_directory(source)) {
    frames = frames_from_session(load_session(source));
  } else {
    frames = read_hand_stream(source);
  }
  if (speed != 1.0)
    for (auto& f : frames) f.frame.timestamp /= speed;
  return frames;
}

}  // namespace arcap
