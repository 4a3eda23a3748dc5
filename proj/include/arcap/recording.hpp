#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "arcap/byte_io.hpp"
#include "arcap/engine.hpp"
#include "arcap/point_cloud.hpp"

namespace arcap {

// One recorded tick. Values are held at the precision they are stored with
// (f32 for cloud, joints and poses), so a read-back compares bit-exact.
struct DemoFrame {
  double timestamp = 0.0;
  ColoredPointCloud cloud;  // camera frame
  JointConfig q;
  Pose headset;
  Pose robot_base;
  std::optional<GripperCommand> gripper;
  std::uint8_t events = 0;  // bit k set: FeedbackKind k fired this tick

  bool operator==(const DemoFrame& o) const {
    return timestamp == o.timestamp && cloud == o.cloud && q == o.q && headset == o.headset &&
           robot_base == o.robot_base && gripper == o.gripper && events == o.events;
  }
};

// Rounds a frame to its stored precision.
DemoFrame quantize_frame(const DemoFrame& frame);

void encode_demo_frame(ByteWriter& out, const DemoFrame& frame);
DemoFrame decode_demo_frame(ByteReader& in);

enum class SessionStatus { Recording, Finalized, Discarded };
std::string to_string(SessionStatus s);

inline constexpr std::size_t kFramesPerChunk = 60;

struct EventTotals {
  std::uint64_t collision = 0;
  std::uint64_t speed_limit = 0;
  std::uint64_t visibility_loss = 0;

  void add(std::uint8_t mask);
  bool operator==(const EventTotals&) const = default;
};

struct ChunkInfo {
  std::string file;
  std::uint32_t frames = 0;
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;
};

struct SessionManifest {
  std::string id;
  SessionStatus status = SessionStatus::Recording;
  std::string config_json;  // EngineConfig snapshot
  std::string model_json;   // robot model snapshot
  std::uint64_t frame_count = 0;
  EventTotals events;
  std::vector<ChunkInfo> chunks;
};

std::string manifest_to_json(const SessionManifest& m);
SessionManifest parse_manifest(std::string_view text);
SessionManifest read_manifest(const std::filesystem::path& session_dir);

// Loaded session; frames are empty for discarded sessions.
struct DemoSession {
  SessionManifest manifest;
  EngineConfig config;
  RobotModel model;
  std::vector<DemoFrame> frames;

  const std::string& id() const { return manifest.id; }
  SessionStatus status() const { return manifest.status; }
};

// Reads a session directory, verifying every chunk checksum. Corruption raises
// IntegrityError naming the first affected frame index.
DemoSession load_session(const std::filesystem::path& session_dir);

std::filesystem::path session_dir(const std::filesystem::path& root, const std::string& id);

// Disk-backed writer for one session. Frames are buffered and flushed as a
// chunk every 60 frames; the manifest is rewritten at each flush.
class SessionRecorder {
 public:
  SessionRecorder(const std::filesystem::path& root, std::string id, const EngineConfig& config,
                  const RobotModel& model);

  // Reopens an unfinished session to keep appending. Finalized or discarded
  // sessions are immutable and raise StateError.
  static SessionRecorder resume(const std::filesystem::path& session_dir);

  void append(const DemoFrame& frame);
  const SessionManifest& finalize();
  void discard();

  SessionStatus status() const { return manifest_.status; }
  std::uint64_t frame_count() const { return manifest_.frame_count; }
  const std::filesystem::path& dir() const { return dir_; }
  const SessionManifest& manifest() const { return manifest_; }

 private:
  SessionRecorder() = default;
  void require_recording(const char* what) const;
  void flush_chunk();
  void write_manifest() const;

  std::filesystem::path dir_;
  SessionManifest manifest_;
  std::vector<DemoFrame> pending_;
  double last_timestamp_ = -std::numeric_limits<double>::infinity();
};

// Post-processing ---------------------------------------------------------

enum class PointSource : std::uint8_t { Scene = 0, Robot = 1 };

struct ProcessedFrame {
  double timestamp = 0.0;
  ColoredPointCloud cloud;  // world frame, cropped
  std::vector<PointSource> sources;
  JointConfig q;
  Pose headset;
  Pose robot_base;
  std::optional<GripperCommand> gripper;
  std::uint8_t events = 0;

  bool operator==(const ProcessedFrame&) const = default;
};

// Fibonacci-lattice samples on every collision sphere that fall inside the
// camera frustum and whose outward normal faces the camera.
ColoredPointCloud render_robot_cloud(const RobotModel& model, const JointConfig& q, const Pose& base,
                                     const Pose& camera_world, const CameraModel& cam, int samples_per_sphere);

Rgb link_color(std::size_t link_index);

inline constexpr int kDefaultSphereSamples = 64;

ProcessedFrame postprocess_frame(const DemoFrame& frame, const Box& crop, const RobotModel& model,
                                 const CameraModel& cam, int samples_per_sphere = kDefaultSphereSamples);

// Requires a finalized session; the crop box defaults to the recorded
// workspace box.
std::vector<ProcessedFrame> postprocess_session(const DemoSession& session, std::optional<Box> crop = std::nullopt,
                                                int samples_per_sphere = kDefaultSphereSamples);

// Processed container: "ARCPRC1", u32 frame count, then per frame the demo
// record layout with a u8 source label after each point.
void write_processed(const std::filesystem::path& path, const std::vector<ProcessedFrame>& frames);
std::vector<ProcessedFrame> read_processed(const std::filesystem::path& path);

// HDF5 export of processed frames.
void export_hdf5(const std::filesystem::path& path, const std::vector<ProcessedFrame>& frames);

}  // namespace arcap
