#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "arcap/engine.hpp"
#include "arcap/errors.hpp"
#include "arcap/recording.hpp"

namespace arcap {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 8765;
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

// A frame whose length prefix or payload has not fully arrived yet.
class IncompleteError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

struct Hello {
  int version = kProtocolVersion;
  std::string client;
  bool operator==(const Hello&) const = default;
};

struct SceneUpload {
  ColoredPointCloud cloud;  // world frame
  bool operator==(const SceneUpload&) const = default;
};

struct PlaceRobot {
  Pose pose;
  bool operator==(const PlaceRobot&) const = default;
};

struct HandFrameMsg {
  HandFrame frame;
  std::optional<ColoredPointCloud> cloud;  // camera frame, from trackers with depth
  bool operator==(const HandFrameMsg&) const = default;
};

struct EngineOutputMsg {
  EngineOutput output;
  std::uint64_t ack = 0;      // seq of the hand frame this answers
  std::uint64_t dropped = 0;  // hand frames coalesced away since the previous output
  bool operator==(const EngineOutputMsg&) const = default;
};

struct RecordStart {
  std::string session;  // empty: server picks an id
  bool operator==(const RecordStart&) const = default;
};

struct RecordStop {
  bool finalize = true;  // false: discard
  bool operator==(const RecordStop&) const = default;
};

struct RecordStatus {
  std::string session;
  SessionStatus status = SessionStatus::Recording;
  std::uint64_t frames = 0;
  std::string path;
  bool operator==(const RecordStatus&) const = default;
};

struct Calibrate {
  Pose world_base;
  Pose world_camera;
  bool operator==(const Calibrate&) const = default;
};

struct CalibrationResult {
  Pose pose;
  bool operator==(const CalibrationResult&) const = default;
};

struct ErrorMsg {
  std::string code;
  std::string text;
  bool operator==(const ErrorMsg&) const = default;
};

// Reply to a scene upload once the grid is in place.
struct SceneStatus {
  std::uint64_t points = 0;
  std::uint64_t voxels = 0;
  bool operator==(const SceneStatus&) const = default;
};

using MessageBody = std::variant<Hello, SceneUpload, PlaceRobot, HandFrameMsg, EngineOutputMsg, RecordStart,
                                 RecordStop, RecordStatus, Calibrate, CalibrationResult, ErrorMsg, SceneStatus>;

struct Message {
  std::uint64_t seq = 0;
  MessageBody body;
  bool operator==(const Message&) const = default;
};

const char* message_type(const MessageBody& body);

// Canonical JSON payload (sorted keys, no whitespace) without the prefix.
std::string encode_payload(const Message& msg);
Message decode_payload(std::string_view payload);

// u32 little-endian payload length followed by the payload.
std::vector<std::uint8_t> encode_message(const Message& msg);
// `bytes` must hold exactly one frame. Short input raises IncompleteError;
// anything else malformed raises ProtocolError.
Message decode_message(std::span<const std::uint8_t> bytes);

// Splits a byte stream into frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  // Next complete frame (prefix included), or nullopt if more bytes are
  // needed. Oversized length prefixes raise ProtocolError.
  std::optional<std::vector<std::uint8_t>> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

// Wire-level helpers for embedding engine types in other documents.
std::string hand_frame_to_json(const HandFrame& frame);
HandFrame hand_frame_from_json(std::string_view text);

// Server-side state for one connection, independent of the transport.
struct ServerOptions {
  EngineConfig config;
  std::shared_ptr<const RobotModel> model;
  std::shared_ptr<const VoxelGrid> scene;  // initial scene, may be null
  std::filesystem::path session_root = "sessions";
  std::optional<std::filesystem::path> console_dir;
};

class ServerSession {
 public:
  explicit ServerSession(const ServerOptions& options);
  ~ServerSession();

  // Handles a batch of messages that arrived together. Runs of consecutive
  // hand frames collapse to the newest one; hand frames within 1 ms of the last
  // processed frame are dropped. Returns the replies in order.
  std::vector<Message> handle(std::vector<Message> batch);

  // Reply reporting a frame that could not be decoded.
  Message protocol_error(const std::string& text) { return reply(ErrorMsg{"protocol", text}); }

  bool closed() const { return closed_; }
  bool recording() const { return recorder_ != nullptr; }
  // Disconnect: an unfinished recording is discarded.
  void disconnect();

  std::uint64_t processed_frames() const { return processed_; }
  std::uint64_t dropped_frames() const { return dropped_total_; }

 private:
  Message reply(MessageBody body);
  void handle_one(const Message& msg, std::vector<Message>& out);
  void handle_hand_frame(const Message& msg, std::vector<Message>& out);

  ServerOptions options_;
  Engine engine_;
  std::unique_ptr<SessionRecorder> recorder_;
  bool greeted_ = false;
  bool closed_ = false;
  std::uint64_t out_seq_ = 0;
  std::uint64_t last_in_seq_ = 0;
  std::uint64_t pending_dropped_ = 0;
  std::uint64_t dropped_total_ = 0;
  std::uint64_t processed_ = 0;
  double last_processed_t_ = -std::numeric_limits<double>::infinity();
};

inline constexpr double kCoalesceInterval = 1e-3;  // 1 kHz

}  // namespace arcap
