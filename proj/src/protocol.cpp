#include "arcap/protocol.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>

#include "json_io.hpp"

namespace arcap {

using jsonio::json;

namespace {

constexpr int kMaxDepth = 16;

// Rejects pathologically nested documents before handing them to the parser.
void check_depth(std::string_view text) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (char c : text) {
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      if (++depth > kMaxDepth) throw ProtocolError("payload nests deeper than " + std::to_string(kMaxDepth));
    } else if (c == ']' || c == '}') {
      --depth;
    }
  }
}

double finite(const json& j) {
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ProtocolError("non-finite number");
  return v;
}

json cloud_to_json(const ColoredPointCloud& c) {
  json arr = json::array();
  for (const auto& p : c.points)
    arr.push_back({p.position.x(), p.position.y(), p.position.z(), p.rgb[0], p.rgb[1], p.rgb[2]});
  return arr;
}

ColoredPointCloud cloud_from_json(const json& j) {
  if (!j.is_array()) throw ProtocolError("cloud must be an array of points");
  ColoredPointCloud c;
  c.points.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 6) throw ProtocolError("cloud point must be [x, y, z, r, g, b]");
    ColoredPoint cp;
    cp.position = Vec3(finite(p[0]), finite(p[1]), finite(p[2]));
    for (int k = 0; k < 3; ++k) {
      if (!p[3 + k].is_number_unsigned() || p[3 + k].get<unsigned>() > 255)
        throw ProtocolError("cloud colour must be an integer in [0, 255]");
      cp.rgb[k] = static_cast<std::uint8_t>(p[3 + k].get<unsigned>());
    }
    c.points.push_back(cp);
  }
  return c;
}

json hand_frame_json(const HandFrame& f) {
  json tips = json::array();
  for (const auto& t : f.fingertips) tips.push_back(jsonio::vec3(t));
  return {{"t", f.timestamp}, {"wrist", jsonio::pose(f.wrist)}, {"headset", jsonio::pose(f.headset)}, {"fingertips", tips}};
}

HandFrame hand_frame_from(const json& j) {
  HandFrame f;
  f.timestamp = finite(j.at("t"));
  f.wrist = jsonio::pose(j.at("wrist"));
  f.headset = jsonio::pose(j.at("headset"));
  const auto& tips = j.at("fingertips");
  if (!tips.is_array() || tips.size() != 5) throw ProtocolError("hand frame needs 5 fingertips");
  for (int i = 0; i < 5; ++i) f.fingertips[i] = jsonio::vec3(tips[i]);
  return f;
}

json event_json(const FeedbackEvent& e) {
  json j{{"kind", to_string(e.kind())}, {"t", e.timestamp}};
  if (const auto* c = std::get_if<CollisionDetail>(&e.detail)) {
    j["links"] = c->links;
  } else if (const auto* s = std::get_if<SpeedMismatch>(&e.detail)) {
    j["position_error"] = s->position_error;
    j["orientation_error"] = s->orientation_error;
  } else {
    j["visible_fraction"] = std::get<VisibilityDetail>(e.detail).visible_fraction;
  }
  return j;
}

FeedbackEvent event_from(const json& j) {
  FeedbackEvent e;
  e.timestamp = finite(j.at("t"));
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "collision") {
    e.detail = CollisionDetail{j.at("links").get<std::vector<std::string>>()};
  } else if (kind == "speed_limit") {
    e.detail = SpeedMismatch{finite(j.at("position_error")), finite(j.at("orientation_error"))};
  } else if (kind == "visibility_loss") {
    e.detail = VisibilityDetail{finite(j.at("visible_fraction"))};
  } else {
    throw ProtocolError("unknown event kind '" + kind + "'");
  }
  return e;
}

std::string gripper_name(GripperCommand g) { return g == GripperCommand::Open ? "open" : "closed"; }

GripperCommand gripper_from(const json& j) {
  const std::string s = j.get<std::string>();
  if (s == "open") return GripperCommand::Open;
  if (s == "closed") return GripperCommand::Closed;
  throw ProtocolError("unknown gripper command '" + s + "'");
}

json output_json(const EngineOutput& o) {
  json events = json::array();
  for (const auto& e : o.events) events.push_back(event_json(e));
  json j{{"t", o.timestamp},
         {"q", o.q},
         {"ee_pose", jsonio::pose(o.ee_pose)},
         {"events", events},
         {"display",
          {{"color", to_string(o.display.color)},
           {"blinking", o.display.blinking},
           {"haptic", o.display.haptic},
           {"blink_phase", o.display.blink_phase}}},
         {"lagging", o.lagging},
         {"ik_converged", o.ik_converged}};
  if (o.gripper) j["gripper"] = gripper_name(*o.gripper);
  return j;
}

EngineOutput output_from(const json& j) {
  EngineOutput o;
  o.timestamp = finite(j.at("t"));
  for (const auto& v : j.at("q")) o.q.push_back(finite(v));
  o.ee_pose = jsonio::pose(j.at("ee_pose"));
  for (const auto& e : j.at("events")) o.events.push_back(event_from(e));
  const auto& d = j.at("display");
  o.display.color = frame_color_from_string(d.at("color").get<std::string>());
  o.display.blinking = d.at("blinking").get<bool>();
  o.display.haptic = d.at("haptic").get<bool>();
  const json& phase = d.at("blink_phase");
  if (!phase.is_number_unsigned() || phase.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max())
    throw ProtocolError("blink_phase must be a 32-bit non-negative integer");
  o.display.blink_phase = phase.get<std::uint32_t>();
  o.lagging = j.at("lagging").get<bool>();
  o.ik_converged = j.at("ik_converged").get<bool>();
  if (j.contains("gripper")) o.gripper = gripper_from(j.at("gripper"));
  return o;
}

SessionStatus session_status_from(const std::string& s) {
  if (s == "recording") return SessionStatus::Recording;
  if (s == "finalized") return SessionStatus::Finalized;
  if (s == "discarded") return SessionStatus::Discarded;
  throw ProtocolError("unknown session status '" + s + "'");
}

struct BodyToJson {
  json& j;
  void operator()(const Hello& m) const {
    j["version"] = m.version;
    j["client"] = m.client;
  }
  void operator()(const SceneUpload& m) const { j["cloud"] = cloud_to_json(m.cloud); }
  void operator()(const PlaceRobot& m) const { j["pose"] = jsonio::pose(m.pose); }
  void operator()(const HandFrameMsg& m) const {
    j["frame"] = hand_frame_json(m.frame);
    if (m.cloud) j["cloud"] = cloud_to_json(*m.cloud);
  }
  void operator()(const EngineOutputMsg& m) const {
    j["output"] = output_json(m.output);
    j["ack"] = m.ack;
    j["dropped"] = m.dropped;
  }
  void operator()(const RecordStart& m) const {
    if (!m.session.empty()) j["session"] = m.session;
  }
  void operator()(const RecordStop& m) const { j["action"] = m.finalize ? "finalize" : "discard"; }
  void operator()(const RecordStatus& m) const {
    j["session"] = m.session;
    j["status"] = to_string(m.status);
    j["frames"] = m.frames;
    j["path"] = m.path;
  }
  void operator()(const Calibrate& m) const {
    j["world_base"] = jsonio::pose(m.world_base);
    j["world_camera"] = jsonio::pose(m.world_camera);
  }
  void operator()(const CalibrationResult& m) const { j["pose"] = jsonio::pose(m.pose); }
  void operator()(const ErrorMsg& m) const {
    j["code"] = m.code;
    j["text"] = m.text;
  }
  void operator()(const SceneStatus& m) const {
    j["points"] = m.points;
    j["voxels"] = m.voxels;
  }
};

std::uint64_t count_at(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) throw ProtocolError(std::string(key) + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

MessageBody body_from(const std::string& type, const json& j) {
  if (type == "hello") return Hello{j.at("version").get<int>(), j.at("client").get<std::string>()};
  if (type == "scene_upload") return SceneUpload{cloud_from_json(j.at("cloud"))};
  if (type == "place_robot") return PlaceRobot{jsonio::pose(j.at("pose"))};
  if (type == "hand_frame") {
    HandFrameMsg m{hand_frame_from(j.at("frame")), std::nullopt};
    if (j.contains("cloud")) m.cloud = cloud_from_json(j.at("cloud"));
    return m;
  }
  if (type == "engine_output")
    return EngineOutputMsg{output_from(j.at("output")), count_at(j, "ack"), count_at(j, "dropped")};
  if (type == "record_start") return RecordStart{j.value("session", std::string())};
  if (type == "record_stop") {
    const std::string action = j.at("action").get<std::string>();
    if (action != "finalize" && action != "discard") throw ProtocolError("record_stop action must be finalize or discard");
    return RecordStop{action == "finalize"};
  }
  if (type == "record_status")
    return RecordStatus{j.at("session").get<std::string>(), session_status_from(j.at("status").get<std::string>()),
                        count_at(j, "frames"), j.at("path").get<std::string>()};
  if (type == "calibrate") return Calibrate{jsonio::pose(j.at("world_base")), jsonio::pose(j.at("world_camera"))};
  if (type == "calibration_result") return CalibrationResult{jsonio::pose(j.at("pose"))};
  if (type == "error") return ErrorMsg{j.at("code").get<std::string>(), j.at("text").get<std::string>()};
  if (type == "scene_status") return SceneStatus{count_at(j, "points"), count_at(j, "voxels")};
  throw ProtocolError("unknown message type '" + type + "'");
}

}  // namespace

const char* message_type(const MessageBody& body) {
  static constexpr const char* kNames[] = {"hello",        "scene_upload",  "place_robot", "hand_frame",
                                           "engine_output", "record_start", "record_stop", "record_status",
                                           "calibrate",    "calibration_result", "error",       "scene_status"};
  static_assert(std::size(kNames) == std::variant_size_v<MessageBody>);
  return kNames[body.index()];
}

std::string encode_payload(const Message& msg) {
  json j;
  j["type"] = message_type(msg.body);
  j["seq"] = msg.seq;
  std::visit(BodyToJson{j}, msg.body);
  return j.dump();
}

Message decode_payload(std::string_view payload) {
  try {
    check_depth(payload);
    const json j = json::parse(payload);
    if (!j.is_object()) throw ProtocolError("payload must be a JSON object");
    Message m;
    m.seq = count_at(j, "seq");
    m.body = body_from(j.at("type").get<std::string>(), j);
    return m;
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("malformed payload: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  const std::string payload = encode_payload(msg);
  if (payload.size() > kMaxFrameBytes) throw ProtocolError("message exceeds the maximum frame size");
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(payload.size()));
  w.put_bytes(payload);
  return w.take();
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IncompleteError("frame length prefix is incomplete");
  std::uint32_t len;
  std::memcpy(&len, bytes.data(), 4);
  if (len > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(len) + " exceeds the limit");
  if (bytes.size() < 4 + static_cast<std::size_t>(len)) throw IncompleteError("frame payload is incomplete");
  if (bytes.size() > 4 + static_cast<std::size_t>(len)) throw ProtocolError("bytes after the end of the frame");
  return decode_payload(std::string_view(reinterpret_cast<const char*>(bytes.data()) + 4, len));
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> FrameReader::next() {
  if (buffered() < 4) return std::nullopt;
  std::uint32_t len;
  std::memcpy(&len, buf_.data() + pos_, 4);
  if (len > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(len) + " exceeds the limit");
  if (buffered() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
  std::vector<std::uint8_t> frame(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4 + len));
  pos_ += 4 + len;
  if (pos_ > (1u << 20) && pos_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return frame;
}

std::string hand_frame_to_json(const HandFrame& frame) { return hand_frame_json(frame).dump(); }

HandFrame hand_frame_from_json(std::string_view text) {
  try {
    return hand_frame_from(json::parse(text));
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("malformed hand frame: ") + e.what());
  }
}

// ServerSession ---------------------------------------------------------------

namespace {

std::string default_session_id() {
  static std::atomic<unsigned> counter{0};
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02d-%u", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, counter.fetch_add(1));
  return buf;
}

}  // namespace

ServerSession::ServerSession(const ServerOptions& options)
    : options_(options), engine_(options.config, options.model, options.scene) {}

ServerSession::~ServerSession() { disconnect(); }

void ServerSession::disconnect() {
  if (recorder_) {
    try {
      recorder_->discard();
    } catch (const std::exception&) {
    }
    recorder_.reset();
  }
  closed_ = true;
}

Message ServerSession::reply(MessageBody body) { return Message{++out_seq_, std::move(body)}; }

std::vector<Message> ServerSession::handle(std::vector<Message> batch) {
  std::vector<Message> out;
  for (std::size_t i = 0; i < batch.size() && !closed_; ++i) {
    if (std::holds_alternative<HandFrameMsg>(batch[i].body) && greeted_) {
      // collapse a run of hand frames to its newest member
      std::size_t last = i;
      while (last + 1 < batch.size() && std::holds_alternative<HandFrameMsg>(batch[last + 1].body) &&
             batch[last + 1].seq > batch[last].seq)
        ++last;
      if (last > i) {
        pending_dropped_ += last - i;
        dropped_total_ += last - i;
        last_in_seq_ = batch[last - 1].seq;
        i = last;
      }
    }
    handle_one(batch[i], out);
  }
  return out;
}

void ServerSession::handle_one(const Message& msg, std::vector<Message>& out) {
  if (!greeted_) {
    const auto* hello = std::get_if<Hello>(&msg.body);
    if (!hello) {
      out.push_back(reply(ErrorMsg{"handshake_required", "the first message must be hello"}));
      closed_ = true;
      return;
    }
    if (hello->version != kProtocolVersion) {
      out.push_back(reply(ErrorMsg{"version_mismatch", "server speaks protocol version " +
                                                          std::to_string(kProtocolVersion) + ", client sent " +
                                                          std::to_string(hello->version)}));
      closed_ = true;
      return;
    }
    greeted_ = true;
    last_in_seq_ = msg.seq;
    out.push_back(reply(Hello{kProtocolVersion, "arcap-server"}));
    return;
  }
  if (msg.seq <= last_in_seq_) {
    out.push_back(reply(ErrorMsg{"sequence", "sequence number " + std::to_string(msg.seq) +
                                                 " does not increase past " + std::to_string(last_in_seq_)}));
    return;
  }
  last_in_seq_ = msg.seq;

  try {
    if (std::holds_alternative<HandFrameMsg>(msg.body)) {
      handle_hand_frame(msg, out);
    } else if (const auto* up = std::get_if<SceneUpload>(&msg.body)) {
      auto grid = std::make_shared<VoxelGrid>(build_scene_grid(up->cloud, engine_.config()));
      const std::uint64_t voxels = grid->size();
      engine_.set_scene(std::move(grid));
      out.push_back(reply(SceneStatus{up->cloud.size(), voxels}));
    } else if (const auto* place = std::get_if<PlaceRobot>(&msg.body)) {
      engine_.place_robot(place->pose);
      last_processed_t_ = -std::numeric_limits<double>::infinity();
    } else if (const auto* start = std::get_if<RecordStart>(&msg.body)) {
      if (recorder_) {
        out.push_back(reply(ErrorMsg{"state", "a recording is already in progress"}));
        return;
      }
      const std::string id = start->session.empty() ? default_session_id() : start->session;
      recorder_ = std::make_unique<SessionRecorder>(options_.session_root, id, engine_.config(), engine_.model());
      out.push_back(reply(RecordStatus{id, SessionStatus::Recording, 0, recorder_->dir().string()}));
    } else if (const auto* stop = std::get_if<RecordStop>(&msg.body)) {
      if (!recorder_) {
        out.push_back(reply(ErrorMsg{"state", "no recording in progress"}));
        return;
      }
      if (stop->finalize) {
        recorder_->finalize();
      } else {
        recorder_->discard();
      }
      out.push_back(reply(RecordStatus{recorder_->manifest().id, recorder_->status(), recorder_->frame_count(),
                                       recorder_->dir().string()}));
      recorder_.reset();
    } else if (const auto* cal = std::get_if<Calibrate>(&msg.body)) {
      out.push_back(reply(CalibrationResult{calibrate_extrinsics(cal->world_base, cal->world_camera)}));
    } else if (std::holds_alternative<Hello>(msg.body)) {
      out.push_back(reply(ErrorMsg{"state", "handshake already completed"}));
    } else {
      out.push_back(reply(ErrorMsg{"unexpected", std::string(message_type(msg.body)) + " is a server-to-client message"}));
    }
  } catch (const OrderingError& e) {
    out.push_back(reply(ErrorMsg{"ordering", e.what()}));
  } catch (const StateError& e) {
    out.push_back(reply(ErrorMsg{"state", e.what()}));
  } catch (const ContractError& e) {
    out.push_back(reply(ErrorMsg{"invalid", e.what()}));
  } catch (const IntegrityError& e) {
    out.push_back(reply(ErrorMsg{"storage", e.what()}));
  }
}

void ServerSession::handle_hand_frame(const Message& msg, std::vector<Message>& out) {
  const auto& hf = std::get<HandFrameMsg>(msg.body);
  if (hf.frame.timestamp > last_processed_t_ && hf.frame.timestamp - last_processed_t_ < kCoalesceInterval) {
    ++pending_dropped_;
    ++dropped_total_;
    return;
  }
  EngineOutput o = engine_.tick(hf.frame);
  last_processed_t_ = hf.frame.timestamp;
  ++processed_;
  if (recorder_) {
    DemoFrame f;
    f.timestamp = o.timestamp;
    if (hf.cloud) f.cloud = *hf.cloud;
    f.q = o.q;
    f.headset = hf.frame.headset;
    f.robot_base = engine_.config().robot_base;
    f.gripper = o.gripper;
    f.events = event_mask(o.events);
    recorder_->append(f);
  }
  out.push_back(reply(EngineOutputMsg{std::move(o), msg.seq, pending_dropped_}));
  pending_dropped_ = 0;
}

}  // namespace arcap
