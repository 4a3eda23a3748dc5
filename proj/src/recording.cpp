#include "arcap/recording.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "arcap/errors.hpp"
#include "json_io.hpp"

namespace arcap {

using jsonio::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kChunkMagic = "ARCCHK1";
constexpr std::string_view kProcessedMagic = "ARCPRC1";

Pose quantize_pose(const Pose& p) {
  Pose out;
  for (int a = 0; a < 3; ++a) out.position[a] = round_to_f32(p.position[a]);
  out.orientation = Quat(round_to_f32(p.orientation.w()), round_to_f32(p.orientation.x()),
                         round_to_f32(p.orientation.y()), round_to_f32(p.orientation.z()));
  return out;
}

void put_pose(ByteWriter& w, const Pose& p) {
  for (int a = 0; a < 3; ++a) w.put(static_cast<float>(p.position[a]));
  w.put(static_cast<float>(p.orientation.w()));
  w.put(static_cast<float>(p.orientation.x()));
  w.put(static_cast<float>(p.orientation.y()));
  w.put(static_cast<float>(p.orientation.z()));
}

Pose get_pose(ByteReader& r) {
  Pose p;
  for (int a = 0; a < 3; ++a) p.position[a] = r.get<float>();
  const float w = r.get<float>(), x = r.get<float>(), y = r.get<float>(), z = r.get<float>();
  p.orientation = Quat(w, x, y, z);
  if (!p.position.allFinite() || !p.orientation.coeffs().allFinite())
    throw IntegrityError("non-finite pose before byte offset " + std::to_string(r.offset()), -1,
                         static_cast<std::int64_t>(r.offset()));
  return p;
}

// bit 0: command present, bit 1: closed
std::uint8_t gripper_byte(const std::optional<GripperCommand>& g) {
  if (!g) return 0;
  return *g == GripperCommand::Closed ? 3 : 1;
}

std::optional<GripperCommand> gripper_from_byte(std::uint8_t b, std::size_t offset) {
  switch (b) {
    case 0:
      return std::nullopt;
    case 1:
      return GripperCommand::Open;
    case 3:
      return GripperCommand::Closed;
    default:
      throw IntegrityError("invalid gripper byte at offset " + std::to_string(offset), -1,
                           static_cast<std::int64_t>(offset));
  }
}

void put_joints(ByteWriter& w, const JointConfig& q) {
  if (q.size() > 0xFFFF) throw ContractError("too many joints to record");
  w.put(static_cast<std::uint16_t>(q.size()));
  for (double v : q) w.put(static_cast<float>(v));
}

JointConfig get_joints(ByteReader& r) {
  const auto n = r.get<std::uint16_t>();
  JointConfig q(n);
  for (auto& v : q) {
    v = r.get<float>();
    if (!std::isfinite(v))
      throw IntegrityError("non-finite joint angle before byte offset " + std::to_string(r.offset()), -1,
                           static_cast<std::int64_t>(r.offset()));
  }
  return q;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IntegrityError("failed to write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint32_t checksum(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::string chunk_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "chunk-%06zu.bin", index);
  return buf;
}

void make_read_only(const fs::path& p) {
  std::error_code ec;
  fs::permissions(p, fs::perms::owner_write | fs::perms::group_write | fs::perms::others_write,
                  fs::perm_options::remove, ec);
}

SessionStatus status_from_string(const std::string& s) {
  if (s == "recording") return SessionStatus::Recording;
  if (s == "finalized") return SessionStatus::Finalized;
  if (s == "discarded") return SessionStatus::Discarded;
  throw IntegrityError("unknown session status '" + s + "'");
}

}  // namespace

DemoFrame quantize_frame(const DemoFrame& frame) {
  DemoFrame out = frame;
  out.cloud = quantize_cloud(frame.cloud);
  for (auto& v : out.q) v = round_to_f32(v);
  out.headset = quantize_pose(frame.headset);
  out.robot_base = quantize_pose(frame.robot_base);
  return out;
}

void encode_demo_frame(ByteWriter& w, const DemoFrame& f) {
  w.put(f.timestamp);
  w.put(static_cast<std::uint32_t>(f.cloud.size()));
  encode_points(w, f.cloud);
  put_joints(w, f.q);
  put_pose(w, f.headset);
  put_pose(w, f.robot_base);
  w.put(gripper_byte(f.gripper));
  w.put(f.events);
}

DemoFrame decode_demo_frame(ByteReader& r) {
  DemoFrame f;
  f.timestamp = r.get<double>();
  if (!std::isfinite(f.timestamp))
    throw IntegrityError("non-finite timestamp before byte offset " + std::to_string(r.offset()), -1,
                         static_cast<std::int64_t>(r.offset()));
  const auto n = r.get<std::uint32_t>();
  f.cloud = decode_points(r, n);
  f.q = get_joints(r);
  f.headset = get_pose(r);
  f.robot_base = get_pose(r);
  const std::size_t at = r.offset();
  f.gripper = gripper_from_byte(r.get<std::uint8_t>(), at);
  f.events = r.get<std::uint8_t>();
  if (f.events & ~0x07)
    throw IntegrityError("invalid event mask at offset " + std::to_string(r.offset() - 1), -1,
                         static_cast<std::int64_t>(r.offset() - 1));
  return f;
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Recording:
      return "recording";
    case SessionStatus::Finalized:
      return "finalized";
    case SessionStatus::Discarded:
      return "discarded";
  }
  return "recording";
}

void EventTotals::add(std::uint8_t mask) {
  collision += (mask >> static_cast<int>(FeedbackKind::Collision)) & 1u;
  speed_limit += (mask >> static_cast<int>(FeedbackKind::SpeedLimit)) & 1u;
  visibility_loss += (mask >> static_cast<int>(FeedbackKind::VisibilityLoss)) & 1u;
}

std::string manifest_to_json(const SessionManifest& m) {
  json doc;
  doc["schema"] = 1;
  doc["id"] = m.id;
  doc["status"] = to_string(m.status);
  doc["frame_count"] = m.frame_count;
  doc["frames_per_chunk"] = kFramesPerChunk;
  doc["events"] = {{"collision", m.events.collision},
                   {"speed_limit", m.events.speed_limit},
                   {"visibility_loss", m.events.visibility_loss}};
  doc["chunks"] = json::array();
  for (const auto& c : m.chunks) {
    char crc[9];
    std::snprintf(crc, sizeof crc, "%08x", c.crc32);
    doc["chunks"].push_back({{"file", c.file}, {"frames", c.frames}, {"bytes", c.bytes}, {"crc32", crc}});
  }
  doc["config"] = m.config_json.empty() ? json::object() : json::parse(m.config_json);
  doc["model"] = m.model_json.empty() ? json::object() : json::parse(m.model_json);
  return doc.dump(2) + "\n";
}

SessionManifest parse_manifest(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("schema", 0) != 1) throw IntegrityError("session manifest must declare schema: 1");
    if (doc.value("frames_per_chunk", kFramesPerChunk) != kFramesPerChunk)
      throw IntegrityError("unsupported frames_per_chunk in session manifest");
    SessionManifest m;
    m.id = doc.at("id").get<std::string>();
    m.status = status_from_string(doc.at("status").get<std::string>());
    m.frame_count = doc.at("frame_count").get<std::uint64_t>();
    const auto& ev = doc.at("events");
    m.events = {ev.at("collision").get<std::uint64_t>(), ev.at("speed_limit").get<std::uint64_t>(),
                ev.at("visibility_loss").get<std::uint64_t>()};
    for (const auto& c : doc.at("chunks")) {
      ChunkInfo info;
      info.file = c.at("file").get<std::string>();
      if (info.file.find('/') != std::string::npos || info.file.find("..") != std::string::npos)
        throw IntegrityError("chunk file name escapes the session directory");
      info.frames = c.at("frames").get<std::uint32_t>();
      info.bytes = c.at("bytes").get<std::uint64_t>();
      info.crc32 = static_cast<std::uint32_t>(std::stoul(c.at("crc32").get<std::string>(), nullptr, 16));
      m.chunks.push_back(std::move(info));
    }
    if (doc.contains("config") && !doc.at("config").empty()) m.config_json = doc.at("config").dump();
    if (doc.contains("model") && !doc.at("model").empty()) m.model_json = doc.at("model").dump();
    return m;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed session manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw IntegrityError("malformed chunk checksum in session manifest");
  }
}

SessionManifest read_manifest(const fs::path& dir) {
  const auto bytes = read_file(dir / "manifest");
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

fs::path session_dir(const fs::path& root, const std::string& id) { return root / ("session-" + id); }

DemoSession load_session(const fs::path& dir) {
  DemoSession s;
  s.manifest = read_manifest(dir);
  try {
    s.config = parse_engine_config(s.manifest.config_json);
    s.model = parse_robot_model(s.manifest.model_json);
  } catch (const ContractError& e) {
    throw IntegrityError(std::string("session snapshot is invalid: ") + e.what());
  }
  if (s.manifest.status == SessionStatus::Discarded) return s;

  std::uint64_t frame_index = 0;
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& chunk : s.manifest.chunks) {
    const auto first = static_cast<std::int64_t>(frame_index);
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(dir / chunk.file);
    } catch (const IntegrityError&) {
      throw IntegrityError("missing chunk '" + chunk.file + "' (frame " + std::to_string(first) + ")", first);
    }
    if (bytes.size() != chunk.bytes || checksum(bytes) != chunk.crc32)
      throw IntegrityError("checksum mismatch in '" + chunk.file + "' (frame " + std::to_string(first) + ")", first);
    ByteReader r(bytes);
    try {
      if (!std::equal(kChunkMagic.begin(), kChunkMagic.end(), r.get_bytes(kChunkMagic.size()).begin()))
        throw IntegrityError("bad chunk magic in '" + chunk.file + "'", first, 0);
      const auto n = r.get<std::uint32_t>();
      if (n != chunk.frames) throw IntegrityError("frame count disagrees with manifest in '" + chunk.file + "'", first);
      for (std::uint32_t i = 0; i < n; ++i, ++frame_index) {
        DemoFrame f = decode_demo_frame(r);
        if (!(f.timestamp > last))
          throw IntegrityError("frames out of time order at frame " + std::to_string(frame_index),
                               static_cast<std::int64_t>(frame_index));
        last = f.timestamp;
        s.frames.push_back(std::move(f));
      }
      if (!r.done()) throw IntegrityError("trailing bytes in '" + chunk.file + "'", first);
    } catch (const IntegrityError& e) {
      if (e.frame_index() >= 0) throw;
      throw IntegrityError(std::string(e.what()) + " in '" + chunk.file + "' (frame " + std::to_string(frame_index) +
                               ")",
                           static_cast<std::int64_t>(frame_index), e.byte_offset());
    }
  }
  if (frame_index != s.manifest.frame_count)
    throw IntegrityError("manifest lists " + std::to_string(s.manifest.frame_count) + " frames but chunks hold " +
                             std::to_string(frame_index),
                         static_cast<std::int64_t>(frame_index));
  return s;
}

SessionRecorder::SessionRecorder(const fs::path& root, std::string id, const EngineConfig& config,
                                 const RobotModel& model) {
  if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos)
    throw ContractError("invalid session id '" + id + "'");
  dir_ = session_dir(root, id);
  if (fs::exists(dir_)) throw StateError("session '" + id + "' already exists");
  fs::create_directories(dir_);
  manifest_.id = std::move(id);
  manifest_.config_json = engine_config_to_json(config);
  manifest_.model_json = robot_model_to_json(model);
  write_manifest();
}

SessionRecorder SessionRecorder::resume(const fs::path& dir) {
  SessionRecorder r;
  r.dir_ = dir;
  r.manifest_ = read_manifest(dir);
  if (r.manifest_.status != SessionStatus::Recording)
    throw StateError("session '" + r.manifest_.id + "' is " + to_string(r.manifest_.status) + " and immutable");
  if (!r.manifest_.chunks.empty()) {
    const DemoSession loaded = load_session(dir);
    if (!loaded.frames.empty()) r.last_timestamp_ = loaded.frames.back().timestamp;
  }
  return r;
}

void SessionRecorder::require_recording(const char* what) const {
  if (manifest_.status != SessionStatus::Recording)
    throw StateError(std::string("cannot ") + what + " a " + to_string(manifest_.status) + " session");
}

void SessionRecorder::append(const DemoFrame& frame) {
  require_recording("append to");
  if (!(frame.timestamp > last_timestamp_))
    throw OrderingError("demo frame at t=" + std::to_string(frame.timestamp) + " does not follow t=" +
                        std::to_string(last_timestamp_));
  pending_.push_back(quantize_frame(frame));
  last_timestamp_ = frame.timestamp;
  ++manifest_.frame_count;
  manifest_.events.add(frame.events);
  if (pending_.size() == kFramesPerChunk) {
    flush_chunk();
    write_manifest();
  }
}

void SessionRecorder::flush_chunk() {
  if (pending_.empty()) return;
  ByteWriter w;
  w.put_bytes(kChunkMagic);
  w.put(static_cast<std::uint32_t>(pending_.size()));
  for (const auto& f : pending_) encode_demo_frame(w, f);
  ChunkInfo info;
  info.file = chunk_name(manifest_.chunks.size());
  info.frames = static_cast<std::uint32_t>(pending_.size());
  info.bytes = w.size();
  info.crc32 = checksum(w.bytes());
  write_file(dir_ / info.file, w.bytes());
  manifest_.chunks.push_back(std::move(info));
  pending_.clear();
}

void SessionRecorder::write_manifest() const { write_text(dir_ / "manifest", manifest_to_json(manifest_)); }

const SessionManifest& SessionRecorder::finalize() {
  require_recording("finalize");
  flush_chunk();
  manifest_.status = SessionStatus::Finalized;
  write_manifest();
  for (const auto& c : manifest_.chunks) make_read_only(dir_ / c.file);
  make_read_only(dir_ / "manifest");
  return manifest_;
}

void SessionRecorder::discard() {
  require_recording("discard");
  pending_.clear();
  for (const auto& c : manifest_.chunks) fs::remove(dir_ / c.file);
  manifest_.chunks.clear();
  manifest_.status = SessionStatus::Discarded;
  write_manifest();
  make_read_only(dir_ / "manifest");
}

// Post-processing -----------------------------------------------------------

Rgb link_color(std::size_t link_index) {
  static constexpr std::array<Rgb, 8> kTable{{{230, 230, 230},
                                              {255, 140, 0},
                                              {70, 130, 180},
                                              {60, 179, 113},
                                              {218, 112, 214},
                                              {240, 200, 60},
                                              {200, 70, 70},
                                              {120, 120, 255}}};
  return kTable[link_index % kTable.size()];
}

ColoredPointCloud render_robot_cloud(const RobotModel& model, const JointConfig& q, const Pose& base,
                                     const Pose& camera_world, const CameraModel& cam, int samples_per_sphere) {
  if (samples_per_sphere < 1) throw ContractError("need at least one sample per sphere");
  cam.validate();
  const KinematicState kin = compute_kinematics(model, q);
  const Pose world_to_camera = camera_world.inverse();
  const Vec3 eye = camera_world.position;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const int n = samples_per_sphere;

  ColoredPointCloud out;
  for (std::size_t l = 0; l < model.links.size(); ++l) {
    const Pose link_world = base * kin.links[l];
    for (const auto& s : model.links[l].spheres) {
      const Vec3 c = link_world.transform(s.center);
      for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        const Vec3 normal(r * std::cos(phi), r * std::sin(phi), z);
        const Vec3 p = c + s.radius * normal;
        if (normal.dot(eye - p) > 0.0 && in_frustum(world_to_camera.transform(p), cam))
          out.points.push_back({p, link_color(l)});
      }
    }
  }
  return out;
}

ProcessedFrame postprocess_frame(const DemoFrame& frame, const Box& crop, const RobotModel& model,
                                 const CameraModel& cam, int samples_per_sphere) {
  ProcessedFrame out;
  out.timestamp = frame.timestamp;
  out.q = frame.q;
  out.headset = frame.headset;
  out.robot_base = frame.robot_base;
  out.gripper = frame.gripper;
  out.events = frame.events;

  const Pose camera_world = frame.headset * cam.mount;
  for (const auto& p : transform_cloud(frame.cloud, camera_world).points) {
    if (!crop.contains(p.position)) continue;
    out.cloud.points.push_back(p);
    out.sources.push_back(PointSource::Scene);
  }
  const auto robot = render_robot_cloud(model, frame.q, frame.robot_base, camera_world, cam, samples_per_sphere);
  for (const auto& p : robot.points) {
    if (!crop.contains(p.position)) continue;
    out.cloud.points.push_back(p);
    out.sources.push_back(PointSource::Robot);
  }
  return out;
}

std::vector<ProcessedFrame> postprocess_session(const DemoSession& session, std::optional<Box> crop,
                                                int samples_per_sphere) {
  if (session.status() != SessionStatus::Finalized)
    throw StateError("only finalized sessions can be post-processed (session is " + to_string(session.status()) + ")");
  const Box box = crop.value_or(session.config.workspace);
  std::vector<ProcessedFrame> out;
  out.reserve(session.frames.size());
  for (std::size_t i = 0; i < session.frames.size(); ++i) {
    if (session.frames[i].q.size() != session.model.dof())
      throw IntegrityError("frame " + std::to_string(i) + " has " + std::to_string(session.frames[i].q.size()) +
                               " joint angles, model expects " + std::to_string(session.model.dof()),
                           static_cast<std::int64_t>(i));
    out.push_back(postprocess_frame(session.frames[i], box, session.model, session.config.camera, samples_per_sphere));
  }
  return out;
}

void write_processed(const fs::path& path, const std::vector<ProcessedFrame>& frames) {
  ByteWriter w;
  w.put_bytes(kProcessedMagic);
  w.put(static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) {
    w.put(f.timestamp);
    w.put(static_cast<std::uint32_t>(f.cloud.size()));
    for (std::size_t i = 0; i < f.cloud.size(); ++i) {
      const auto& p = f.cloud.points[i];
      for (int a = 0; a < 3; ++a) w.put(static_cast<float>(p.position[a]));
      for (auto c : p.rgb) w.put(c);
      w.put(static_cast<std::uint8_t>(f.sources[i]));
    }
    put_joints(w, f.q);
    put_pose(w, f.headset);
    put_pose(w, f.robot_base);
    w.put(gripper_byte(f.gripper));
    w.put(f.events);
  }
  write_file(path, w.bytes());
}

std::vector<ProcessedFrame> read_processed(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  if (bytes.size() < kProcessedMagic.size() ||
      !std::equal(kProcessedMagic.begin(), kProcessedMagic.end(), bytes.begin()))
    throw IntegrityError("'" + path.string() + "' is not a processed session file", -1, 0);
  r.get_bytes(kProcessedMagic.size());
  const auto n = r.get<std::uint32_t>();
  std::vector<ProcessedFrame> out;
  for (std::uint32_t k = 0; k < n; ++k) {
    try {
      ProcessedFrame f;
      f.timestamp = r.get<double>();
      const auto count = r.get<std::uint32_t>();
      if (static_cast<std::uint64_t>(count) * 16 > r.remaining())
        throw IntegrityError("point records extend past the end of the file", -1,
                             static_cast<std::int64_t>(r.offset()));
      f.cloud.points.resize(count);
      f.sources.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        auto& p = f.cloud.points[i];
        for (int a = 0; a < 3; ++a) p.position[a] = r.get<float>();
        for (auto& c : p.rgb) c = r.get<std::uint8_t>();
        const auto src = r.get<std::uint8_t>();
        if (src > 1) throw IntegrityError("invalid point source label", -1, static_cast<std::int64_t>(r.offset() - 1));
        f.sources[i] = static_cast<PointSource>(src);
      }
      f.q = get_joints(r);
      f.headset = get_pose(r);
      f.robot_base = get_pose(r);
      const std::size_t at = r.offset();
      f.gripper = gripper_from_byte(r.get<std::uint8_t>(), at);
      f.events = r.get<std::uint8_t>();
      out.push_back(std::move(f));
    } catch (const IntegrityError& e) {
      throw IntegrityError(std::string(e.what()) + " (frame " + std::to_string(k) + ")", k, e.byte_offset());
    }
  }
  if (!r.done()) throw IntegrityError("trailing bytes in processed file", -1, static_cast<std::int64_t>(r.offset()));
  return out;
}

}  // namespace arcap
