#include "arcap/engine.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "arcap/errors.hpp"
#include "json_io.hpp"

#ifndef ARCAP_BUILTIN_MODEL_DIR
#define ARCAP_BUILTIN_MODEL_DIR ""
#endif

namespace arcap {

using jsonio::json;

namespace {

constexpr int kSnapIterations = 200;

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  std::set<std::string> known;
  for (const char* k : keys) known.insert(k);
  for (const auto& [k, v] : obj.items())
    if (!known.count(k)) throw ContractError("unknown key '" + k + "' in " + where);
}

struct Solved {
  JointConfig q;
  bool converged = false;
};

Solved solve_target(const RobotModel& model, const EmbodimentTarget& target, const JointConfig& q_init,
                    const IkParams& params) {
  const IkResult wrist = solve_frame_ik(model, model.tracking_frame, target.wrist, q_init, params);
  Solved out{wrist.q, wrist.converged};
  if (target.fingertips) {
    FingertipIkResult tips = solve_fingertip_ik(model, *target.fingertips, out.q, params);
    out.q = std::move(tips.q);
    out.converged = out.converged && tips.converged;
  }
  if (target.gripper && model.gripper) {
    out.q[model.gripper->dof] = *target.gripper == GripperCommand::Open ? model.gripper->open : model.gripper->closed;
  }
  return out;
}

}  // namespace

std::array<Vec3, 8> Box::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i)
    out[i] = Vec3((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(), (i & 4) ? max.z() : min.z());
  return out;
}

void EngineConfig::validate() const {
  ik.validate();
  camera.validate();
  if (!(open_width > 0.0)) throw ContractError("gripper open width must be positive");
  if (!(toggle_period >= 0.0)) throw ContractError("gripper toggle period must be non-negative");
  if (!(voxel_resolution > 0.0)) throw ContractError("voxel resolution must be positive");
  if (!(collision_margin >= 0.0)) throw ContractError("collision margin must be non-negative");
  if (!(speed_position_threshold > 0.0) || !(speed_orientation_threshold > 0.0))
    throw ContractError("speed-mismatch thresholds must be positive");
  if (!(visibility_threshold >= 0.0 && visibility_threshold <= 1.0))
    throw ContractError("visibility threshold must lie in [0, 1]");
  if (!(tick_rate > 0.0)) throw ContractError("tick rate must be positive");
  if (!(workspace.min.array() <= workspace.max.array()).all())
    throw ContractError("workspace corners must be ordered per axis");
}

std::vector<Vec3> EngineConfig::effective_watch_points() const {
  if (!watch_points.empty()) return watch_points;
  const auto c = workspace.corners();
  return {c.begin(), c.end()};
}

EngineConfig parse_engine_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("engine config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ContractError("engine config must be a JSON object");
  EngineConfig c;
  try {
    reject_unknown(doc,
                   {"schema", "model", "embodiment", "ik", "gripper", "camera", "collision", "speed_mismatch",
                    "visibility_threshold", "tick_rate", "workspace", "robot_base", "watch_points"},
                   "engine config");
    if (doc.value("schema", 1) != 1) throw ContractError("engine config must declare schema: 1");
    c.model = doc.value("model", c.model);
    if (doc.contains("embodiment")) c.embodiment = embodiment_from_string(doc.at("embodiment").get<std::string>());
    if (doc.contains("ik")) {
      const auto& j = doc.at("ik");
      reject_unknown(j,
                     {"damping", "max_iterations", "position_tolerance", "orientation_tolerance", "nullspace_gain",
                      "orientation_weight", "rest"},
                     "ik");
      c.ik.damping = j.value("damping", c.ik.damping);
      c.ik.max_iterations = j.value("max_iterations", c.ik.max_iterations);
      c.ik.position_tolerance = j.value("position_tolerance", c.ik.position_tolerance);
      c.ik.orientation_tolerance = j.value("orientation_tolerance", c.ik.orientation_tolerance);
      c.ik.nullspace_gain = j.value("nullspace_gain", c.ik.nullspace_gain);
      c.ik.orientation_weight = j.value("orientation_weight", c.ik.orientation_weight);
      if (j.contains("rest")) c.ik.rest = j.at("rest").get<std::vector<double>>();
    }
    if (doc.contains("gripper")) {
      const auto& j = doc.at("gripper");
      reject_unknown(j, {"open_width", "toggle_period"}, "gripper");
      c.open_width = j.value("open_width", c.open_width);
      c.toggle_period = j.value("toggle_period", c.toggle_period);
    }
    if (doc.contains("camera")) {
      const auto& j = doc.at("camera");
      reject_unknown(j, {"hfov_deg", "vfov_deg", "near", "far", "mount"}, "camera");
      c.camera.hfov_deg = j.value("hfov_deg", c.camera.hfov_deg);
      c.camera.vfov_deg = j.value("vfov_deg", c.camera.vfov_deg);
      c.camera.near = j.value("near", c.camera.near);
      c.camera.far = j.value("far", c.camera.far);
      if (j.contains("mount")) c.camera.mount = jsonio::pose(j.at("mount"));
    }
    if (doc.contains("collision")) {
      const auto& j = doc.at("collision");
      reject_unknown(j, {"voxel_resolution", "voxel_origin", "margin"}, "collision");
      c.voxel_resolution = j.value("voxel_resolution", c.voxel_resolution);
      if (j.contains("voxel_origin")) c.voxel_origin = jsonio::vec3(j.at("voxel_origin"));
      c.collision_margin = j.value("margin", c.collision_margin);
    }
    if (doc.contains("speed_mismatch")) {
      const auto& j = doc.at("speed_mismatch");
      reject_unknown(j, {"position", "orientation_deg"}, "speed_mismatch");
      c.speed_position_threshold = j.value("position", c.speed_position_threshold);
      if (j.contains("orientation_deg")) c.speed_orientation_threshold = j.at("orientation_deg").get<double>() * M_PI / 180.0;
    }
    c.visibility_threshold = doc.value("visibility_threshold", c.visibility_threshold);
    c.tick_rate = doc.value("tick_rate", c.tick_rate);
    if (doc.contains("workspace")) {
      const auto& j = doc.at("workspace");
      reject_unknown(j, {"min", "max"}, "workspace");
      c.workspace.min = jsonio::vec3(j.at("min"));
      c.workspace.max = jsonio::vec3(j.at("max"));
    }
    if (doc.contains("robot_base")) c.robot_base = jsonio::pose(doc.at("robot_base"));
    if (doc.contains("watch_points"))
      for (const auto& p : doc.at("watch_points")) c.watch_points.push_back(jsonio::vec3(p));
  } catch (const json::exception& e) {
    throw ContractError(std::string("engine config: ") + e.what());
  }
  c.validate();
  return c;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open engine config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_engine_config(ss.str());
}

std::string engine_config_to_json(const EngineConfig& c) {
  json doc;
  doc["schema"] = 1;
  doc["model"] = c.model;
  doc["embodiment"] = to_string(c.embodiment);
  doc["ik"] = {{"damping", c.ik.damping},
               {"max_iterations", c.ik.max_iterations},
               {"position_tolerance", c.ik.position_tolerance},
               {"orientation_tolerance", c.ik.orientation_tolerance},
               {"nullspace_gain", c.ik.nullspace_gain},
               {"orientation_weight", c.ik.orientation_weight}};
  if (!c.ik.rest.empty()) doc["ik"]["rest"] = c.ik.rest;
  doc["gripper"] = {{"open_width", c.open_width}, {"toggle_period", c.toggle_period}};
  doc["camera"] = {{"hfov_deg", c.camera.hfov_deg},
                   {"vfov_deg", c.camera.vfov_deg},
                   {"near", c.camera.near},
                   {"far", c.camera.far},
                   {"mount", jsonio::pose(c.camera.mount)}};
  doc["collision"] = {
      {"voxel_resolution", c.voxel_resolution}, {"voxel_origin", jsonio::vec3(c.voxel_origin)}, {"margin", c.collision_margin}};
  doc["speed_mismatch"] = {{"position", c.speed_position_threshold},
                           {"orientation_deg", c.speed_orientation_threshold * 180.0 / M_PI}};
  doc["visibility_threshold"] = c.visibility_threshold;
  doc["tick_rate"] = c.tick_rate;
  doc["workspace"] = {{"min", jsonio::vec3(c.workspace.min)}, {"max", jsonio::vec3(c.workspace.max)}};
  doc["robot_base"] = jsonio::pose(c.robot_base);
  if (!c.watch_points.empty()) {
    doc["watch_points"] = json::array();
    for (const auto& p : c.watch_points) doc["watch_points"].push_back(jsonio::vec3(p));
  }
  return doc.dump(2);
}

std::filesystem::path resolve_model_path(const std::string& ref) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(ref)) return ref;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("ARCAP_MODEL_DIR"); env && *env) dirs.emplace_back(env);
  if (*ARCAP_BUILTIN_MODEL_DIR) dirs.emplace_back(ARCAP_BUILTIN_MODEL_DIR);
  for (const auto& d : dirs) {
    const fs::path p = d / (ref + ".json");
    if (fs::is_regular_file(p)) return p;
  }
  throw ContractError("cannot find robot model '" + ref + "'");
}

RobotModel load_config_model(const EngineConfig& config) {
  RobotModel m = load_robot_model(resolve_model_path(config.model));
  if (m.embodiment != config.embodiment)
    throw ContractError("model '" + m.name + "' is " + to_string(m.embodiment) + " but the config asks for " +
                        to_string(config.embodiment));
  return m;
}

EngineState initial_engine_state(const RobotModel& model) {
  EngineState s;
  s.q = model.rest;
  return s;
}

TickResult process_frame(const EngineState& state, const HandFrame& frame, const EngineConfig& config,
                         const RobotModel& model, const VoxelGrid& grid) {
  validate_hand_frame(frame);
  if (!(frame.timestamp > state.last_timestamp))
    throw OrderingError("hand frame at t=" + std::to_string(frame.timestamp) + " does not follow t=" +
                        std::to_string(state.last_timestamp));
  if (model.embodiment != config.embodiment) throw ContractError("model embodiment does not match the engine config");

  TickResult r;
  r.state = state;
  EngineOutput& out = r.output;
  out.timestamp = frame.timestamp;

  EmbodimentTarget target;
  switch (model.embodiment) {
    case Embodiment::DexHand:
      target = retarget_dex_hand(frame, config.robot_base);
      break;
    case Embodiment::ParallelGripper: {
      GripperRetarget g =
          retarget_parallel_gripper(frame, state.gripper, config.open_width, config.toggle_period, config.robot_base);
      target = std::move(g.target);
      r.state.gripper = g.state;
      out.gripper = target.gripper;
      break;
    }
    case Embodiment::Bare:
      target.wrist = config.robot_base.inverse() * frame.wrist;
      break;
  }

  if (!state.started) {
    IkParams snap = config.ik;
    snap.max_iterations = std::max(snap.max_iterations, kSnapIterations);
    const Solved s = solve_target(model, target, state.q, snap);
    out.q = s.q;
    out.ik_converged = s.converged;
  } else {
    const Solved s = solve_target(model, target, state.q, config.ik);
    JointStep step = clamp_joint_step(state.q, s.q, frame.timestamp - state.last_timestamp, model);
    out.q = std::move(step.q);
    out.lagging = step.lagging;
    out.ik_converged = s.converged;
  }

  const KinematicState kin = compute_kinematics(model, out.q);
  const Pose ee_base = frame_pose(model, kin, model.frame_index(model.tracking_frame));
  out.ee_pose = config.robot_base * ee_base;

  auto hits = check_collision(model, kin, config.robot_base, grid, config.collision_margin);
  if (!hits.empty()) out.events.push_back({frame.timestamp, CollisionDetail{std::move(hits)}});
  if (auto m = detect_speed_mismatch(target.wrist, ee_base, config.speed_position_threshold,
                                     config.speed_orientation_threshold))
    out.events.push_back({frame.timestamp, *m});
  const VisibilityResult vis = check_visibility(frame.headset * config.camera.mount, config.camera,
                                                config.effective_watch_points(), config.visibility_threshold);
  if (vis.lost) out.events.push_back({frame.timestamp, VisibilityDetail{vis.visible_fraction}});

  FeedbackDisplay display = compose_display(out.events, out.lagging);
  if (display.blinking) {
    const bool restart = !state.display.blinking || state.display.color != display.color;
    r.state.blink_start = restart ? frame.timestamp : state.blink_start;
    display.blink_phase =
        static_cast<std::uint32_t>(std::floor((frame.timestamp - r.state.blink_start) / kBlinkHalfPeriod));
  }
  out.display = display;

  r.state.q = out.q;
  r.state.last_timestamp = frame.timestamp;
  r.state.started = true;
  r.state.display = display;
  return r;
}

EngineConfig place_virtual_robot(const EngineConfig& config, const Pose& base) {
  if (!base.position.allFinite() || !base.orientation.coeffs().allFinite() ||
      std::abs(base.orientation.norm() - 1.0) > 1e-6)
    throw ContractError("robot base pose must be finite with a unit quaternion");
  EngineConfig out = config;
  out.robot_base = base;
  return out;
}

Pose calibrate_extrinsics(const Pose& world_base, const Pose& world_camera) {
  return world_base.inverse() * world_camera;
}

VoxelGrid build_scene_grid(const ColoredPointCloud& cloud, const EngineConfig& config) {
  return voxelize(cloud, config.voxel_origin, config.voxel_resolution);
}

Engine::Engine(EngineConfig config, std::shared_ptr<const RobotModel> model, std::shared_ptr<const VoxelGrid> grid)
    : config_(std::move(config)), model_(std::move(model)), grid_(std::move(grid)) {
  if (!model_) throw ContractError("engine needs a robot model");
  config_.validate();
  if (model_->embodiment != config_.embodiment)
    throw ContractError("model embodiment does not match the engine config");
  if (!grid_) grid_ = std::make_shared<VoxelGrid>(config_.voxel_origin, config_.voxel_resolution);
  reset();
}

EngineOutput Engine::tick(const HandFrame& frame) {
  TickResult r = process_frame(state_, frame, config_, *model_, *grid_);
  state_ = std::move(r.state);
  return std::move(r.output);
}

void Engine::reset() { state_ = initial_engine_state(*model_); }

void Engine::set_scene(std::shared_ptr<const VoxelGrid> grid) {
  grid_ = grid ? std::move(grid) : std::make_shared<VoxelGrid>(config_.voxel_origin, config_.voxel_resolution);
}

void Engine::place_robot(const Pose& base) {
  config_ = place_virtual_robot(config_, base);
  reset();
}

}  // namespace arcap
