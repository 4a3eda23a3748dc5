#include "arcap/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "arcap/kinematics.hpp"
#include "arcap/replay.hpp"

namespace arcap {

namespace {

const std::vector<std::pair<Scenario, const char*>> kNames = {
    {Scenario::Reach, "reach"},
    {Scenario::PickPlace, "pick_place"},
    {Scenario::SweepThroughObstacle, "sweep_through_obstacle"},
    {Scenario::FastJerk, "fast_jerk"},
    {Scenario::OutOfView, "out_of_view"},
};

double quintic(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

struct Segment {
  JointConfig from, to;
  double duration;
  std::optional<GripperCommand> gripper;
};

class Planner {
 public:
  Planner(const RobotModel& model, std::uint64_t seed) : model_(model), rng_(seed) {
    lo_ = model.lower_limits();
    hi_ = model.upper_limits();
    vel_ = model.velocity_limits();
    const int link = model.frames[model.frame_index(model.tracking_frame)].link_index;
    const auto chain = model.chain_dofs(link);
    arm_.assign(model.dof(), false);
    for (int d : chain) arm_[d] = true;
  }

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  // Arm joints perturbed around `center`; hand joints drawn from their open half.
  JointConfig random_near(const JointConfig& center, double amplitude) {
    JointConfig q = center;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double margin = 0.05 * (hi_[i] - lo_[i]);
      if (arm_[i]) {
        q[i] = std::clamp(center[i] + uniform(-amplitude, amplitude), lo_[i] + margin, hi_[i] - margin);
      } else if (!is_gripper(i)) {
        q[i] = std::clamp(center[i] + uniform(-0.1, 0.1) * (hi_[i] - lo_[i]), lo_[i] + margin, hi_[i] - margin);
      }
    }
    return q;
  }

  // Hand joints curled toward their upper limits, as when grasping.
  JointConfig curled(const JointConfig& q) const {
    JointConfig out = q;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (!arm_[i] && !is_gripper(i)) out[i] = lo_[i] + 0.6 * (hi_[i] - lo_[i]);
    return out;
  }

  JointConfig with_gripper(JointConfig q, std::optional<GripperCommand> g) const {
    if (model_.gripper && g) q[model_.gripper->dof] = *g == GripperCommand::Open ? model_.gripper->open : model_.gripper->closed;
    return q;
  }

  // Long enough that the quintic's peak speed stays at half the joint limit.
  double duration(const JointConfig& a, const JointConfig& b, double minimum = 1.5) const {
    double t = minimum;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (vel_[i] > 0.0) t = std::max(t, 1.875 * std::abs(b[i] - a[i]) / (0.5 * vel_[i]));
    return t;
  }

  Vec3 tracking_position(const JointConfig& q, const Pose& base) const {
    return (base * forward_kinematics(model_, q).at(model_.tracking_frame)).position;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  bool is_gripper(std::size_t i) const { return model_.gripper && model_.gripper->dof == static_cast<int>(i); }

  const RobotModel& model_;
  std::mt19937_64 rng_;
  std::vector<double> lo_, hi_, vel_;
  std::vector<bool> arm_;
};

struct Sample {
  double t;
  JointConfig q;
  std::optional<GripperCommand> gripper;
};

std::vector<Sample> sample_path(const std::vector<Segment>& segments, double rate) {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration;
  const auto n = static_cast<std::size_t>(std::ceil(total * rate)) + 1;
  std::vector<Sample> out;
  out.reserve(n);
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    while (seg + 1 < segments.size() && t >= seg_start + segments[seg].duration) {
      seg_start += segments[seg].duration;
      ++seg;
    }
    const Segment& s = segments[seg];
    const double a = quintic((t - seg_start) / s.duration);
    JointConfig q(s.from.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = s.from[i] + a * (s.to[i] - s.from[i]);
    out.push_back({t, std::move(q), s.gripper});
  }
  return out;
}

Pose rotate_about_z(const Pose& p, const Vec3& pivot, double angle) {
  const Quat r(Eigen::AngleAxisd(angle, Vec3::UnitZ()));
  Pose out;
  out.position = pivot + r * (p.position - pivot);
  out.orientation = (r * p.orientation).normalized();
  return out;
}

ColoredPointCloud obstacle_at(const Vec3& p, const EngineConfig& config) {
  ColoredPointCloud cloud;
  const double res = config.voxel_resolution;
  const Vec3 idx = ((p - config.voxel_origin) / res).array().floor();
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        const Vec3 c = config.voxel_origin + (idx + Vec3(dx + 0.5, dy + 0.5, dz + 0.5)) * res;
        cloud.points.push_back({c, Rgb{200, 40, 40}});
      }
  return cloud;
}

ColoredPointCloud table_cloud(const Box& ws) {
  ColoredPointCloud cloud;
  constexpr int n = 24;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = ws.min.x() + (ws.max.x() - ws.min.x()) * (i + 0.5) / n;
      const double y = ws.min.y() + (ws.max.y() - ws.min.y()) * (j + 0.5) / n;
      const auto shade = static_cast<std::uint8_t>(150 + 10 * ((i + j) % 3));
      cloud.points.push_back({Vec3(x, y, ws.min.z()), Rgb{shade, 140, 110}});
    }
  return cloud;
}

ColoredPointCloud camera_view(const ColoredPointCloud& world, const Pose& camera_world, const CameraModel& cam) {
  ColoredPointCloud out;
  const Pose inv = camera_world.inverse();
  for (const auto& p : world.points) {
    const Vec3 c = inv.transform(p.position);
    if (in_frustum(c, cam)) out.points.push_back({c, p.rgb});
  }
  return out;
}

}  // namespace

std::string to_string(Scenario s) {
  for (const auto& [k, name] : kNames)
    if (k == s) return name;
  return "";
}

Scenario scenario_from_string(const std::string& name) {
  for (const auto& [k, n] : kNames)
    if (name == n) return k;
  throw ContractError("unknown scenario '" + name + "'");
}

const std::vector<Scenario>& all_scenarios() {
  static const std::vector<Scenario> all = [] {
    std::vector<Scenario> v;
    for (const auto& [k, n] : kNames) v.push_back(k);
    return v;
  }();
  return all;
}

Simulation simulate(Scenario scenario, std::uint64_t seed, const EngineConfig& config, const RobotModel& model,
                    bool with_cloud) {
  config.validate();
  Planner plan(model, seed);
  const JointConfig rest = model.rest;
  const Pose& base = config.robot_base;
  const auto open = model.embodiment == Embodiment::ParallelGripper ? std::optional(GripperCommand::Open) : std::nullopt;
  const auto closed =
      model.embodiment == Embodiment::ParallelGripper ? std::optional(GripperCommand::Closed) : std::nullopt;

  std::vector<Segment> segments;
  auto move = [&](const JointConfig& a, const JointConfig& b, std::optional<GripperCommand> g, double min_t = 1.5) {
    segments.push_back({a, b, plan.duration(a, b, min_t), g});
  };
  auto dwell = [&](const JointConfig& q, double t, std::optional<GripperCommand> g) { segments.push_back({q, q, t, g}); };

  Simulation sim;
  switch (scenario) {
    case Scenario::Reach:
    case Scenario::FastJerk:
    case Scenario::OutOfView: {
      const JointConfig home = plan.with_gripper(rest, open);
      const JointConfig goal = plan.with_gripper(plan.random_near(rest, 0.4), open);
      dwell(home, 0.5, open);
      move(home, goal, open, scenario == Scenario::OutOfView ? 3.0 : 1.5);
      dwell(goal, 0.5, open);
      break;
    }
    case Scenario::PickPlace: {
      const JointConfig home = plan.with_gripper(rest, open);
      const JointConfig pick = plan.with_gripper(plan.random_near(rest, 0.35), open);
      const JointConfig place = plan.with_gripper(plan.random_near(rest, 0.35), closed);
      const JointConfig grasp = plan.with_gripper(plan.curled(pick), closed);
      const JointConfig carry = plan.curled(place);
      dwell(home, 0.5, open);
      move(home, pick, open);
      move(pick, grasp, closed, 1.2);
      move(grasp, carry, closed);
      move(carry, plan.with_gripper(place, open), open, 1.2);
      move(plan.with_gripper(place, open), home, open);
      break;
    }
    case Scenario::SweepThroughObstacle: {
      // Endpoints far enough apart that the obstacle at the midpoint leaves
      // both of them clear.
      JointConfig a, b;
      for (int attempt = 0; attempt < 200; ++attempt) {
        a = plan.with_gripper(plan.random_near(rest, 0.7), open);
        b = plan.with_gripper(plan.random_near(rest, 0.7), open);
        JointConfig mid(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
        const VoxelGrid grid = build_scene_grid(obstacle_at(plan.tracking_position(mid, base), config), config);
        if (check_collision(model, a, base, grid, config.collision_margin).empty() &&
            check_collision(model, b, base, grid, config.collision_margin).empty())
          break;
      }
      dwell(a, 0.3, open);
      move(a, b, open, 2.0);
      dwell(b, 0.3, open);
      break;
    }
  }

  const std::vector<Sample> path = sample_path(segments, config.tick_rate);
  if (scenario == Scenario::SweepThroughObstacle) {
    const JointConfig& a = segments[1].from;
    const JointConfig& b = segments[1].to;
    JointConfig mid(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
    sim.scene = obstacle_at(plan.tracking_position(mid, base), config);
  }

  const Vec3 look = 0.5 * (config.workspace.min + config.workspace.max);
  const Vec3 eye = look + Vec3(-1.05, 0.0, 0.75);
  const Pose headset_home = look_at(eye, look);
  const double total = path.back().t;

  Vec3 jerk_dir = Vec3::UnitY();
  if (scenario == Scenario::FastJerk) {
    const double a = plan.uniform(0.0, 2.0 * M_PI);
    jerk_dir = Vec3(std::cos(a), std::sin(a), 0.0);
  }
  const std::size_t jerk_begin = path.size() / 2;
  const auto jerk_end = jerk_begin + static_cast<std::size_t>(std::lround(0.5 * config.tick_rate));

  ColoredPointCloud world_scene;
  if (with_cloud) {
    world_scene = table_cloud(config.workspace);
    world_scene.points.insert(world_scene.points.end(), sim.scene.points.begin(), sim.scene.points.end());
  }

  for (std::size_t k = 0; k < path.size(); ++k) {
    const Sample& s = path[k];
    Pose headset = headset_home;
    if (scenario == Scenario::OutOfView) {
      const double bump = std::pow(std::sin(M_PI * s.t / total), 2);
      headset = rotate_about_z(headset_home, eye, bump * 110.0 * M_PI / 180.0);
    }
    HandFrameMsg m;
    m.frame = synthesize_hand_frame(model, s.q, base, headset, s.t, s.gripper, config.open_width);
    if (scenario == Scenario::FastJerk && k >= jerk_begin && k < jerk_end) m.frame.wrist.position += kJerkStep * jerk_dir;
    if (with_cloud) m.cloud = camera_view(world_scene, headset * config.camera.mount, config.camera);
    sim.frames.push_back(std::move(m));
    sim.reference.push_back(s.q);
  }
  return sim;
}

}  // namespace arcap
