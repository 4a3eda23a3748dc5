#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arcap/kinematics.hpp"
#include "arcap/retargeting.hpp"
#include "arcap/robot_model.hpp"
#include "arcap/scene_feedback.hpp"

namespace arcap {

// Axis-aligned box in the world frame.
struct Box {
  Vec3 min = Vec3(0.1, -0.4, 0.0);
  Vec3 max = Vec3(0.8, 0.4, 0.5);

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  std::array<Vec3, 8> corners() const;
  bool operator==(const Box& o) const { return min == o.min && max == o.max; }
};

struct EngineConfig {
  std::string model = "arm7_dexhand";  // model name or path to a model file
  Embodiment embodiment = Embodiment::DexHand;
  IkParams ik;
  double open_width = kDefaultOpenWidth;
  double toggle_period = kDefaultTogglePeriod;
  CameraModel camera;
  double voxel_resolution = 0.02;
  Vec3 voxel_origin = Vec3::Zero();
  double collision_margin = 0.01;
  double speed_position_threshold = 0.05;
  double speed_orientation_threshold = 15.0 * M_PI / 180.0;
  double visibility_threshold = kDefaultVisibilityThreshold;
  double tick_rate = 60.0;
  Box workspace;
  Pose robot_base;
  std::vector<Vec3> watch_points;  // empty: the workspace corners

  void validate() const;
  std::vector<Vec3> effective_watch_points() const;
};

// Structured-text form of EngineConfig (JSON). Unknown keys are rejected.
EngineConfig parse_engine_config(std::string_view text);
EngineConfig load_engine_config(const std::filesystem::path& path);
std::string engine_config_to_json(const EngineConfig& config);

// Resolves a model reference: an existing file path, or a bare name looked up
// as <name>.json in $ARCAP_MODEL_DIR and then the built-in model directory.
std::filesystem::path resolve_model_path(const std::string& ref);
RobotModel load_config_model(const EngineConfig& config);

inline constexpr double kBlinkHalfPeriod = 0.25;  // 2 Hz square wave

struct EngineState {
  JointConfig q;
  GripperState gripper;
  double last_timestamp = -std::numeric_limits<double>::infinity();
  bool started = false;
  FeedbackDisplay display;
  double blink_start = 0.0;
};

EngineState initial_engine_state(const RobotModel& model);

struct EngineOutput {
  double timestamp = 0.0;
  JointConfig q;
  std::optional<GripperCommand> gripper;
  Pose ee_pose;  // tracking frame, world
  std::vector<FeedbackEvent> events;
  FeedbackDisplay display;
  bool lagging = false;
  bool ik_converged = false;

  bool operator==(const EngineOutput& o) const {
    return timestamp == o.timestamp && q == o.q && gripper == o.gripper && ee_pose == o.ee_pose &&
           events == o.events && display == o.display && lagging == o.lagging && ik_converged == o.ik_converged;
  }
};

struct TickResult {
  EngineState state;
  EngineOutput output;
};

// One engine tick: retarget, solve IK warm-started from the previous joint
// angles, clamp to the velocity limits over the timestamp delta, then run the
// collision, visibility and tracking checks. The first tick after a reset has
// no delta to clamp against and snaps to the IK solution.
TickResult process_frame(const EngineState& state, const HandFrame& frame, const EngineConfig& config,
                         const RobotModel& model, const VoxelGrid& grid);

EngineConfig place_virtual_robot(const EngineConfig& config, const Pose& base);

// Camera pose in the robot base frame: inverse(T_wb) ∘ T_wc.
Pose calibrate_extrinsics(const Pose& world_base, const Pose& world_camera);

VoxelGrid build_scene_grid(const ColoredPointCloud& cloud, const EngineConfig& config);

// Serialized engine session: owns its state, shares the model and grid.
class Engine {
 public:
  Engine(EngineConfig config, std::shared_ptr<const RobotModel> model,
         std::shared_ptr<const VoxelGrid> grid = nullptr);

  EngineOutput tick(const HandFrame& frame);
  void reset();
  void set_scene(std::shared_ptr<const VoxelGrid> grid);
  void place_robot(const Pose& base);

  const EngineConfig& config() const { return config_; }
  const RobotModel& model() const { return *model_; }
  const VoxelGrid& grid() const { return *grid_; }
  const EngineState& state() const { return state_; }

 private:
  EngineConfig config_;
  std::shared_ptr<const RobotModel> model_;
  std::shared_ptr<const VoxelGrid> grid_;
  EngineState state_;
};

}  // namespace arcap
