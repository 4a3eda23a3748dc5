#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "arcap/kinematics.hpp"
#include "arcap/point_cloud.hpp"
#include "arcap/pose.hpp"
#include "arcap/robot_model.hpp"

namespace arcap {

using VoxelIndex = std::array<std::int32_t, 3>;

// Occupancy grid over a static scene. Index of point p is
// floor((p - origin) / resolution), lower-inclusive on each axis.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(const Vec3& origin, double resolution);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  double half_diagonal() const;

  VoxelIndex index_of(const Vec3& p) const;
  Vec3 center_of(const VoxelIndex& idx) const;

  void insert(const VoxelIndex& idx);
  bool occupied(const VoxelIndex& idx) const;
  std::size_t size() const { return occupied_.size(); }
  bool empty() const { return occupied_.empty(); }

  // Occupied indices in ascending lexicographic order.
  std::vector<VoxelIndex> indices() const;

 private:
  static std::uint64_t pack(const VoxelIndex& idx);
  static VoxelIndex unpack(std::uint64_t key);

  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 0.02;
  std::unordered_set<std::uint64_t> occupied_;
};

VoxelGrid voxelize(const ColoredPointCloud& cloud, const Vec3& origin, double resolution);

// Names of links with a sphere within radius + margin + half-diagonal of an
// occupied voxel center, in model link order.
std::vector<std::string> check_collision(const RobotModel& model, const JointConfig& q, const Pose& base,
                                         const VoxelGrid& grid, double margin);
std::vector<std::string> check_collision(const RobotModel& model, const KinematicState& state, const Pose& base,
                                         const VoxelGrid& grid, double margin);

// Pinhole depth camera; camera frame is +z forward, +x right, +y down.
struct CameraModel {
  double hfov_deg = 87.0;
  double vfov_deg = 58.0;
  double near = 0.3;
  double far = 3.0;
  Pose mount;  // camera pose in the headset frame

  void validate() const;
  bool operator==(const CameraModel&) const = default;
};

// Camera-convention pose at `eye` whose +z axis points at `target`, with +y
// as close to world -z (down) as the viewing direction allows.
Pose look_at(const Vec3& eye, const Vec3& target);

// Visibility of a point already expressed in the camera frame.
bool in_frustum(const Vec3& p_camera, const CameraModel& cam);

inline constexpr double kDefaultVisibilityThreshold = 0.95;

struct VisibilityResult {
  double visible_fraction = 0.0;
  bool lost = false;
};

VisibilityResult check_visibility(const Pose& camera_world, const CameraModel& cam, const std::vector<Vec3>& watch_points,
                                  double threshold = kDefaultVisibilityThreshold);

struct SpeedMismatch {
  double position_error = 0.0;
  double orientation_error = 0.0;
  bool operator==(const SpeedMismatch&) const = default;
};

std::optional<SpeedMismatch> detect_speed_mismatch(const Pose& target, const Pose& actual, double position_threshold,
                                                   double orientation_threshold);

enum class FeedbackKind : std::uint8_t { Collision = 0, SpeedLimit = 1, VisibilityLoss = 2 };

struct CollisionDetail {
  std::vector<std::string> links;
  bool operator==(const CollisionDetail&) const = default;
};

struct VisibilityDetail {
  double visible_fraction = 0.0;
  bool operator==(const VisibilityDetail&) const = default;
};

struct FeedbackEvent {
  double timestamp = 0.0;
  std::variant<CollisionDetail, SpeedMismatch, VisibilityDetail> detail;

  FeedbackKind kind() const { return static_cast<FeedbackKind>(detail.index()); }
  bool operator==(const FeedbackEvent&) const = default;
};

std::uint8_t event_mask(const std::vector<FeedbackEvent>& events);
constexpr std::uint8_t event_bit(FeedbackKind k) { return static_cast<std::uint8_t>(1u << static_cast<int>(k)); }

enum class FrameColor : std::uint8_t { Red = 0, Yellow = 1, Blue = 2 };

struct FeedbackDisplay {
  FrameColor color = FrameColor::Red;
  bool blinking = false;
  bool haptic = false;
  std::uint32_t blink_phase = 0;  // half-periods of the 2 Hz blink since blinking started

  bool operator==(const FeedbackDisplay&) const = default;
};

// Priority Blue (collision) > Yellow (lagging or speed mismatch) > Red.
FeedbackDisplay compose_display(const std::vector<FeedbackEvent>& events, bool lagging);

std::string to_string(FeedbackKind k);
std::string to_string(FrameColor c);
FrameColor frame_color_from_string(const std::string& s);

}  // namespace arcap
