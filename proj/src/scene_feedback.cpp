#include "arcap/scene_feedback.hpp"

#include <algorithm>
#include <cmath>

#include "arcap/errors.hpp"

namespace arcap {

namespace {

constexpr std::int64_t kIndexLimit = (1 << 20) - 1;  // 21-bit signed per axis

}  // namespace

VoxelGrid::VoxelGrid(const Vec3& origin, double resolution) : origin_(origin), resolution_(resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ContractError("voxel resolution must be positive");
  if (!origin.allFinite()) throw ContractError("voxel origin must be finite");
}

double VoxelGrid::half_diagonal() const { return 0.5 * std::sqrt(3.0) * resolution_; }

VoxelIndex VoxelGrid::index_of(const Vec3& p) const {
  VoxelIndex idx;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - origin_[a]) / resolution_);
    if (!(std::abs(f) <= static_cast<double>(kIndexLimit))) throw ContractError("point lies outside the voxel index range");
    idx[a] = static_cast<std::int32_t>(f);
  }
  return idx;
}

Vec3 VoxelGrid::center_of(const VoxelIndex& idx) const {
  return origin_ + resolution_ * Vec3(idx[0] + 0.5, idx[1] + 0.5, idx[2] + 0.5);
}

std::uint64_t VoxelGrid::pack(const VoxelIndex& idx) {
  std::uint64_t key = 0;
  for (int a = 0; a < 3; ++a) key = (key << 21) | (static_cast<std::uint64_t>(idx[a] + kIndexLimit + 1) & 0x1FFFFF);
  return key;
}

VoxelIndex VoxelGrid::unpack(std::uint64_t key) {
  VoxelIndex idx;
  for (int a = 2; a >= 0; --a) {
    idx[a] = static_cast<std::int32_t>(static_cast<std::int64_t>(key & 0x1FFFFF) - kIndexLimit - 1);
    key >>= 21;
  }
  return idx;
}

void VoxelGrid::insert(const VoxelIndex& idx) { occupied_.insert(pack(idx)); }

bool VoxelGrid::occupied(const VoxelIndex& idx) const {
  for (int a = 0; a < 3; ++a)
    if (std::abs(static_cast<std::int64_t>(idx[a])) > kIndexLimit) return false;
  return occupied_.count(pack(idx)) != 0;
}

std::vector<VoxelIndex> VoxelGrid::indices() const {
  std::vector<VoxelIndex> out;
  out.reserve(occupied_.size());
  for (auto key : occupied_) out.push_back(unpack(key));
  std::sort(out.begin(), out.end());
  return out;
}

VoxelGrid voxelize(const ColoredPointCloud& cloud, const Vec3& origin, double resolution) {
  VoxelGrid grid(origin, resolution);
  for (const auto& p : cloud.points) {
    if (!p.position.allFinite()) throw ContractError("point cloud contains a non-finite coordinate");
    grid.insert(grid.index_of(p.position));
  }
  return grid;
}

namespace {

bool sphere_hits_grid(const Vec3& center, double reach, const VoxelGrid& grid) {
  const double res = grid.resolution();
  VoxelIndex lo, hi;
  double box = 1.0;
  for (int a = 0; a < 3; ++a) {
    // voxel centers c = origin + (i + 0.5) res with |c - center| <= reach
    lo[a] = static_cast<std::int32_t>(std::ceil((center[a] - reach - grid.origin()[a]) / res - 0.5));
    hi[a] = static_cast<std::int32_t>(std::floor((center[a] + reach - grid.origin()[a]) / res - 0.5));
    if (hi[a] < lo[a]) return false;
    box *= static_cast<double>(hi[a] - lo[a] + 1);
  }
  const double reach2 = reach * reach;
  if (box > static_cast<double>(grid.size())) {
    for (const auto& idx : grid.indices())
      if ((grid.center_of(idx) - center).squaredNorm() <= reach2) return true;
    return false;
  }
  VoxelIndex idx;
  for (idx[0] = lo[0]; idx[0] <= hi[0]; ++idx[0])
    for (idx[1] = lo[1]; idx[1] <= hi[1]; ++idx[1])
      for (idx[2] = lo[2]; idx[2] <= hi[2]; ++idx[2])
        if (grid.occupied(idx) && (grid.center_of(idx) - center).squaredNorm() <= reach2) return true;
  return false;
}

}  // namespace

std::vector<std::string> check_collision(const RobotModel& model, const KinematicState& state, const Pose& base,
                                         const VoxelGrid& grid, double margin) {
  std::vector<std::string> hits;
  if (grid.empty()) return hits;
  for (std::size_t l = 0; l < model.links.size(); ++l) {
    const Pose link_world = base * state.links[l];
    for (const auto& s : model.links[l].spheres) {
      if (sphere_hits_grid(link_world.transform(s.center), s.radius + margin + grid.half_diagonal(), grid)) {
        hits.push_back(model.links[l].name);
        break;
      }
    }
  }
  return hits;
}

std::vector<std::string> check_collision(const RobotModel& model, const JointConfig& q, const Pose& base,
                                         const VoxelGrid& grid, double margin) {
  return check_collision(model, compute_kinematics(model, q), base, grid, margin);
}

void CameraModel::validate() const {
  if (!(near > 0.0 && near < far)) throw ContractError("camera needs 0 < near < far");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0))
    throw ContractError("camera field of view must lie in (0, 180) degrees");
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitX();  // looking straight up or down
  x.normalize();
  const Vec3 y = z.cross(x);
  Eigen::Matrix3d R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return Pose(eye, Quat(R));
}

bool in_frustum(const Vec3& p, const CameraModel& cam) {
  const double z = p.z();
  if (!(z >= cam.near && z <= cam.far)) return false;
  const double tan_h = std::tan(cam.hfov_deg * M_PI / 360.0);
  const double tan_v = std::tan(cam.vfov_deg * M_PI / 360.0);
  return std::abs(p.x() / z) <= tan_h && std::abs(p.y() / z) <= tan_v;
}

VisibilityResult check_visibility(const Pose& camera_world, const CameraModel& cam, const std::vector<Vec3>& watch_points,
                                  double threshold) {
  if (watch_points.empty()) throw ContractError("visibility check needs at least one watch point");
  cam.validate();
  const Pose world_to_camera = camera_world.inverse();
  std::size_t visible = 0;
  for (const auto& p : watch_points)
    if (in_frustum(world_to_camera.transform(p), cam)) ++visible;
  VisibilityResult r;
  r.visible_fraction = static_cast<double>(visible) / static_cast<double>(watch_points.size());
  r.lost = r.visible_fraction < threshold;
  return r;
}

std::optional<SpeedMismatch> detect_speed_mismatch(const Pose& target, const Pose& actual, double position_threshold,
                                                   double orientation_threshold) {
  if (!(position_threshold > 0.0) || !(orientation_threshold > 0.0))
    throw ContractError("speed-mismatch thresholds must be positive");
  SpeedMismatch m{(target.position - actual.position).norm(), angular_distance(target.orientation, actual.orientation)};
  if (m.position_error > position_threshold || m.orientation_error > orientation_threshold) return m;
  return std::nullopt;
}

std::uint8_t event_mask(const std::vector<FeedbackEvent>& events) {
  std::uint8_t mask = 0;
  for (const auto& e : events) mask |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(e.kind()));
  return mask;
}

FeedbackDisplay compose_display(const std::vector<FeedbackEvent>& events, bool lagging) {
  const std::uint8_t mask = event_mask(events);
  FeedbackDisplay d;
  if (mask & (1u << static_cast<unsigned>(FeedbackKind::Collision))) {
    d.color = FrameColor::Blue;
    d.blinking = true;
    d.haptic = true;
  } else if (lagging || (mask & (1u << static_cast<unsigned>(FeedbackKind::SpeedLimit)))) {
    d.color = FrameColor::Yellow;
    d.blinking = true;
  }
  return d;
}

std::string to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::Collision:
      return "collision";
    case FeedbackKind::SpeedLimit:
      return "speed_limit";
    case FeedbackKind::VisibilityLoss:
      return "visibility_loss";
  }
  return "unknown";
}

std::string to_string(FrameColor c) {
  switch (c) {
    case FrameColor::Red:
      return "red";
    case FrameColor::Yellow:
      return "yellow";
    case FrameColor::Blue:
      return "blue";
  }
  return "red";
}

FrameColor frame_color_from_string(const std::string& s) {
  if (s == "red") return FrameColor::Red;
  if (s == "yellow") return FrameColor::Yellow;
  if (s == "blue") return FrameColor::Blue;
  throw ProtocolError("unknown frame color '" + s + "'");
}

}  // namespace arcap
