#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcap/pose.hpp"

namespace arcap {

enum class Embodiment { DexHand, ParallelGripper, Bare };

enum class JointType { Revolute, Prismatic };

struct Mimic {
  std::string joint;
  double multiplier = 1.0;
  int source = -1;  // index into RobotModel::joints
};

struct Joint {
  std::string name;
  std::string parent;
  std::string child;
  Pose origin;
  Vec3 axis = Vec3::UnitZ();
  JointType type = JointType::Revolute;
  double lower = 0.0;
  double upper = 0.0;
  double velocity = 0.0;
  std::optional<Mimic> mimic;

  // Resolved by RobotModel::finalize().
  int parent_link = -1;
  int child_link = -1;
  int dof = -1;  // -1 for mimic joints
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct Link {
  std::string name;
  std::vector<Sphere> spheres;
  int parent_joint = -1;
};

struct Frame {
  std::string name;
  std::string link;
  Pose offset;
  int link_index = -1;
};

struct GripperSpec {
  std::string joint;
  double open = 0.0;
  double closed = 0.0;
  int dof = -1;
};

class RobotModel {
 public:
  std::string name;
  Embodiment embodiment = Embodiment::Bare;
  // Frame driven by the retargeted wrist target.
  std::string tracking_frame = "ee";
  std::vector<std::string> fingertip_frames;
  std::optional<GripperSpec> gripper;
  std::vector<Joint> joints;  // topologically ordered after finalize()
  std::vector<Link> links;
  std::vector<Frame> frames;
  std::vector<double> rest;  // rest posture, one entry per DOF

  // Resolves names to indices, orders joints parent-first and validates every
  // structural invariant. Throws ContractError on violation.
  void finalize();

  std::size_t dof() const { return dof_joint_.size(); }
  int base_link() const { return base_link_; }

  const Joint& dof_joint(std::size_t i) const { return joints[dof_joint_[i]]; }

  std::optional<int> find_frame(std::string_view frame) const;
  std::optional<int> find_link(std::string_view link) const;
  int frame_index(std::string_view frame) const;  // throws ContractError if absent

  // DOF indices that move the given link, root first.
  std::vector<int> chain_dofs(int link) const;

  std::vector<double> lower_limits() const;
  std::vector<double> upper_limits() const;
  std::vector<double> velocity_limits() const;

  bool within_limits(const std::vector<double>& q) const;

 private:
  std::vector<int> dof_joint_;
  int base_link_ = -1;
};

std::string to_string(Embodiment e);
Embodiment embodiment_from_string(std::string_view s);

// Robot model document (JSON, `schema: 1`). See docs/model_format.md.
RobotModel parse_robot_model(std::string_view text);
RobotModel load_robot_model(const std::filesystem::path& path);
std::string robot_model_to_json(const RobotModel& model);

}  // namespace arcap
