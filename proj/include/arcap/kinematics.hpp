#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "arcap/pose.hpp"
#include "arcap/robot_model.hpp"

namespace arcap {

// Joint angles in radians (metres for prismatic joints), one per actuated DOF.
using JointConfig = std::vector<double>;

// Per-link world poses plus the world frame of every joint axis.
struct KinematicState {
  std::vector<Pose> links;
  std::vector<Pose> joint_frames;  // parent link pose ∘ joint origin, before the joint motion
};

KinematicState compute_kinematics(const RobotModel& model, const JointConfig& q);

Pose frame_pose(const RobotModel& model, const KinematicState& state, int frame);

// Pose of every named frame relative to the model base. Throws ContractError on
// a dimension mismatch.
std::map<std::string, Pose> forward_kinematics(const RobotModel& model, const JointConfig& q);

// Geometric Jacobian of `frame` with respect to the listed DOFs: rows 0..2 are
// linear velocity, rows 3..5 angular velocity, all in the base frame.
Eigen::MatrixXd frame_jacobian(const RobotModel& model, const KinematicState& state, int frame,
                               const std::vector<int>& dofs);

struct IkParams {
  double damping = 0.05;
  int max_iterations = 50;
  double position_tolerance = 1e-4;
  double orientation_tolerance = 1e-3;
  double nullspace_gain = 0.1;
  // Weight of the orientation rows relative to the position rows. Zero turns
  // the frame solve into a position-only solve.
  double orientation_weight = 0.5;
  JointConfig rest;  // empty: use the model's rest posture

  void validate() const;
};

struct IkResult {
  JointConfig q;
  double position_residual = 0.0;
  double orientation_residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Damped least squares on the 6-D frame error with null-space regulation toward
// the rest posture. Only the DOFs that move `frame` are touched. Never throws on
// non-convergence; returns the best iterate instead.
IkResult solve_frame_ik(const RobotModel& model, const std::string& frame, const Pose& target,
                        const JointConfig& q_init, const IkParams& params);

struct FingertipIkResult {
  JointConfig q;
  std::map<std::string, double> residuals;
  bool converged = false;
};

// Position-only solve of each finger sub-chain toward its tip target (base
// frame). Joints shared with the tracking frame (the arm) are left untouched.
FingertipIkResult solve_fingertip_ik(const RobotModel& model, const std::map<std::string, Vec3>& targets,
                                     const JointConfig& q_init, const IkParams& params);

struct JointStep {
  JointConfig q;
  bool lagging = false;
};

// Advances q_prev toward q_target without exceeding any joint's velocity limit
// over dt, then clamps to position limits.
JointStep clamp_joint_step(const JointConfig& q_prev, const JointConfig& q_target, double dt,
                           const RobotModel& model);

JointConfig clamp_to_limits(const RobotModel& model, JointConfig q);

}  // namespace arcap
