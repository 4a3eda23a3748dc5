#include "arcap/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "arcap/errors.hpp"

namespace arcap {

namespace {

void require_dof(const RobotModel& model, const JointConfig& q) {
  if (q.size() != model.dof())
    throw ContractError("joint config has " + std::to_string(q.size()) + " entries, model '" + model.name + "' has " +
                        std::to_string(model.dof()) + " DOF");
}

double joint_value(const RobotModel& model, const Joint& j, const JointConfig& q) {
  if (j.mimic) return j.mimic->multiplier * q[model.joints[j.mimic->source].dof];
  return q[j.dof];
}

// Moves the active DOFs of q by delta and clamps them into their limits.
void apply_step(const RobotModel& model, const std::vector<int>& dofs, const Eigen::VectorXd& delta, JointConfig& q) {
  for (std::size_t k = 0; k < dofs.size(); ++k) {
    const Joint& j = model.dof_joint(dofs[k]);
    q[dofs[k]] = std::clamp(q[dofs[k]] + delta[static_cast<Eigen::Index>(k)], j.lower, j.upper);
  }
}

// I - J⁺J with a singular-value cutoff.
Eigen::MatrixXd nullspace_projector(const Eigen::MatrixXd& J) {
  const Eigen::Index n = J.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-6 * std::max(1.0, s.size() > 0 ? s[0] : 0.0);
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) N -= svd.matrixV().col(i) * svd.matrixV().col(i).transpose();
  }
  return N;
}

// Per-iteration task error is clamped so distant targets do not produce huge
// linearized steps.
constexpr double kMaxPositionStep = 0.05;
constexpr double kMaxOrientationStep = 0.3;

Vec3 clamp_norm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  return n > max_norm ? Vec3(v * (max_norm / n)) : v;
}

// (JᵀJ + λ²I)⁻¹ Jᵀ e
Eigen::VectorXd dls_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& e, double damping) {
  Eigen::MatrixXd A = J.transpose() * J;
  A.diagonal().array() += damping * damping;
  return A.ldlt().solve(J.transpose() * e);
}

// One DLS step plus the null-space pull toward `rest`. A joint whose step
// would leave its limits is pinned to that limit and the rest of the step is
// recomputed without it; clamping afterwards would leak null-space motion into
// the task and stall the solve near the limits.
Eigen::VectorXd limited_step(const RobotModel& model, const std::vector<int>& dofs, const JointConfig& q,
                             const Eigen::MatrixXd& J, const Eigen::VectorXd& e, double damping, double gain,
                             const JointConfig& rest) {
  const Eigen::Index n = J.cols();
  std::vector<bool> pinned(static_cast<std::size_t>(n), false);
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  for (Eigen::Index round = 0; round <= n; ++round) {
    Eigen::MatrixXd Jf = J;
    Eigen::VectorXd ef = e;
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (pinned[static_cast<std::size_t>(k)]) {
        ef -= J.col(k) * fixed[k];
        Jf.col(k).setZero();
      } else {
        bias[k] = rest[dofs[k]] - q[dofs[k]];
      }
    }
    delta = dls_step(Jf, ef, damping);
    if (gain > 0.0) delta += gain * (nullspace_projector(Jf) * bias);
    bool changed = false;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (pinned[static_cast<std::size_t>(k)]) {
        delta[k] = fixed[k];
        continue;
      }
      const Joint& j = model.dof_joint(dofs[k]);
      const double next = q[dofs[k]] + delta[k];
      if (next > j.upper || next < j.lower) {
        pinned[static_cast<std::size_t>(k)] = true;
        fixed[k] = (next > j.upper ? j.upper : j.lower) - q[dofs[k]];
        changed = true;
      }
    }
    if (!changed) break;
  }
  return delta;
}

struct Eval {
  KinematicState state;
  Vec3 ep = Vec3::Zero();
  Vec3 eo = Vec3::Zero();
  double pos = 0.0;
  double ori = 0.0;
  bool converged = false;
};

struct Candidate {
  JointConfig q;
  double pos = std::numeric_limits<double>::infinity();
  double ori = std::numeric_limits<double>::infinity();
  double cost = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

}  // namespace

void IkParams::validate() const {
  if (!(damping > 0.0)) throw ContractError("IK damping must be positive");
  if (max_iterations < 1) throw ContractError("IK needs at least one iteration");
  if (!(position_tolerance > 0.0) || !(orientation_tolerance > 0.0))
    throw ContractError("IK tolerances must be positive");
  if (!(nullspace_gain >= 0.0 && nullspace_gain < 1.0)) throw ContractError("null-space gain must lie in [0, 1)");
  if (!(orientation_weight >= 0.0)) throw ContractError("orientation weight must be non-negative");
}

KinematicState compute_kinematics(const RobotModel& model, const JointConfig& q) {
  require_dof(model, q);
  KinematicState s;
  s.links.assign(model.links.size(), Pose::identity());
  s.joint_frames.resize(model.joints.size());
  for (std::size_t i = 0; i < model.joints.size(); ++i) {
    const Joint& j = model.joints[i];
    const Pose frame = s.links[j.parent_link] * j.origin;
    s.joint_frames[i] = frame;
    const double v = joint_value(model, j, q);
    Pose motion;
    if (j.type == JointType::Revolute) {
      motion.orientation = Quat(Eigen::AngleAxisd(v, j.axis));
    } else {
      motion.position = j.axis * v;
    }
    s.links[j.child_link] = frame * motion;
  }
  return s;
}

Pose frame_pose(const RobotModel& model, const KinematicState& state, int frame) {
  const Frame& f = model.frames[frame];
  return state.links[f.link_index] * f.offset;
}

std::map<std::string, Pose> forward_kinematics(const RobotModel& model, const JointConfig& q) {
  const KinematicState s = compute_kinematics(model, q);
  std::map<std::string, Pose> out;
  for (std::size_t i = 0; i < model.frames.size(); ++i)
    out.emplace(model.frames[i].name, frame_pose(model, s, static_cast<int>(i)));
  return out;
}

Eigen::MatrixXd frame_jacobian(const RobotModel& model, const KinematicState& state, int frame,
                               const std::vector<int>& dofs) {
  const Vec3 p = frame_pose(model, state, frame).position;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, static_cast<Eigen::Index>(dofs.size()));
  int link = model.frames[frame].link_index;
  while (model.links[link].parent_joint >= 0) {
    const int ji = model.links[link].parent_joint;
    const Joint& j = model.joints[ji];
    const int source = j.mimic ? model.joints[j.mimic->source].dof : j.dof;
    const double scale = j.mimic ? j.mimic->multiplier : 1.0;
    auto col = std::find(dofs.begin(), dofs.end(), source);
    if (col != dofs.end()) {
      const Eigen::Index c = col - dofs.begin();
      const Pose& jf = state.joint_frames[ji];
      const Vec3 axis = jf.orientation * j.axis;
      if (j.type == JointType::Revolute) {
        J.block<3, 1>(0, c) += scale * axis.cross(p - jf.position);
        J.block<3, 1>(3, c) += scale * axis;
      } else {
        J.block<3, 1>(0, c) += scale * axis;
      }
    }
    link = j.parent_link;
  }
  return J;
}

namespace {

using EvalFn = std::function<Eval(const JointConfig&)>;
using JacobianFn = std::function<std::pair<Eigen::MatrixXd, Eigen::VectorXd>(const Eval&)>;

// Regulated DLS iterations from q_init. The task-only step comes first so that
// posture regulation never holds back an iterate that already meets the
// tolerances. The null-space pull is only neutral to first order, so it is
// halved while it costs the task more than an allowance that shrinks to zero
// over the iteration budget; the last iterations are pure task steps.
Candidate iterate(const RobotModel& model, const std::vector<int>& dofs, const JointConfig& q_init,
                  const IkParams& params, double gain, const JointConfig& rest, double w, const EvalFn& evaluate,
                  const JacobianFn& linearize) {
  Candidate best;
  auto track = [&](const JointConfig& q, const Eval& ev, int it) {
    const double cost = ev.pos * ev.pos + w * w * ev.ori * ev.ori;
    if ((ev.converged && !best.converged) || (!best.converged && cost < best.cost))
      best = Candidate{q, ev.pos, ev.ori, cost, ev.converged, it};
  };
  JointConfig q = q_init;
  Eval ev = evaluate(q);
  track(q, ev, 0);
  for (int it = 1; it <= params.max_iterations && !ev.converged && !dofs.empty(); ++it) {
    const auto [J, e] = linearize(ev);
    JointConfig next_q = q;
    apply_step(model, dofs, limited_step(model, dofs, q, J, e, params.damping, 0.0, rest), next_q);
    Eval next = evaluate(next_q);
    if (!next.converged) {
      const double allow = std::max(0.0, 1.0 - static_cast<double>(it) / (0.75 * params.max_iterations));
      for (double g = gain; g > gain / 16.0; g /= 2.0) {
        JointConfig cand = q;
        apply_step(model, dofs, limited_step(model, dofs, q, J, e, params.damping, g, rest), cand);
        Eval ce = evaluate(cand);
        if (ce.pos <= next.pos + allow * params.position_tolerance &&
            (w == 0.0 || ce.ori <= next.ori + allow * params.orientation_tolerance)) {
          next_q = std::move(cand);
          next = std::move(ce);
          break;
        }
      }
    }
    q = std::move(next_q);
    ev = std::move(next);
    track(q, ev, it);
  }
  return best;
}

// Posture regulation must never cost convergence: a regulated solve that
// misses the tolerances is retried without it and the better result is kept.
Candidate regulated_solve(const RobotModel& model, const std::vector<int>& dofs, const JointConfig& q_init,
                          const IkParams& params, const JointConfig& rest, double w, const EvalFn& evaluate,
                          const JacobianFn& linearize) {
  Candidate result = iterate(model, dofs, q_init, params, params.nullspace_gain, rest, w, evaluate, linearize);
  if (!result.converged && params.nullspace_gain > 0.0) {
    Candidate plain = iterate(model, dofs, q_init, params, 0.0, rest, w, evaluate, linearize);
    if (plain.converged || plain.cost < result.cost) result = std::move(plain);
  }
  return result;
}

}  // namespace

IkResult solve_frame_ik(const RobotModel& model, const std::string& frame, const Pose& target,
                        const JointConfig& q_init, const IkParams& params) {
  params.validate();
  require_dof(model, q_init);
  if (!model.within_limits(q_init)) throw ContractError("IK initial configuration violates joint limits");
  const int fi = model.frame_index(frame);
  const JointConfig& rest = params.rest.empty() ? model.rest : params.rest;
  require_dof(model, rest);
  const std::vector<int> dofs = model.chain_dofs(model.frames[fi].link_index);
  const double w = params.orientation_weight;

  auto evaluate = [&](const JointConfig& q) {
    Eval ev;
    ev.state = compute_kinematics(model, q);
    const Pose current = frame_pose(model, ev.state, fi);
    ev.ep = target.position - current.position;
    ev.eo = orientation_error(target.orientation, current.orientation);
    ev.pos = ev.ep.norm();
    ev.ori = ev.eo.norm();
    ev.converged = ev.pos < params.position_tolerance && (w == 0.0 || ev.ori < params.orientation_tolerance);
    return ev;
  };
  auto linearize = [&](const Eval& ev) {
    Eigen::MatrixXd J = frame_jacobian(model, ev.state, fi, dofs);
    J.bottomRows<3>() *= w;
    Eigen::VectorXd e(6);
    e << clamp_norm(ev.ep, kMaxPositionStep), w * clamp_norm(ev.eo, kMaxOrientationStep);
    return std::make_pair(std::move(J), std::move(e));
  };
  const Candidate r = regulated_solve(model, dofs, q_init, params, rest, w, evaluate, linearize);
  return IkResult{r.q, r.pos, r.ori, r.converged, r.iterations};
}

FingertipIkResult solve_fingertip_ik(const RobotModel& model, const std::map<std::string, Vec3>& targets,
                                     const JointConfig& q_init, const IkParams& params) {
  params.validate();
  require_dof(model, q_init);
  if (model.embodiment != Embodiment::DexHand) throw ContractError("fingertip IK requires a dex_hand model");
  if (!model.within_limits(q_init)) throw ContractError("IK initial configuration violates joint limits");
  const JointConfig& rest = params.rest.empty() ? model.rest : params.rest;
  require_dof(model, rest);

  const std::vector<int> shared = model.chain_dofs(model.frames[model.frame_index(model.tracking_frame)].link_index);
  FingertipIkResult result;
  result.q = q_init;
  result.converged = true;
  for (const auto& [tip, goal] : targets) {
    if (std::find(model.fingertip_frames.begin(), model.fingertip_frames.end(), tip) == model.fingertip_frames.end())
      throw ContractError("'" + tip + "' is not a fingertip frame");
    const int fi = model.frame_index(tip);
    std::vector<int> dofs;
    for (int d : model.chain_dofs(model.frames[fi].link_index))
      if (std::find(shared.begin(), shared.end(), d) == shared.end()) dofs.push_back(d);

    auto evaluate = [&](const JointConfig& q) {
      Eval ev;
      ev.state = compute_kinematics(model, q);
      ev.ep = goal - frame_pose(model, ev.state, fi).position;
      ev.pos = ev.ep.norm();
      ev.converged = ev.pos < params.position_tolerance;
      return ev;
    };
    auto linearize = [&](const Eval& ev) {
      Eigen::MatrixXd J = frame_jacobian(model, ev.state, fi, dofs).topRows<3>();
      Eigen::VectorXd e = clamp_norm(ev.ep, kMaxPositionStep);
      return std::make_pair(std::move(J), std::move(e));
    };
    const Candidate best = regulated_solve(model, dofs, result.q, params, rest, 0.0, evaluate, linearize);
    for (int d : dofs) result.q[d] = best.q[d];
    result.residuals[tip] = best.pos;
    result.converged = result.converged && best.converged;
  }
  return result;
}

JointStep clamp_joint_step(const JointConfig& q_prev, const JointConfig& q_target, double dt,
                           const RobotModel& model) {
  require_dof(model, q_prev);
  require_dof(model, q_target);
  if (!(dt > 0.0)) throw ContractError("clamp_joint_step needs dt > 0");
  JointStep out;
  out.q.resize(q_prev.size());
  for (std::size_t i = 0; i < q_prev.size(); ++i) {
    const Joint& j = model.dof_joint(i);
    const double max_step = j.velocity * dt;
    const double delta = q_target[i] - q_prev[i];
    const double applied = std::clamp(delta, -max_step, max_step);
    if (applied != delta) out.lagging = true;
    out.q[i] = std::clamp(q_prev[i] + applied, j.lower, j.upper);
  }
  return out;
}

JointConfig clamp_to_limits(const RobotModel& model, JointConfig q) {
  require_dof(model, q);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::clamp(q[i], model.dof_joint(i).lower, model.dof_joint(i).upper);
  return q;
}

}  // namespace arcap
