#include "arcap/robot_model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "arcap/errors.hpp"

namespace arcap {

using nlohmann::json;

namespace {

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ContractError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Pose pose_from(const json& j) {
  if (j.is_null()) return Pose::identity();
  const Vec3 xyz = j.contains("xyz") ? vec3_from(j.at("xyz")) : Vec3::Zero();
  if (j.contains("quat")) {
    const auto& q = j.at("quat");
    if (!q.is_array() || q.size() != 4) throw ContractError("quat must be [w, x, y, z]");
    return {xyz, Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>())};
  }
  const Vec3 rpy = j.contains("rpy") ? vec3_from(j.at("rpy")) : Vec3::Zero();
  return Pose::from_xyz_rpy(xyz, rpy);
}

json pose_to(const Pose& p) {
  const auto& q = p.orientation;
  return {{"xyz", {p.position.x(), p.position.y(), p.position.z()}}, {"quat", {q.w(), q.x(), q.y(), q.z()}}};
}

}  // namespace

std::string to_string(Embodiment e) {
  switch (e) {
    case Embodiment::DexHand:
      return "dex_hand";
    case Embodiment::ParallelGripper:
      return "parallel_gripper";
    case Embodiment::Bare:
      return "bare";
  }
  return "bare";
}

Embodiment embodiment_from_string(std::string_view s) {
  if (s == "dex_hand") return Embodiment::DexHand;
  if (s == "parallel_gripper") return Embodiment::ParallelGripper;
  if (s == "bare") return Embodiment::Bare;
  throw ContractError("unknown embodiment '" + std::string(s) + "'");
}

void RobotModel::finalize() {
  std::map<std::string, int> link_index;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (!link_index.emplace(links[i].name, static_cast<int>(i)).second)
      throw ContractError("duplicate link '" + links[i].name + "'");
    links[i].parent_joint = -1;
    for (const auto& s : links[i].spheres)
      if (!(s.radius > 0.0)) throw ContractError("sphere radius must be positive on link '" + links[i].name + "'");
  }
  std::map<std::string, int> joint_names;
  for (auto& j : joints) {
    if (!joint_names.emplace(j.name, 0).second) throw ContractError("duplicate joint '" + j.name + "'");
    auto p = link_index.find(j.parent);
    auto c = link_index.find(j.child);
    if (p == link_index.end() || c == link_index.end())
      throw ContractError("joint '" + j.name + "' references an unknown link");
    j.parent_link = p->second;
    j.child_link = c->second;
    if (!(j.lower < j.upper)) throw ContractError("joint '" + j.name + "' needs lower < upper");
    if (!j.mimic && !(j.velocity > 0.0)) throw ContractError("joint '" + j.name + "' needs a positive velocity limit");
    if (j.axis.norm() < 1e-12) throw ContractError("joint '" + j.name + "' has a zero axis");
    j.axis.normalize();
  }

  // Parent-first ordering; also proves the joint graph is a tree with one root.
  for (const auto& j : joints) {
    if (links[j.child_link].parent_joint != -1) throw ContractError("link '" + j.child + "' has two parent joints");
    links[j.child_link].parent_joint = 0;  // marker, fixed below
  }
  int roots = 0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].parent_joint == -1) {
      base_link_ = static_cast<int>(i);
      ++roots;
    }
  }
  if (roots != 1) throw ContractError("joint graph must have exactly one root link");

  std::vector<Joint> ordered;
  std::vector<bool> placed(joints.size(), false);
  std::set<int> reached{base_link_};
  while (ordered.size() < joints.size()) {
    bool progress = false;
    for (std::size_t i = 0; i < joints.size(); ++i) {
      if (placed[i] || !reached.count(joints[i].parent_link)) continue;
      placed[i] = true;
      reached.insert(joints[i].child_link);
      ordered.push_back(joints[i]);
      progress = true;
    }
    if (!progress) throw ContractError("joint graph contains a cycle or disconnected link");
  }
  joints = std::move(ordered);

  std::map<std::string, int> jidx;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    jidx[joints[i].name] = static_cast<int>(i);
    links[joints[i].child_link].parent_joint = static_cast<int>(i);
  }
  dof_joint_.clear();
  for (std::size_t i = 0; i < joints.size(); ++i) {
    auto& j = joints[i];
    if (j.mimic) {
      auto it = jidx.find(j.mimic->joint);
      if (it == jidx.end() || joints[it->second].mimic)
        throw ContractError("mimic joint '" + j.name + "' must follow an actuated joint");
      j.mimic->source = it->second;
      j.dof = -1;
    } else {
      j.dof = static_cast<int>(dof_joint_.size());
      dof_joint_.push_back(static_cast<int>(i));
    }
  }

  for (auto& f : frames) {
    auto it = link_index.find(f.link);
    if (it == link_index.end()) throw ContractError("frame '" + f.name + "' references unknown link '" + f.link + "'");
    f.link_index = it->second;
  }
  if (!find_frame(tracking_frame)) throw ContractError("tracking frame '" + tracking_frame + "' is not defined");
  for (const auto& t : fingertip_frames)
    if (!find_frame(t)) throw ContractError("fingertip frame '" + t + "' is not defined");
  if (embodiment == Embodiment::DexHand && fingertip_frames.empty())
    throw ContractError("dex_hand model needs fingertip frames");
  if (gripper) {
    auto it = jidx.find(gripper->joint);
    if (it == jidx.end() || joints[it->second].mimic) throw ContractError("gripper joint must be an actuated joint");
    gripper->dof = joints[it->second].dof;
  }
  if (embodiment == Embodiment::ParallelGripper && !gripper) throw ContractError("parallel_gripper model needs a gripper");

  if (rest.empty()) {
    rest.resize(dof());
    for (std::size_t i = 0; i < dof(); ++i) rest[i] = std::clamp(0.0, dof_joint(i).lower, dof_joint(i).upper);
  }
  if (rest.size() != dof()) throw ContractError("rest posture length does not match DOF count");
  if (!within_limits(rest)) throw ContractError("rest posture violates joint limits");
}

std::optional<int> RobotModel::find_frame(std::string_view frame) const {
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].name == frame) return static_cast<int>(i);
  return std::nullopt;
}

std::optional<int> RobotModel::find_link(std::string_view link) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].name == link) return static_cast<int>(i);
  return std::nullopt;
}

int RobotModel::frame_index(std::string_view frame) const {
  auto f = find_frame(frame);
  if (!f) throw ContractError("unknown frame '" + std::string(frame) + "'");
  return *f;
}

std::vector<int> RobotModel::chain_dofs(int link) const {
  std::vector<int> out;
  int l = link;
  while (links[l].parent_joint >= 0) {
    const Joint& j = joints[links[l].parent_joint];
    const int d = j.mimic ? joints[j.mimic->source].dof : j.dof;
    if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    l = j.parent_link;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<double> RobotModel::lower_limits() const {
  std::vector<double> v(dof());
  for (std::size_t i = 0; i < dof(); ++i) v[i] = dof_joint(i).lower;
  return v;
}

std::vector<double> RobotModel::upper_limits() const {
  std::vector<double> v(dof());
  for (std::size_t i = 0; i < dof(); ++i) v[i] = dof_joint(i).upper;
  return v;
}

std::vector<double> RobotModel::velocity_limits() const {
  std::vector<double> v(dof());
  for (std::size_t i = 0; i < dof(); ++i) v[i] = dof_joint(i).velocity;
  return v;
}

bool RobotModel::within_limits(const std::vector<double>& q) const {
  if (q.size() != dof()) return false;
  for (std::size_t i = 0; i < dof(); ++i)
    if (q[i] < dof_joint(i).lower || q[i] > dof_joint(i).upper) return false;
  return true;
}

RobotModel parse_robot_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("robot model is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("schema", 0) != 1) throw ContractError("robot model must declare schema: 1");
    RobotModel m;
    m.name = doc.value("name", "robot");
    m.embodiment = embodiment_from_string(doc.value("embodiment", "bare"));
    m.tracking_frame = doc.value("tracking_frame", "ee");
    if (doc.contains("fingertips")) m.fingertip_frames = doc.at("fingertips").get<std::vector<std::string>>();
    if (doc.contains("gripper")) {
      const auto& g = doc.at("gripper");
      m.gripper = GripperSpec{g.at("joint").get<std::string>(), g.at("open").get<double>(),
                              g.at("closed").get<double>()};
    }
    for (const auto& jl : doc.at("links")) {
      Link l;
      l.name = jl.at("name").get<std::string>();
      for (const auto& s : jl.value("spheres", json::array()))
        l.spheres.push_back({vec3_from(s.at("center")), s.at("radius").get<double>()});
      m.links.push_back(std::move(l));
    }
    bool any_rest = false;
    std::vector<std::pair<std::string, double>> rest_by_joint;
    for (const auto& jj : doc.at("joints")) {
      Joint j;
      j.name = jj.at("name").get<std::string>();
      j.parent = jj.at("parent").get<std::string>();
      j.child = jj.at("child").get<std::string>();
      j.origin = pose_from(jj.value("origin", json()));
      j.axis = jj.contains("axis") ? vec3_from(jj.at("axis")) : Vec3::UnitZ();
      const std::string type = jj.value("type", "revolute");
      if (type == "revolute") {
        j.type = JointType::Revolute;
      } else if (type == "prismatic") {
        j.type = JointType::Prismatic;
      } else {
        throw ContractError("joint '" + j.name + "' has unknown type '" + type + "'");
      }
      const auto& lim = jj.at("limits");
      j.lower = lim.at("lower").get<double>();
      j.upper = lim.at("upper").get<double>();
      j.velocity = lim.value("velocity", 0.0);
      if (jj.contains("mimic")) {
        const auto& mm = jj.at("mimic");
        j.mimic = Mimic{mm.at("joint").get<std::string>(), mm.value("multiplier", 1.0)};
      }
      if (jj.contains("rest")) any_rest = true;
      rest_by_joint.emplace_back(j.name, jj.value("rest", 0.0));
      m.joints.push_back(std::move(j));
    }
    for (const auto& fj : doc.value("frames", json::array())) {
      Frame f;
      f.name = fj.at("name").get<std::string>();
      f.link = fj.at("link").get<std::string>();
      f.offset = pose_from(fj.value("origin", json()));
      m.frames.push_back(std::move(f));
    }
    m.finalize();
    if (any_rest) {
      std::map<std::string, double> rest(rest_by_joint.begin(), rest_by_joint.end());
      m.rest.assign(m.dof(), 0.0);
      for (std::size_t i = 0; i < m.dof(); ++i) m.rest[i] = rest[m.dof_joint(i).name];
      if (!m.within_limits(m.rest)) throw ContractError("rest posture violates joint limits");
    }
    return m;
  } catch (const json::exception& e) {
    throw ContractError(std::string("robot model: ") + e.what());
  }
}

RobotModel load_robot_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open robot model '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_robot_model(ss.str());
}

std::string robot_model_to_json(const RobotModel& m) {
  json doc;
  doc["schema"] = 1;
  doc["name"] = m.name;
  doc["embodiment"] = to_string(m.embodiment);
  doc["tracking_frame"] = m.tracking_frame;
  if (!m.fingertip_frames.empty()) doc["fingertips"] = m.fingertip_frames;
  if (m.gripper) doc["gripper"] = {{"joint", m.gripper->joint}, {"open", m.gripper->open}, {"closed", m.gripper->closed}};
  doc["links"] = json::array();
  for (const auto& l : m.links) {
    json jl{{"name", l.name}, {"spheres", json::array()}};
    for (const auto& s : l.spheres)
      jl["spheres"].push_back({{"center", {s.center.x(), s.center.y(), s.center.z()}}, {"radius", s.radius}});
    doc["links"].push_back(jl);
  }
  doc["joints"] = json::array();
  for (const auto& j : m.joints) {
    json jj{{"name", j.name},
            {"type", j.type == JointType::Revolute ? "revolute" : "prismatic"},
            {"parent", j.parent},
            {"child", j.child},
            {"origin", pose_to(j.origin)},
            {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
            {"limits", {{"lower", j.lower}, {"upper", j.upper}, {"velocity", j.velocity}}}};
    if (j.mimic) jj["mimic"] = {{"joint", j.mimic->joint}, {"multiplier", j.mimic->multiplier}};
    if (j.dof >= 0) jj["rest"] = m.rest[j.dof];
    doc["joints"].push_back(jj);
  }
  doc["frames"] = json::array();
  for (const auto& f : m.frames) doc["frames"].push_back({{"name", f.name}, {"link", f.link}, {"origin", pose_to(f.offset)}});
  return doc.dump(2);
}

}  // namespace arcap
