#pragma once

// JSON helpers shared by the config, protocol and session code.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arcap/errors.hpp"
#include "arcap/pose.hpp"

namespace arcap::jsonio {

using json = nlohmann::json;

inline json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ContractError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json quat(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

inline Quat quat(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ContractError("expected a quaternion [w, x, y, z]");
  return Quat(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

// {"position": [x, y, z], "orientation": [w, x, y, z]}; "rpy" is accepted in
// place of "orientation" on input.
inline json pose(const Pose& p) { return {{"position", vec3(p.position)}, {"orientation", quat(p.orientation)}}; }

inline Pose pose(const json& j) {
  if (!j.is_object()) throw ContractError("expected a pose object");
  const Vec3 position = j.contains("position") ? vec3(j.at("position")) : Vec3::Zero();
  if (j.contains("rpy")) return Pose::from_xyz_rpy(position, vec3(j.at("rpy")));
  Pose out;
  out.position = position;
  if (j.contains("orientation")) {
    const Quat q = quat(j.at("orientation"));
    if (!(std::abs(q.norm() - 1.0) <= 1e-6)) throw ContractError("pose orientation is not a unit quaternion");
    out.orientation = q;
  }
  return out;
}

inline json doubles(const std::vector<double>& v) { return json(v); }

}  // namespace arcap::jsonio
