#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arcap/protocol.hpp"

namespace arcap {

enum class Scenario { Reach, PickPlace, SweepThroughObstacle, FastJerk, OutOfView };

std::string to_string(Scenario s);
// Unknown names raise ContractError.
Scenario scenario_from_string(const std::string& name);
const std::vector<Scenario>& all_scenarios();

struct Simulation {
  std::vector<HandFrameMsg> frames;
  ColoredPointCloud scene;             // world frame; the obstacle for sweep_through_obstacle
  std::vector<JointConfig> reference;  // joint path the stream was generated from
};

inline constexpr double kJerkStep = 0.5;  // m

// Synthetic operator stream at the config's tick rate. Joint-space quintic
// segments are mapped through forward kinematics into hand frames; each
// scenario then injects its violation. Deterministic per (scenario, seed).
// With `with_cloud`, each frame carries the scene as seen by the camera.
Simulation simulate(Scenario scenario, std::uint64_t seed, const EngineConfig& config, const RobotModel& model,
                    bool with_cloud = false);

}  // namespace arcap
