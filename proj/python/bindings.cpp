#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "arcap/analysis.hpp"
#include "arcap/replay.hpp"
#include "arcap/simulate.hpp"

namespace py = pybind11;
using namespace arcap;

namespace {

std::array<double, 4> quat_wxyz(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }
Quat quat_from(const std::array<double, 4>& wxyz) { return Quat(wxyz[0], wxyz[1], wxyz[2], wxyz[3]); }

std::optional<std::string> gripper_name(const std::optional<GripperCommand>& g) {
  if (!g) return std::nullopt;
  return *g == GripperCommand::Open ? "open" : "closed";
}

// Scene clouds cross the boundary as (N, 6) arrays of x, y, z, r, g, b.
ColoredPointCloud cloud_from_array(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>>& a) {
  ColoredPointCloud c;
  c.points.reserve(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    c.points.push_back({Vec3(a(i, 0), a(i, 1), a(i, 2)),
                        Rgb{static_cast<std::uint8_t>(a(i, 3)), static_cast<std::uint8_t>(a(i, 4)),
                            static_cast<std::uint8_t>(a(i, 5))}});
  return c;
}

Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> cloud_to_array(const ColoredPointCloud& c) {
  Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> a(static_cast<Eigen::Index>(c.size()), 6);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    a.row(static_cast<Eigen::Index>(i)) << p.position.x(), p.position.y(), p.position.z(), p.rgb[0], p.rgb[1], p.rgb[2];
  }
  return a;
}

std::vector<std::string> event_kinds(const std::vector<FeedbackEvent>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) out.push_back(to_string(e.kind()));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Retargeting, feedback checks, recording and analysis for AR demonstration capture";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<OrderingError>(m, "OrderingError", PyExc_RuntimeError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const Vec3& p, const std::array<double, 4>& wxyz) { return Pose(p, quat_from(wxyz)); }),
           py::arg("position"), py::arg("orientation") = std::array<double, 4>{1, 0, 0, 0})
      .def_readwrite("position", &Pose::position)
      .def_property(
          "orientation", [](const Pose& p) { return quat_wxyz(p.orientation); },
          [](Pose& p, const std::array<double, 4>& wxyz) { p.orientation = quat_from(wxyz).normalized(); })
      .def("inverse", &Pose::inverse)
      .def("transform", &Pose::transform)
      .def("rotation", &Pose::rotation)
      .def(py::self * py::self)
      .def(py::self == py::self)
      .def("__repr__", [](const Pose& p) {
        const auto q = quat_wxyz(p.orientation);
        return py::str("Pose(position=[{}, {}, {}], orientation=[{}, {}, {}, {}])")
            .format(p.position.x(), p.position.y(), p.position.z(), q[0], q[1], q[2], q[3]);
      });
  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"));

  py::class_<RobotModel, std::shared_ptr<RobotModel>>(m, "RobotModel")
      .def_readonly("name", &RobotModel::name)
      .def_property_readonly("embodiment", [](const RobotModel& r) { return to_string(r.embodiment); })
      .def_readonly("tracking_frame", &RobotModel::tracking_frame)
      .def_readonly("fingertip_frames", &RobotModel::fingertip_frames)
      .def_readonly("rest", &RobotModel::rest)
      .def_property_readonly("dof", &RobotModel::dof)
      .def("lower_limits", &RobotModel::lower_limits)
      .def("upper_limits", &RobotModel::upper_limits)
      .def("velocity_limits", &RobotModel::velocity_limits)
      .def("to_json", [](const RobotModel& r) { return robot_model_to_json(r); });
  m.def("load_robot_model", [](const std::string& ref) { return load_robot_model(resolve_model_path(ref)); },
        py::arg("ref"), "Load a model by file path or built-in name.");
  m.def("parse_robot_model", [](const std::string& text) { return parse_robot_model(text); });

  m.def("forward_kinematics", &forward_kinematics, py::arg("model"), py::arg("q"));

  py::class_<IkParams>(m, "IkParams")
      .def(py::init<>())
      .def_readwrite("damping", &IkParams::damping)
      .def_readwrite("max_iterations", &IkParams::max_iterations)
      .def_readwrite("position_tolerance", &IkParams::position_tolerance)
      .def_readwrite("orientation_tolerance", &IkParams::orientation_tolerance)
      .def_readwrite("nullspace_gain", &IkParams::nullspace_gain)
      .def_readwrite("orientation_weight", &IkParams::orientation_weight)
      .def_readwrite("rest", &IkParams::rest);

  py::class_<IkResult>(m, "IkResult")
      .def_readonly("q", &IkResult::q)
      .def_readonly("position_residual", &IkResult::position_residual)
      .def_readonly("orientation_residual", &IkResult::orientation_residual)
      .def_readonly("converged", &IkResult::converged)
      .def_readonly("iterations", &IkResult::iterations);
  m.def("solve_frame_ik", &solve_frame_ik, py::arg("model"), py::arg("frame"), py::arg("target"), py::arg("q_init"),
        py::arg("params") = IkParams{});

  py::class_<EngineConfig>(m, "EngineConfig")
      .def(py::init<>())
      .def_static("from_json", [](const std::string& text) { return parse_engine_config(text); })
      .def_static("load", [](const std::filesystem::path& p) { return load_engine_config(p); })
      .def("to_json", [](const EngineConfig& c) { return engine_config_to_json(c); })
      .def_readwrite("model", &EngineConfig::model)
      .def_property(
          "embodiment", [](const EngineConfig& c) { return to_string(c.embodiment); },
          [](EngineConfig& c, const std::string& e) { c.embodiment = embodiment_from_string(e); })
      .def_readwrite("robot_base", &EngineConfig::robot_base)
      .def_readwrite("voxel_resolution", &EngineConfig::voxel_resolution)
      .def_readwrite("collision_margin", &EngineConfig::collision_margin)
      .def_readwrite("visibility_threshold", &EngineConfig::visibility_threshold)
      .def_readwrite("tick_rate", &EngineConfig::tick_rate)
      .def_readwrite("watch_points", &EngineConfig::watch_points);
  m.def("calibrate_extrinsics", &calibrate_extrinsics, py::arg("world_base"), py::arg("world_camera"));

  py::class_<HandFrame>(m, "HandFrame")
      .def(py::init<>())
      .def_readwrite("timestamp", &HandFrame::timestamp)
      .def_readwrite("wrist", &HandFrame::wrist)
      .def_readwrite("headset", &HandFrame::headset)
      .def_readwrite("fingertips", &HandFrame::fingertips)
      .def("to_json", [](const HandFrame& f) { return hand_frame_to_json(f); })
      .def_static("from_json", [](const std::string& s) { return hand_frame_from_json(s); });

  py::class_<EngineOutput>(m, "EngineOutput")
      .def_readonly("timestamp", &EngineOutput::timestamp)
      .def_readonly("q", &EngineOutput::q)
      .def_property_readonly("gripper", [](const EngineOutput& o) { return gripper_name(o.gripper); })
      .def_readonly("ee_pose", &EngineOutput::ee_pose)
      .def_property_readonly("events", [](const EngineOutput& o) { return event_kinds(o.events); })
      .def_property_readonly("color", [](const EngineOutput& o) { return to_string(o.display.color); })
      .def_readonly("lagging", &EngineOutput::lagging)
      .def_readonly("ik_converged", &EngineOutput::ik_converged);

  py::class_<Engine>(m, "Engine")
      .def(py::init([](const EngineConfig& c) {
             return Engine(c, std::make_shared<const RobotModel>(load_config_model(c)));
           }),
           py::arg("config") = EngineConfig{})
      .def("tick", &Engine::tick, py::arg("frame"))
      .def("reset", &Engine::reset)
      .def("place_robot", &Engine::place_robot, py::arg("base"))
      .def(
          "set_scene",
          [](Engine& e, const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>>& cloud) {
            e.set_scene(std::make_shared<VoxelGrid>(build_scene_grid(cloud_from_array(cloud), e.config())));
          },
          py::arg("cloud"), "Scene cloud as an (N, 6) array of x, y, z, r, g, b in the world frame.");

  m.def("scenarios", [] {
    std::vector<std::string> out;
    for (Scenario s : all_scenarios()) out.push_back(to_string(s));
    return out;
  });
  m.def(
      "simulate",
      [](const std::string& scenario, std::uint64_t seed, const EngineConfig& config, bool with_cloud) {
        const Simulation sim = simulate(scenario_from_string(scenario), seed, config, load_config_model(config),
                                        with_cloud);
        std::vector<HandFrame> frames;
        for (const auto& f : sim.frames) frames.push_back(f.frame);
        return py::make_tuple(frames, cloud_to_array(sim.scene), sim.reference);
      },
      py::arg("scenario"), py::arg("seed") = 0, py::arg("config") = EngineConfig{}, py::arg("with_cloud") = false,
      "Returns (hand frames, world-frame scene as an (N, 6) array, reference joint path).");

  m.def(
      "record_session",
      [](const std::filesystem::path& root, const std::string& id, const EngineConfig& config,
         const std::vector<HandFrame>& frames) {
        const auto model = std::make_shared<const RobotModel>(load_config_model(config));
        Engine engine(config, model);
        SessionRecorder rec(root, id, config, *model);
        for (const auto& f : frames) {
          const EngineOutput o = engine.tick(f);
          DemoFrame d;
          d.timestamp = o.timestamp;
          d.q = o.q;
          d.headset = f.headset;
          d.robot_base = engine.config().robot_base;
          d.gripper = o.gripper;
          d.events = event_mask(o.events);
          rec.append(d);
        }
        rec.finalize();
        return rec.dir();
      },
      py::arg("root"), py::arg("id"), py::arg("config"), py::arg("frames"),
      "Runs the engine over the frames and records a finalized session. Returns its directory.");

  py::class_<QualityReport>(m, "QualityReport")
      .def_readonly("session", &QualityReport::session)
      .def_readonly("frames", &QualityReport::frames)
      .def_readonly("collision_ticks", &QualityReport::collision_ticks)
      .def_readonly("speed_mismatch_ticks", &QualityReport::speed_mismatch_ticks)
      .def_readonly("min_visible_fraction", &QualityReport::min_visible_fraction)
      .def_readonly("mean_visible_fraction", &QualityReport::mean_visible_fraction)
      .def_readonly("replayable", &QualityReport::replayable)
      .def("to_json", [](const QualityReport& r) { return report_to_json(r); })
      .def("__str__", [](const QualityReport& r) { return report_summary(r); });
  m.def(
      "analyze_session",
      [](const std::filesystem::path& dir, std::optional<double> visibility_threshold, std::uint64_t speed_tolerance) {
        AnalysisThresholds th;
        th.visibility_threshold = visibility_threshold;
        th.speed_tolerance = speed_tolerance;
        return analyze_session(load_session(dir), th);
      },
      py::arg("session_dir"), py::arg("visibility_threshold") = std::nullopt, py::arg("speed_tolerance") = 0);

  m.def(
      "export_session",
      [](const std::filesystem::path& dir, const std::filesystem::path& out, int samples) {
        const auto frames = postprocess_session(load_session(dir), std::nullopt, samples);
        export_hdf5(out, frames);
        return frames.size();
      },
      py::arg("session_dir"), py::arg("path"), py::arg("samples_per_sphere") = kDefaultSphereSamples,
      "Post-processes a finalized session and writes it to an HDF5 file. Returns the frame count.");
}
