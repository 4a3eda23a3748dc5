// arcap: serve the engine, stream and synthesize hand data, process sessions.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "arcap/analysis.hpp"
#include "arcap/replay.hpp"
#include "arcap/server.hpp"
#include "arcap/simulate.hpp"

using namespace arcap;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kIntegrity = 3, kProtocol = 4 };

std::atomic<bool> g_stop{false};

struct Globals {
  std::string config;
  std::string model;
  std::string scene;
  std::uint16_t port = port_from_env();
};

EngineConfig load_config(const Globals& g) {
  EngineConfig cfg = g.config.empty() ? EngineConfig{} : load_engine_config(g.config);
  if (!g.model.empty()) {
    cfg.model = g.model;
    cfg.embodiment = load_robot_model(resolve_model_path(g.model)).embodiment;
  }
  cfg.validate();
  return cfg;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ContractError(what + ": '" + item + "' is not a number");
    }
  }
  if (v.size() != count) throw ContractError(what + " needs " + std::to_string(count) + " comma-separated numbers");
  return v;
}

// x,y,z,qw,qx,qy,qz
Pose parse_pose(const std::string& text, const std::string& what) {
  const auto v = parse_numbers(text, 7, what);
  const Quat q(v[3], v[4], v[5], v[6]);
  if (std::abs(q.norm() - 1.0) > 1e-6) throw ContractError(what + ": quaternion must have unit norm");
  return Pose(Vec3(v[0], v[1], v[2]), q);
}

json pose_json(const Pose& p) {
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()}}};
}

int cmd_serve(const Globals& g, const std::string& bind, const std::string& console, const std::string& sessions) {
  ServerOptions opts;
  opts.config = load_config(g);
  opts.model = std::make_shared<const RobotModel>(load_config_model(opts.config));
  if (!g.scene.empty())
    opts.scene = std::make_shared<const VoxelGrid>(build_scene_grid(read_point_cloud(g.scene), opts.config));
  opts.session_root = sessions;
  if (!console.empty()) opts.console_dir = console;

  Server server(opts, bind, g.port);
  server.start();
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::cerr << "arcap: serving " << opts.model->name << " on " << bind << ":" << server.port() << "\n";
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  const ServerStats st = server.stats();
  std::cerr << "arcap: " << st.connections << " connections, " << st.processed_frames << " frames processed, "
            << st.dropped_frames << " coalesced\n";
  return kOk;
}

int cmd_replay(const Globals& g, const std::string& source, const std::string& host, double speed, bool realtime,
               const std::string& record, bool discard, const std::string& outputs) {
  const auto frames = replay_source(source, speed);
  Client client(host, g.port, "replay");
  StreamOptions opts;
  opts.realtime = realtime;
  if (!g.scene.empty()) opts.scene = read_point_cloud(g.scene);
  if (!record.empty()) opts.record = record;
  opts.finalize = !discard;
  const StreamResult r = stream_frames(client, frames, opts);

  std::uint64_t collision = 0, speed_limit = 0, visibility = 0;
  std::ofstream out;
  if (!outputs.empty()) {
    out.open(outputs, std::ios::trunc);
    if (!out) throw IntegrityError("cannot write " + outputs);
  }
  for (const auto& o : r.outputs) {
    const std::uint8_t mask = event_mask(o.output.events);
    collision += (mask >> 0) & 1u;
    speed_limit += (mask >> 1) & 1u;
    visibility += (mask >> 2) & 1u;
    if (out) out << encode_payload(Message{o.ack, o}) << "\n";
  }
  std::cout << "sent " << frames.size() << " frames, " << r.outputs.size() << " outputs, " << r.dropped
            << " coalesced, events: " << collision << " collision, " << speed_limit << " speed_limit, " << visibility
            << " visibility_loss\n";
  for (const auto& e : r.errors) std::cerr << "server error " << e.code << ": " << e.text << "\n";
  if (r.record)
    std::cout << "session " << r.record->session << " " << to_string(r.record->status) << " (" << r.record->frames
              << " frames) at " << r.record->path << "\n";
  return r.errors.empty() ? kOk : kProtocol;
}

int cmd_simulate(const Globals& g, const std::string& scenario, std::uint64_t seed, const std::string& output,
                 const std::string& scene_out, bool cloud) {
  const Scenario sc = scenario_from_string(scenario);
  const EngineConfig cfg = load_config(g);
  const RobotModel model = load_config_model(cfg);
  const Simulation sim = simulate(sc, seed, cfg, model, cloud);
  write_hand_stream(output, sim.frames);
  if (!scene_out.empty()) write_point_cloud(scene_out, sim.scene);
  std::cout << "wrote " << sim.frames.size() << " frames of " << scenario << " (seed " << seed << ") to " << output
            << "\n";
  return kOk;
}

std::optional<Box> parse_crop(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto v = parse_numbers(text, 6, "--crop");
  Box b;
  b.min = Vec3(v[0], v[1], v[2]);
  b.max = Vec3(v[3], v[4], v[5]);
  if ((b.min.array() > b.max.array()).any()) throw ContractError("--crop minimum exceeds maximum");
  return b;
}

int cmd_postprocess(const std::string& session, const std::string& output, const std::string& crop, int samples) {
  const DemoSession s = load_session(session);
  const auto frames = postprocess_session(s, parse_crop(crop), samples);
  write_processed(output, frames);
  std::size_t points = 0;
  for (const auto& f : frames) points += f.cloud.size();
  std::cout << "processed " << frames.size() << " frames (" << points << " points) to " << output << "\n";
  return kOk;
}

int cmd_export(const std::string& input, const std::string& output, const std::string& crop, int samples) {
  std::vector<ProcessedFrame> frames;
  if (std::filesystem::is_directory(input)) {
    frames = postprocess_session(load_session(input), parse_crop(crop), samples);
  } else {
    frames = read_processed(input);
  }
  export_hdf5(output, frames);
  std::cout << "exported " << frames.size() << " frames to " << output << "\n";
  return kOk;
}

int cmd_analyze(const std::string& session, std::optional<double> visibility, std::uint64_t tolerance,
                const std::string& json_out) {
  AnalysisThresholds th;
  th.visibility_threshold = visibility;
  th.speed_tolerance = tolerance;
  const QualityReport r = analyze_session(load_session(session), th);
  const std::string doc = report_to_json(r);
  if (!json_out.empty()) {
    std::ofstream out(json_out, std::ios::trunc);
    out << doc << "\n";
    if (!out) throw IntegrityError("cannot write " + json_out);
  } else {
    std::cout << doc << "\n";
  }
  std::cout << report_summary(r) << "\n";
  return kOk;
}

int cmd_calibrate(const std::string& world_base, const std::string& world_camera) {
  const Pose t = calibrate_extrinsics(parse_pose(world_base, "--world-base"), parse_pose(world_camera, "--world-camera"));
  std::cout << pose_json(t).dump() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ARCap engine, data collection and session tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "engine config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--model", g.model, "robot model name or file");
  app.add_option("--scene", g.scene, "scene point cloud file");
  app.add_option("--port", g.port, "TCP port (default: $ARCAP_PORT or 8765)");

  auto* serve = app.add_subcommand("serve", "run the engine service");
  std::string bind = "127.0.0.1", console, sessions = "sessions";
  serve->add_option("--bind", bind, "address to listen on");
  serve->add_option("--console", console, "directory of console assets to serve over HTTP")->check(CLI::ExistingDirectory);
  serve->add_option("--sessions", sessions, "directory for recorded sessions");

  auto* replay = app.add_subcommand("replay", "stream a hand-stream file or session to a server");
  std::string source, host = "127.0.0.1", record, outputs;
  double speed = 1.0;
  bool realtime = false, discard = false;
  replay->add_option("source", source, "raw hand-stream file or session directory")->required()->check(CLI::ExistingPath);
  replay->add_option("--host", host, "server host");
  replay->add_option("--speed", speed, "playback speed multiplier")->check(CLI::PositiveNumber);
  replay->add_flag("--realtime", realtime, "pace frames by timestamp instead of waiting for each output");
  replay->add_option("--record", record, "record the stream as this session id");
  replay->add_flag("--discard", discard, "discard the recording instead of finalizing it");
  replay->add_option("--outputs", outputs, "write engine outputs as JSON lines");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic hand stream");
  std::string scenario, sim_out, scene_out;
  std::uint64_t seed = 0;
  bool cloud = false;
  sim->add_option("scenario", scenario, "reach | pick_place | sweep_through_obstacle | fast_jerk | out_of_view")
      ->required();
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("-o,--output", sim_out, "output hand-stream file")->required();
  sim->add_option("--scene-out", scene_out, "write the scenario's scene cloud here");
  sim->add_flag("--cloud", cloud, "attach a camera-frame point cloud to every frame");

  auto* post = app.add_subcommand("postprocess", "world-frame, cropped clouds with the robot superimposed");
  std::string session, post_out, crop;
  int samples = kDefaultSphereSamples;
  post->add_option("session", session, "finalized session directory")->required()->check(CLI::ExistingDirectory);
  post->add_option("-o,--output", post_out, "processed output file")->required();
  post->add_option("--crop", crop, "crop box minx,miny,minz,maxx,maxy,maxz (default: workspace)");
  post->add_option("--samples", samples, "surface samples per collision sphere")->check(CLI::PositiveNumber);

  auto* exp = app.add_subcommand("export", "export processed frames to HDF5");
  std::string exp_in, exp_out;
  exp->add_option("input", exp_in, "processed file or finalized session directory")->required()->check(CLI::ExistingPath);
  exp->add_option("-o,--output", exp_out, "HDF5 file")->required();
  exp->add_option("--crop", crop, "crop box when exporting a session directly");
  exp->add_option("--samples", samples, "surface samples per collision sphere")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "demonstration quality report");
  std::string an_session, json_out;
  std::optional<double> visibility;
  std::uint64_t tolerance = 0;
  analyze->add_option("session", an_session, "finalized session directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--visibility-threshold", visibility, "minimum visible fraction")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--speed-tolerance", tolerance, "speed-mismatch ticks still considered replayable");
  analyze->add_option("--json", json_out, "write the report here instead of stdout");

  auto* cal = app.add_subcommand("calibrate", "camera pose in the robot base frame from two world poses");
  std::string world_base, world_camera;
  cal->add_option("--world-base", world_base, "x,y,z,qw,qx,qy,qz of the aligned virtual base")->required();
  cal->add_option("--world-camera", world_camera, "x,y,z,qw,qx,qy,qz of the camera")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*serve) return cmd_serve(g, bind, console, sessions);
    if (*replay) return cmd_replay(g, source, host, speed, realtime, record, discard, outputs);
    if (*sim) return cmd_simulate(g, scenario, seed, sim_out, scene_out, cloud);
    if (*post) return cmd_postprocess(session, post_out, crop, samples);
    if (*exp) return cmd_export(exp_in, exp_out, crop, samples);
    if (*analyze) return cmd_analyze(an_session, visibility, tolerance, json_out);
    if (*cal) return cmd_calibrate(world_base, world_camera);
  } catch (const ContractError& e) {
    std::cerr << "arcap: " << e.what() << "\n";
    return kUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "arcap: data integrity: " << e.what() << "\n";
    return kIntegrity;
  } catch (const StateError& e) {
    std::cerr << "arcap: " << e.what() << "\n";
    return kIntegrity;
  } catch (const ProtocolError& e) {
    std::cerr << "arcap: protocol: " << e.what() << "\n";
    return kProtocol;
  } catch (const std::exception& e) {
    std::cerr << "arcap: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
