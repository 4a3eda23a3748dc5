// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "arcap/analysis.hpp"
#include "arcap/replay.hpp"
#include "arcap/server.hpp"
#include "arcap/simulate.hpp"
#include "../message_gen.hpp"
#include "../oracle.hpp"
#include "../test_support.hpp"

using namespace arcap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EngineConfig config_for(const RobotModel& m) {
  EngineConfig c;
  c.model = m.name;
  c.embodiment = m.embodiment;
  return c;
}

double rot_angle(const oracle::Iso& a, const Pose& b) {
  return Eigen::AngleAxisd(a.linear() * b.rotation().transpose()).angle();
}

// IK suite -------------------------------------------------------------------

Verdict ik_suite() {
  std::mt19937_64 rng(1001);
  std::string detail;
  bool pass = true;
  for (const char* name : {"arm7_dexhand", "arm7_gripper", "planar2"}) {
    const RobotModel m = testing::model(name);
    const IkParams p;
    int ok = 0;
    std::vector<double> times;
    for (int i = 0; i < 1000; ++i) {
      const JointConfig goal = testing::random_config(m, rng);
      const Pose target = forward_kinematics(m, goal).at(m.tracking_frame);
      JointConfig init = goal;
      std::uniform_real_distribution<double> jitter(-0.2, 0.2);
      for (double& v : init) v += jitter(rng);
      init = clamp_to_limits(m, init);
      const auto t0 = Clock::now();
      const IkResult r = solve_frame_ik(m, m.tracking_frame, target, init, p);
      times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
      const oracle::Iso t = oracle::frame_transform(m, r.q, m.tracking_frame);
      if ((t.translation() - target.position).norm() < 1e-3 && rot_angle(t, target) < 1e-2) ++ok;
    }
    std::sort(times.begin(), times.end());
    double mean = 0;
    for (double t : times) mean += t;
    mean /= static_cast<double>(times.size());
    const double p99 = times[static_cast<std::size_t>(0.99 * static_cast<double>(times.size())) - 1];

    // Jacobian against central differences of the oracle's forward kinematics
    double worst = 0.0;
    const double h = 1e-6;
    std::vector<int> all(m.dof());
    for (std::size_t i = 0; i < m.dof(); ++i) all[i] = static_cast<int>(i);
    for (int trial = 0; trial < 50; ++trial) {
      const JointConfig q = testing::random_config(m, rng);
      const KinematicState s = compute_kinematics(m, q);
      for (std::size_t f = 0; f < m.frames.size(); ++f) {
        const Eigen::MatrixXd J = frame_jacobian(m, s, static_cast<int>(f), all);
        for (std::size_t d = 0; d < m.dof(); ++d) {
          JointConfig qp = q, qm = q;
          qp[d] += h;
          qm[d] -= h;
          const oracle::Iso tp = oracle::frame_transform(m, qp, m.frames[f].name);
          const oracle::Iso tm = oracle::frame_transform(m, qm, m.frames[f].name);
          const Eigen::Vector3d lin = (tp.translation() - tm.translation()) / (2 * h);
          const Eigen::AngleAxisd aa(tp.linear() * tm.linear().transpose());
          const Eigen::Vector3d ang = aa.axis() * aa.angle() / (2 * h);
          const auto c = static_cast<Eigen::Index>(d);
          worst = std::max({worst, (J.block<3, 1>(0, c) - lin).cwiseAbs().maxCoeff(),
                            (J.block<3, 1>(3, c) - ang).cwiseAbs().maxCoeff()});
        }
      }
    }
    const bool model_pass = ok >= 950 && mean < 1.0 && p99 < 5.0 && worst < 1e-5;
    pass = pass && model_pass;
    detail += fmt("%s %d/1000 converged, mean %.3f ms, p99 %.3f ms, jacobian err %.1e; ", name, ok, mean, p99, worst);
  }
  return {pass, detail};
}

// Null-space property ---------------------------------------------------------

struct HandSolve {
  JointConfig q;
  double pos_res, ori_res, tip_res;
  bool converged;
};

HandSolve solve_hand(const RobotModel& m, const Pose& wrist, const std::map<std::string, Vec3>& tips,
                     const JointConfig& init, const IkParams& p) {
  const IkResult arm = solve_frame_ik(m, m.tracking_frame, wrist, init, p);
  const FingertipIkResult hand = solve_fingertip_ik(m, tips, arm.q, p);
  HandSolve out{hand.q, 0, 0, 0, arm.converged && hand.converged};
  const oracle::Iso t = oracle::frame_transform(m, out.q, m.tracking_frame);
  out.pos_res = (t.translation() - wrist.position).norm();
  out.ori_res = rot_angle(t, wrist);
  for (const auto& [frame, target] : tips)
    out.tip_res = std::max(out.tip_res, (oracle::frame_transform(m, out.q, frame).translation() - target).norm());
  return out;
}

Verdict nullspace_property() {
  const RobotModel m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(2002);
  IkParams with, without;
  without.nullspace_gain = 0.0;
  int targets = 0, held = 0, strictly_closer = 0, attempts = 0;
  while (targets < 200 && attempts < 5000) {
    ++attempts;
    const JointConfig goal = testing::random_config(m, rng);
    const auto fk = forward_kinematics(m, goal);
    std::map<std::string, Vec3> tips;
    for (const auto& t : m.fingertip_frames) tips[t] = fk.at(t).position;
    JointConfig init = goal;
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (double& v : init) v += jitter(rng);
    init = clamp_to_limits(m, init);
    const HandSolve b = solve_hand(m, fk.at(m.tracking_frame), tips, init, without);
    if (!b.converged) continue;  // reachable: the plain solver gets there
    ++targets;
    const HandSolve a = solve_hand(m, fk.at(m.tracking_frame), tips, init, with);
    double da = 0, db = 0;
    for (std::size_t d = 0; d < m.dof(); ++d) {
      da += std::pow(a.q[d] - m.rest[d], 2);
      db += std::pow(b.q[d] - m.rest[d], 2);
    }
    const bool task = a.pos_res <= 2 * with.position_tolerance && a.ori_res <= 2 * with.orientation_tolerance &&
                      a.tip_res <= 2 * with.position_tolerance;
    if (task && std::sqrt(da) <= std::sqrt(db)) ++held;
    if (std::sqrt(da) < std::sqrt(db) - 1e-9) ++strictly_closer;
  }
  return {targets == 200 && held == 200,
          fmt("%d/%d targets keep the task within 2x tolerance and end no farther from rest (%d strictly closer)",
              held, targets, strictly_closer)};
}

// Velocity safety -------------------------------------------------------------

Verdict velocity_safety() {
  std::uint64_t ticks = 0, violations = 0, speed_events = 0;
  std::uint64_t seed = 0;
  const std::vector<std::shared_ptr<const RobotModel>> models = {
      std::make_shared<const RobotModel>(testing::model("arm7_dexhand")),
      std::make_shared<const RobotModel>(testing::model("arm7_gripper"))};
  while (ticks < 100000) {
    const auto& model = models[seed % 2];
    const EngineConfig cfg = config_for(*model);
    const Simulation sim = simulate(Scenario::FastJerk, seed++, cfg, *model);
    Engine engine(cfg, model);
    const auto vel = model->velocity_limits();
    JointConfig prev;
    double prev_t = 0;
    for (const auto& f : sim.frames) {
      const EngineOutput o = engine.tick(f.frame);
      if (!prev.empty()) {
        const double dt = o.timestamp - prev_t;
        for (std::size_t i = 0; i < o.q.size(); ++i)
          if (std::abs(o.q[i] - prev[i]) > vel[i] * dt * (1 + 1e-12)) ++violations;
      }
      for (const auto& e : o.events) speed_events += e.kind() == FeedbackKind::SpeedLimit;
      prev = o.q;
      prev_t = o.timestamp;
      ++ticks;
    }
  }
  return {violations == 0 && speed_events > 0,
          fmt("%llu ticks over %llu fast_jerk streams, %llu velocity violations, %llu speed-limit events",
              (unsigned long long)ticks, (unsigned long long)seed, (unsigned long long)violations,
              (unsigned long long)speed_events)};
}

// Gripper hysteresis -----------------------------------------------------------

Verdict gripper_hysteresis() {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GripperState state;
  HandFrame f;
  f.wrist = Pose::identity();
  f.headset = Pose::identity();
  double width = 0.1, last_toggle = -1.0, min_gap = std::numeric_limits<double>::infinity();
  std::uint64_t toggles = 0, short_pairs = 0;
  for (std::uint64_t i = 0; i < 1000000; ++i) {
    // mix of slow drift and sudden pinches/releases around the threshold
    if (u(rng) < 0.05) width = u(rng) * 0.16;
    width = std::clamp(width + (u(rng) - 0.5) * 0.01, 0.0, 0.16);
    f.timestamp = static_cast<double>(i) / 60.0;
    f.tip(Finger::Thumb) = Vec3(0, -width / 2, 0.1);
    f.tip(Finger::Index) = Vec3(0, width / 2, 0.1);
    const auto r = retarget_parallel_gripper(f, state, kDefaultOpenWidth, kDefaultTogglePeriod);
    if (r.state.state != state.state) {
      ++toggles;
      if (last_toggle >= 0) {
        const double gap = f.timestamp - last_toggle;
        min_gap = std::min(min_gap, gap);
        if (gap < 1.0) ++short_pairs;
      }
      last_toggle = f.timestamp;
    }
    state = r.state;
  }
  return {short_pairs == 0 && toggles > 1000 && kDefaultTogglePeriod == 1.0,
          fmt("10^6 ticks, %llu toggles, %llu pairs closer than 1.0 s, closest pair %.4f s",
              (unsigned long long)toggles, (unsigned long long)short_pairs, min_gap)};
}

// Collision oracle -------------------------------------------------------------

Verdict collision_oracle() {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<RobotModel> models = {testing::model("arm7_dexhand"), testing::model("arm7_gripper")};
  std::uint64_t false_negatives = 0, loose_positives = 0, positives = 0, grid_only = 0;
  for (int scene = 0; scene < 500; ++scene) {
    const RobotModel& m = models[scene % 2];
    const JointConfig q = testing::random_config(m, rng);
    const Pose base(testing::random_vec(rng, -0.2, 0.2), Quat(Eigen::AngleAxisd(u(rng) * 6.28, Vec3::UnitZ())));
    const double res = 0.01 + 0.04 * u(rng);
    const double margin = 0.02 * u(rng);
    const Vec3 origin = testing::random_vec(rng, -0.05, 0.05);

    const auto links = oracle::link_transforms(m, q);
    std::vector<std::pair<std::size_t, Eigen::Vector3d>> centres;
    std::vector<double> radii;
    for (std::size_t l = 0; l < m.links.size(); ++l)
      for (const auto& s : m.links[l].spheres) {
        centres.push_back({l, oracle::to_iso(base) * links[l] * s.center});
        radii.push_back(s.radius);
      }

    // points clustered around random spheres so contacts are common
    ColoredPointCloud cloud;
    const int n = 20 + static_cast<int>(u(rng) * 200);
    for (int i = 0; i < n; ++i) {
      const auto& [l, c] = centres[static_cast<std::size_t>(u(rng) * static_cast<double>(centres.size()))];
      cloud.points.push_back({c + testing::random_vec(rng, -0.15, 0.15), Rgb{0, 0, 0}});
    }
    const VoxelGrid grid = voxelize(cloud, origin, res);
    const auto hits = check_collision(m, q, base, grid, margin);
    const std::set<std::string> flagged(hits.begin(), hits.end());

    std::set<std::string> truth;
    std::map<std::string, double> nearest;  // link -> min over points of (distance - radius)
    for (std::size_t k = 0; k < centres.size(); ++k) {
      const std::string& link = m.links[centres[k].first].name;
      for (const auto& p : cloud.points) {
        const double gap = (p.position - centres[k].second).norm() - radii[k];
        if (gap <= margin) truth.insert(link);
        auto it = nearest.find(link);
        if (it == nearest.end() || gap < it->second) nearest[link] = gap;
      }
    }
    for (const auto& l : truth) false_negatives += !flagged.count(l);
    for (const auto& l : flagged) {
      ++positives;
      if (!truth.count(l)) {
        ++grid_only;
        if (nearest.at(l) > margin + std::sqrt(3.0) * res + 1e-12) ++loose_positives;
      }
    }
  }
  return {false_negatives == 0 && loose_positives == 0,
          fmt("500 scenes, %llu flagged links, %llu false negatives, %llu grid-only positives, %llu beyond margin + "
              "diagonal",
              (unsigned long long)positives, (unsigned long long)false_negatives, (unsigned long long)grid_only,
              (unsigned long long)loose_positives)};
}

// Frustum exactness ------------------------------------------------------------

Verdict frustum_exactness() {
  std::mt19937_64 rng(5005);
  const CameraModel cam;
  int agree = 0, inside = 0;
  const double tx = std::tan(cam.hfov_deg * M_PI / 360.0), ty = std::tan(cam.vfov_deg * M_PI / 360.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    Vec3 p;
    if (i % 2 == 0) {
      p = testing::random_vec(rng, -4.0, 4.0);
    } else {
      // concentrate near the side planes and depth limits
      const double z = cam.near + (cam.far - cam.near) * (0.5 + 0.55 * u(rng));
      p = Vec3(z * tx * (1.0 + 0.02 * u(rng)) * (u(rng) < 0 ? -1 : 1), z * ty * u(rng) * 1.02, z);
    }
    const bool lib = in_frustum(p, cam);
    const bool ref = oracle::projects_inside(p, cam.hfov_deg, cam.vfov_deg, cam.near, cam.far);
    agree += lib == ref;
    inside += ref;
  }
  return {agree == 10000, fmt("%d/10000 points agree with the projection oracle (%d inside)", agree, inside)};
}

// Loopback plumbing ------------------------------------------------------------

struct Loopback {
  std::unique_ptr<Server> server;
  fs::path root;

  Loopback(const EngineConfig& cfg, std::shared_ptr<const RobotModel> model, const fs::path& sessions,
           std::shared_ptr<const VoxelGrid> scene = nullptr) {
    ServerOptions o;
    o.config = cfg;
    o.model = std::move(model);
    o.scene = std::move(scene);
    o.session_root = sessions;
    root = sessions;
    server = std::make_unique<Server>(o, "127.0.0.1", 0);
    server->start();
  }

  StreamResult stream(const std::vector<HandFrameMsg>& frames, const std::optional<ColoredPointCloud>& scene,
                      const std::string& record, bool realtime = false) {
    Client client("127.0.0.1", server->port(), "acceptance");
    StreamOptions opts;
    opts.scene = scene;
    if (!record.empty()) opts.record = record;
    opts.realtime = realtime;
    return stream_frames(client, frames, opts);
  }
};

// Oracle for collision ticks: any obstacle point within a sphere's reach, where
// the reach covers the sphere, the margin and half a voxel diagonal (the
// obstacle points sit on voxel centres).
bool oracle_collides(const RobotModel& m, const JointConfig& q, const Pose& base, const ColoredPointCloud& obstacle,
                     const EngineConfig& cfg) {
  const auto links = oracle::link_transforms(m, q);
  const double half_diag = 0.5 * std::sqrt(3.0) * cfg.voxel_resolution;
  for (std::size_t l = 0; l < m.links.size(); ++l)
    for (const auto& s : m.links[l].spheres) {
      const Eigen::Vector3d c = oracle::to_iso(base) * links[l] * s.center;
      for (const auto& p : obstacle.points)
        if ((p.position - c).norm() <= s.radius + cfg.collision_margin + half_diag) return true;
    }
  return false;
}

Verdict end_to_end() {
  testing::TempDir tmp("acc_e2e");
  auto model = std::make_shared<const RobotModel>(testing::model("arm7_dexhand"));
  const EngineConfig cfg = config_for(*model);
  Loopback lb(cfg, model, tmp.path);
  std::string detail;
  bool pass = true;

  // sweep_through_obstacle: collision ticks equal the oracle's overlap ticks
  int mismatched = 0, oracle_ticks = 0, streams = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Simulation sim = simulate(Scenario::SweepThroughObstacle, seed, cfg, *model);
    const StreamResult r = lb.stream(sim.frames, sim.scene, "");
    ++streams;
    if (r.outputs.size() != sim.frames.size()) {
      pass = false;
      continue;
    }
    for (const auto& o : r.outputs) {
      const bool engine_hit = event_mask(o.output.events) & event_bit(FeedbackKind::Collision);
      const bool oracle_hit = oracle_collides(*model, o.output.q, cfg.robot_base, sim.scene, cfg);
      oracle_ticks += oracle_hit;
      mismatched += engine_hit != oracle_hit;
    }
  }
  pass = pass && mismatched == 0 && oracle_ticks > 0;
  detail += fmt("sweep: %d streams, %d oracle collision ticks, %d mismatches; ", streams, oracle_ticks, mismatched);

  auto record_and_analyze = [&](Scenario sc, const std::string& id) {
    const Simulation sim = simulate(sc, 7, cfg, *model);
    lb.stream(sim.frames, std::nullopt, id);
    return analyze_session(load_session(session_dir(tmp.path, id)));
  };
  const QualityReport away = record_and_analyze(Scenario::OutOfView, "out_of_view");
  const bool away_ok = away.min_visible_fraction < cfg.visibility_threshold && !away.replayable;
  const QualityReport reach = record_and_analyze(Scenario::Reach, "reach");
  pass = pass && away_ok && reach.replayable;
  detail += fmt("out_of_view min visible %.3f replayable=%s; reach replayable=%s", away.min_visible_fraction,
                away.replayable ? "true" : "false", reach.replayable ? "true" : "false");
  return {pass, detail};
}

// Determinism & persistence ------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PipelineRun {
  std::map<std::string, std::string> chunks;  // relative path -> bytes
  std::string processed;
  std::vector<QualityReport> reports;
  bool readback_exact = true;
};

PipelineRun run_pipeline(const fs::path& root) {
  auto model = std::make_shared<const RobotModel>(testing::model("arm7_dexhand"));
  const EngineConfig cfg = config_for(*model);
  Loopback lb(cfg, model, root / "sessions");
  PipelineRun run;
  for (Scenario sc : {Scenario::Reach, Scenario::SweepThroughObstacle, Scenario::OutOfView}) {
    const Simulation sim = simulate(sc, 11, cfg, *model, true);
    const std::string id = to_string(sc);
    const StreamResult r = lb.stream(sim.frames, sim.scene, id);
    const DemoSession s = load_session(session_dir(lb.root, id));

    // read-back equals what was sent and answered, at stored precision
    if (s.frames.size() != r.outputs.size()) run.readback_exact = false;
    for (std::size_t i = 0; i < std::min(s.frames.size(), r.outputs.size()); ++i) {
      DemoFrame expect;
      const auto& o = r.outputs[i].output;
      expect.timestamp = o.timestamp;
      expect.cloud = sim.frames[i].cloud.value_or(ColoredPointCloud{});
      expect.q = o.q;
      expect.headset = sim.frames[i].frame.headset;
      expect.robot_base = cfg.robot_base;
      expect.gripper = o.gripper;
      expect.events = event_mask(o.events);
      if (!(s.frames[i] == quantize_frame(expect))) run.readback_exact = false;
    }

    for (const auto& e : fs::directory_iterator(session_dir(lb.root, id)))
      if (e.path().extension() == ".bin") run.chunks[id + "/" + e.path().filename().string()] = file_bytes(e.path());
    const fs::path processed = root / (id + ".prc");
    write_processed(processed, postprocess_session(s));
    run.processed += file_bytes(processed);
    run.reports.push_back(analyze_session(s));
  }
  return run;
}

Verdict determinism() {
  testing::TempDir a("acc_det_a"), b("acc_det_b");
  const PipelineRun ra = run_pipeline(a.path);
  const PipelineRun rb = run_pipeline(b.path);
  std::size_t bytes = 0;
  for (const auto& [k, v] : ra.chunks) bytes += v.size();
  const bool same = !ra.chunks.empty() && ra.chunks == rb.chunks && ra.processed == rb.processed &&
                    ra.reports == rb.reports;
  return {same && ra.readback_exact && rb.readback_exact,
          fmt("%zu chunk files (%zu bytes) %s, processed output %s, reports %s, read-back %s", ra.chunks.size(), bytes,
              ra.chunks == rb.chunks ? "identical" : "DIFFER", ra.processed == rb.processed ? "identical" : "DIFFERS",
              ra.reports == rb.reports ? "identical" : "DIFFER",
              ra.readback_exact && rb.readback_exact ? "bit-exact" : "NOT bit-exact")};
}

// Protocol robustness ------------------------------------------------------------

Verdict protocol_robustness() {
  std::mt19937_64 rng(6006);
  int roundtrip_ok = 0;
  for (int i = 0; i < 10000; ++i) {
    const Message m = testing::random_message(rng);
    const auto bytes = encode_message(m);
    roundtrip_ok += decode_message(bytes) == m && encode_message(decode_message(bytes)) == bytes;
  }

  // fuzz corpus, decoded and also pushed through a live session
  ServerOptions opts;
  opts.model = std::make_shared<const RobotModel>(testing::model("arm7_dexhand"));
  testing::TempDir tmp("acc_fuzz");
  opts.session_root = tmp.path;
  ServerSession session(opts);
  session.handle({Message{1, Hello{kProtocolVersion, "fuzz"}}});

  std::uniform_int_distribution<int> byte(0, 255);
  std::uint64_t protocol_errors = 0, accepted = 0, crashes = 0;
  for (int i = 0; i < 100000; ++i) {
    std::vector<std::uint8_t> payload;
    if (i % 3 == 0) {
      const auto enc = encode_message(testing::random_message(rng));
      payload.assign(enc.begin() + 4, enc.end());
      for (int k = 0; k < 4 && !payload.empty(); ++k)
        payload[std::uniform_int_distribution<std::size_t>(0, payload.size() - 1)(rng)] =
            static_cast<std::uint8_t>(byte(rng));
    } else {
      payload.resize(std::uniform_int_distribution<std::size_t>(0, 200)(rng));
      for (auto& b : payload) b = static_cast<std::uint8_t>(byte(rng));
      if (i % 3 == 1 && !payload.empty()) payload[0] = '{';
    }
    ByteWriter w;
    w.put(static_cast<std::uint32_t>(payload.size()));
    w.put_bytes(std::string_view(reinterpret_cast<const char*>(payload.data()), payload.size()));
    try {
      Message m = decode_message(w.bytes());
      ++accepted;
      session.handle({std::move(m)});
    } catch (const ProtocolError&) {
      ++protocol_errors;
    } catch (...) {
      ++crashes;
    }
  }
  const auto hand = synthesize_hand_frame(*opts.model, opts.model->rest, Pose::identity(),
                                          look_at(Vec3(-0.6, 0, 1.0), Vec3(0.45, 0, 0.25)), 1e9);
  bool alive = false;
  if (!session.closed()) {
    const auto r = session.handle({Message{~std::uint64_t{0}, HandFrameMsg{hand, std::nullopt}}});
    alive = !r.empty();
  }
  return {roundtrip_ok == 10000 && crashes == 0 && alive,
          fmt("%d/10000 random messages round-trip; fuzz 10^5 frames: %llu protocol errors, %llu decoded, %llu "
              "other failures, session %s",
              roundtrip_ok, (unsigned long long)protocol_errors, (unsigned long long)accepted,
              (unsigned long long)crashes, alive ? "still answering" : "closed")};
}

// Throughput ---------------------------------------------------------------------

Verdict throughput() {
  testing::TempDir tmp("acc_tp");
  auto model = std::make_shared<const RobotModel>(testing::model("arm7_dexhand"));
  const EngineConfig cfg = config_for(*model);

  // 50k points over the table and a shelf behind the workspace
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ColoredPointCloud scene;
  for (int i = 0; i < 50000; ++i) {
    const Vec3 p = i % 2 ? Vec3(-0.2 + 1.2 * u(rng), -0.6 + 1.2 * u(rng), -0.01 * u(rng))
                         : Vec3(0.95 + 0.1 * u(rng), -0.6 + 1.2 * u(rng), 0.8 * u(rng));
    scene.points.push_back({p, Rgb{static_cast<std::uint8_t>(i % 256), 120, 90}});
  }

  Loopback lb(cfg, model, tmp.path);
  std::vector<HandFrameMsg> frames;
  const Pose headset = look_at(Vec3(-0.6, 0, 1.0), Vec3(0.45, 0, 0.25));
  for (int i = 0; i < 3600; ++i) {
    const double t = i / 60.0;
    JointConfig q = model->rest;
    for (std::size_t d = 0; d < 7; ++d) q[d] += 0.25 * std::sin(2 * M_PI * t / 6.0 + d);
    frames.push_back({synthesize_hand_frame(*model, q, cfg.robot_base, headset, t), std::nullopt});
  }
  const auto t0 = Clock::now();
  const StreamResult r = lb.stream(frames, scene, "", true);
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  const ServerStats st = lb.server->stats();
  std::string where;
  for (const auto& o : r.outputs)
    if (o.dropped > 0) where += fmt(" %llu", (unsigned long long)o.ack);
  return {r.outputs.size() == 3600 && st.dropped_frames == 0 && r.errors.empty(),
          fmt("%zu/3600 outputs in %.1f s at 60 Hz with a 50k-point scene, %llu frames coalesced%s%s",
              r.outputs.size(), wall, (unsigned long long)st.dropped_frames, where.empty() ? "" : " before seq",
              where.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"ik_suite", ik_suite},
      {"nullspace_property", nullspace_property},
      {"velocity_safety", velocity_safety},
      {"gripper_hysteresis", gripper_hysteresis},
      {"collision_oracle_equivalence", collision_oracle},
      {"frustum_exactness", frustum_exactness},
      {"end_to_end_scenarios", end_to_end},
      {"determinism_and_persistence", determinism},
      {"protocol_robustness", protocol_robustness},
      {"throughput", throughput},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), secs, v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
