#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "arcap/errors.hpp"
#include "arcap/recording.hpp"
#include "../oracle.hpp"
#include "../test_support.hpp"

using namespace arcap;
namespace fs = std::filesystem;

namespace {

using testing::TempDir;

DemoFrame random_frame(std::mt19937_64& rng, const RobotModel& m, double t, int points = 20) {
  std::uniform_int_distribution<int> c(0, 255), ev(0, 7), g(0, 2);
  DemoFrame f;
  f.timestamp = t;
  for (int i = 0; i < points; ++i)
    f.cloud.points.push_back({testing::random_vec(rng, -1, 1), Rgb{std::uint8_t(c(rng)), std::uint8_t(c(rng)), 7}});
  f.q = testing::random_config(m, rng);
  f.headset = testing::random_pose(rng);
  f.robot_base = testing::random_pose(rng);
  const int gi = g(rng);
  if (gi) f.gripper = gi == 1 ? GripperCommand::Open : GripperCommand::Closed;
  f.events = static_cast<std::uint8_t>(ev(rng));
  return f;
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    out[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return out;
}

}  // namespace

TEST_CASE("frame encoding is the inverse of decoding", "[recording][property]") {
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const DemoFrame f = quantize_frame(random_frame(rng, m, i * 0.1, i % 7));
    ByteWriter w;
    encode_demo_frame(w, f);
    CHECK(w.size() == 8 + 4 + 15 * f.cloud.size() + 2 + 4 * f.q.size() + 2 * 28 + 2);
    ByteReader r(w.bytes());
    CHECK(decode_demo_frame(r) == f);
    CHECK(r.done());
  }
}

TEST_CASE("append, finalize and discard follow the session state machine", "[recording]") {
  TempDir tmp("state");
  const auto m = testing::model("arm7_gripper");
  EngineConfig cfg;
  cfg.model = "arm7_gripper";
  cfg.embodiment = Embodiment::ParallelGripper;
  std::mt19937_64 rng(1);

  SessionRecorder a(tmp.path, "a", cfg, m);
  a.append(random_frame(rng, m, 1.0));
  CHECK(a.frame_count() == 1);
  CHECK_THROWS_AS(a.append(random_frame(rng, m, 0.5)), OrderingError);
  CHECK(a.frame_count() == 1);
  CHECK_THROWS_AS(SessionRecorder(tmp.path, "a", cfg, m), StateError);

  SessionRecorder b(tmp.path, "b", cfg, m);
  EventTotals totals;
  for (int i = 0; i < 100; ++i) {
    auto f = random_frame(rng, m, i / 60.0);
    totals.add(f.events);
    b.append(f);
  }
  CHECK(fs::exists(b.dir() / "chunk-000000.bin"));  // flushed at 60 frames
  const auto& man = b.finalize();
  CHECK(man.frame_count == 100);
  CHECK(man.events == totals);
  CHECK(man.chunks.size() == 2);
  CHECK(read_manifest(b.dir()).status == SessionStatus::Finalized);
  CHECK_THROWS_AS(b.discard(), StateError);
  CHECK_THROWS_AS(b.finalize(), StateError);
  CHECK_THROWS_AS(b.append(random_frame(rng, m, 10.0)), StateError);

  a.append(random_frame(rng, m, 2.0));
  a.discard();
  CHECK_FALSE(fs::exists(a.dir() / "chunk-000000.bin"));
  CHECK(fs::exists(a.dir() / "manifest"));
  const auto tomb = load_session(a.dir());
  CHECK(tomb.status() == SessionStatus::Discarded);
  CHECK(tomb.frames.empty());
  CHECK(tomb.manifest.frame_count == 2);
  CHECK_THROWS_AS(a.finalize(), StateError);
}

TEST_CASE("sessions read back bit-exact", "[recording][property]") {
  TempDir tmp("roundtrip");
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(9);
  std::vector<DemoFrame> written;
  SessionRecorder rec(tmp.path, "rt", EngineConfig{}, m);
  for (int i = 0; i < 150; ++i) {
    written.push_back(random_frame(rng, m, 0.5 + i / 60.0, i % 50));
    rec.append(written.back());
  }
  rec.finalize();
  const auto s = load_session(rec.dir());
  REQUIRE(s.frames.size() == written.size());
  for (std::size_t i = 0; i < written.size(); ++i) CHECK(s.frames[i] == quantize_frame(written[i]));
  CHECK(s.model.name == m.name);
  CHECK(s.config.embodiment == Embodiment::DexHand);
}

TEST_CASE("finalized sessions are immutable", "[recording]") {
  TempDir tmp("immutable");
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(2);
  SessionRecorder rec(tmp.path, "f", EngineConfig{}, m);
  for (int i = 0; i < 70; ++i) rec.append(random_frame(rng, m, i / 60.0));
  rec.finalize();
  const auto before = snapshot(rec.dir());
  CHECK_THROWS_AS(rec.append(random_frame(rng, m, 99.0)), StateError);
  CHECK_THROWS_AS(rec.discard(), StateError);
  CHECK_THROWS_AS(rec.finalize(), StateError);
  CHECK_THROWS_AS(SessionRecorder::resume(rec.dir()), StateError);
  CHECK(snapshot(rec.dir()) == before);
}

TEST_CASE("unfinished sessions can be resumed", "[recording]") {
  TempDir tmp("resume");
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(6);
  {
    SessionRecorder rec(tmp.path, "r", EngineConfig{}, m);
    for (int i = 0; i < 60; ++i) rec.append(random_frame(rng, m, i / 60.0));
  }
  auto rec = SessionRecorder::resume(session_dir(tmp.path, "r"));
  CHECK(rec.frame_count() == 60);
  CHECK_THROWS_AS(rec.append(random_frame(rng, m, 0.5)), OrderingError);
  rec.append(random_frame(rng, m, 2.0));
  rec.finalize();
  CHECK(load_session(rec.dir()).frames.size() == 61);
}

TEST_CASE("corruption names the affected frame", "[recording]") {
  TempDir tmp("corrupt");
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(3);
  SessionRecorder rec(tmp.path, "c", EngineConfig{}, m);
  for (int i = 0; i < 130; ++i) rec.append(random_frame(rng, m, i / 60.0));
  rec.finalize();
  const fs::path chunk = rec.dir() / "chunk-000001.bin";
  fs::permissions(chunk, fs::perms::owner_write, fs::perm_options::add);
  {
    std::fstream f(chunk, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x5a');
  }
  try {
    load_session(rec.dir());
    FAIL("expected an integrity error");
  } catch (const IntegrityError& e) {
    CHECK(e.frame_index() == 60);
  }
  fs::remove(chunk);
  try {
    load_session(rec.dir());
    FAIL("expected an integrity error");
  } catch (const IntegrityError& e) {
    CHECK(e.frame_index() == 60);
  }
}

TEST_CASE("post-processing moves clouds into the world and crops them", "[recording]") {
  const auto m = testing::model("planar2");
  CameraModel cam;
  Box box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  DemoFrame f;
  f.timestamp = 0.0;
  f.q = {0.0, 0.0};
  f.robot_base = Pose::translation(Vec3(50, 0, 0));  // keep the robot out of the box
  f.cloud.points = {{Vec3(0.1, 0.2, 0.3), Rgb{1, 2, 3}}, {Vec3(1.001, 0, 0), Rgb{}}, {Vec3(0, -1.001, 0), Rgb{}},
                    {Vec3(0, 0, 1.0), Rgb{}}};
  auto p = postprocess_frame(f, box, m, cam);
  REQUIRE(p.cloud.size() == 2);
  CHECK(p.cloud.points[0] == f.cloud.points[0]);
  CHECK(p.sources == std::vector<PointSource>{PointSource::Scene, PointSource::Scene});

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    f.headset = testing::random_pose(rng);
    cam.mount = testing::random_pose(rng);
    f.cloud.points.clear();
    for (int i = 0; i < 500; ++i) f.cloud.points.push_back({testing::random_vec(rng, -2, 2), Rgb{}});
    box = {testing::random_vec(rng, -1.0, 0.0), testing::random_vec(rng, 0.0, 1.0)};
    p = postprocess_frame(f, box, m, cam);
    const auto T = oracle::to_iso(f.headset) * oracle::to_iso(cam.mount);
    std::size_t expected = 0;
    for (const auto& pt : f.cloud.points) {
      const Vec3 w = T * pt.position;
      expected += (w.array() >= box.min.array()).all() && (w.array() <= box.max.array()).all();
    }
    CHECK(p.cloud.size() == expected);
    for (const auto& pt : p.cloud.points) CHECK(box.contains(pt.position));
  }
}

TEST_CASE("robot cloud keeps the camera-facing hemisphere", "[recording]") {
  CameraModel cam;
  const auto one = testing::sphere_model({{Vec3(0, 0, 1.0), 0.05}});
  const auto cloud = render_robot_cloud(one, {0.0}, Pose::identity(), Pose::identity(), cam, 100);
  // brute force over the same lattice definition
  int expected = 0;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < 100; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / 100;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 nrm(r * std::cos(golden * i), r * std::sin(golden * i), z);
    const Vec3 p = Vec3(0, 0, 1.0) + 0.05 * nrm;
    expected += nrm.dot(-p) > 0.0 &&
                oracle::projects_inside(p, cam.hfov_deg, cam.vfov_deg, cam.near, cam.far);
  }
  CHECK(static_cast<int>(cloud.size()) == expected);
  CHECK(cloud.size() >= 40);
  CHECK(cloud.size() <= 60);

  const auto behind = testing::sphere_model({{Vec3(0, 0, -1.0), 0.05}});
  CHECK(render_robot_cloud(behind, {0.0}, Pose::identity(), Pose::identity(), cam, 100).empty());

  const auto left = testing::sphere_model({{Vec3(-0.2, 0, 1.0), 0.05}});
  const auto right = testing::sphere_model({{Vec3(0.3, 0.1, 1.5), 0.08}});
  const auto both = testing::sphere_model({{Vec3(-0.2, 0, 1.0), 0.05}, {Vec3(0.3, 0.1, 1.5), 0.08}});
  CHECK(render_robot_cloud(both, {0.0, 0.0}, Pose::identity(), Pose::identity(), cam, 100).size() ==
        render_robot_cloud(left, {0.0}, Pose::identity(), Pose::identity(), cam, 100).size() +
            render_robot_cloud(right, {0.0}, Pose::identity(), Pose::identity(), cam, 100).size());
  CHECK_THROWS_AS(render_robot_cloud(one, {0.0}, Pose::identity(), Pose::identity(), cam, 0), ContractError);
}

TEST_CASE("robot-labelled points lie on the robot's spheres", "[recording][property]") {
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(31);
  CameraModel cam;
  const Box box{Vec3(-5, -5, -5), Vec3(5, 5, 5)};
  int robot_points = 0;
  for (int trial = 0; trial < 20; ++trial) {
    DemoFrame f;
    f.q = testing::random_config(m, rng);
    f.robot_base = Pose::translation(testing::random_vec(rng, -0.2, 0.2));
    f.headset = look_at(Vec3(-0.6, 0, 1.0), Vec3(0.3, 0, 0.4));
    const auto p = postprocess_frame(f, box, m, cam, 32);
    const auto links = oracle::link_transforms(m, f.q);
    const auto base = oracle::to_iso(f.robot_base);
    for (std::size_t i = 0; i < p.cloud.size(); ++i) {
      REQUIRE(p.sources[i] == PointSource::Robot);
      ++robot_points;
      double best = 1e9;
      for (std::size_t l = 0; l < m.links.size(); ++l)
        for (const auto& s : m.links[l].spheres)
          best = std::min(best, std::abs((p.cloud.points[i].position - base * links[l] * s.center).norm() - s.radius));
      CHECK(best < 1e-6);
    }
  }
  CHECK(robot_points > 0);
}

TEST_CASE("post-processing requires a finalized session", "[recording]") {
  TempDir tmp("pp");
  const auto m = testing::model("arm7_dexhand");
  std::mt19937_64 rng(8);
  SessionRecorder rec(tmp.path, "p", EngineConfig{}, m);
  for (int i = 0; i < 5; ++i) rec.append(random_frame(rng, m, i / 60.0));
  DemoSession open = load_session(rec.dir());
  CHECK_THROWS_AS(postprocess_session(open), StateError);
  rec.finalize();
  const auto frames = postprocess_session(load_session(rec.dir()));
  CHECK(frames.size() == 5);
  write_processed(tmp.path / "out.prc", frames);
  const auto back = read_processed(tmp.path / "out.prc");
  REQUIRE(back.size() == frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(back[i].sources == frames[i].sources);
    CHECK(back[i].q == frames[i].q);
    CHECK(back[i].cloud == quantize_cloud(frames[i].cloud));
  }
  export_hdf5(tmp.path / "out.h5", frames);
  std::ifstream h5(tmp.path / "out.h5", std::ios::binary);
  char sig[8];
  h5.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "HDF");
}
