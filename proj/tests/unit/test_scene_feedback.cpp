#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "arcap/errors.hpp"
#include "arcap/scene_feedback.hpp"
#include "../oracle.hpp"
#include "../test_support.hpp"

using namespace arcap;

namespace {

ColoredPointCloud cloud_of(const std::vector<Vec3>& pts) {
  ColoredPointCloud c;
  for (const auto& p : pts) c.points.push_back({p, Rgb{0, 0, 0}});
  return c;
}

}  // namespace

TEST_CASE("voxelize follows the floor convention", "[scene]") {
  auto g = voxelize(cloud_of({{0.001, 0.001, 0.001}, {0.01, 0.01, 0.01}, {0.019, 0.0, 0.005}}), Vec3::Zero(), 0.02);
  CHECK(g.size() == 1);
  CHECK(voxelize({}, Vec3::Zero(), 0.02).empty());
  g = voxelize(cloud_of({{0.5, 0.0, 0.0}}), Vec3::Zero(), 0.25);
  CHECK(g.indices().front() == VoxelIndex{2, 0, 0});
  g = voxelize(cloud_of({{-0.01, 0.0, 0.0}}), Vec3::Zero(), 0.02);
  CHECK(g.indices().front() == VoxelIndex{-1, 0, 0});
  CHECK_THROWS_AS(VoxelGrid(Vec3::Zero(), 0.0), ContractError);
}

TEST_CASE("voxelize is permutation and duplication invariant", "[scene][property]") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.push_back(testing::random_vec(rng, -0.5, 0.5));
    const auto a = voxelize(cloud_of(pts), Vec3(0.01, -0.02, 0.003), 0.03).indices();
    auto shuffled = pts;
    shuffled.insert(shuffled.end(), pts.begin(), pts.begin() + 100);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(voxelize(cloud_of(shuffled), Vec3(0.01, -0.02, 0.003), 0.03).indices() == a);
  }
}

TEST_CASE("collision examples", "[scene]") {
  const auto planar = testing::model("planar2");
  CHECK(check_collision(planar, JointConfig{0, 0}, Pose::identity(), VoxelGrid(Vec3::Zero(), 0.02), 0.01).empty());

  VoxelGrid g(Vec3::Zero(), 0.02);
  g.insert({0, 0, 0});
  const Vec3 c = g.center_of({0, 0, 0});
  auto m = testing::sphere_model({{Vec3::Zero(), 0.05}});
  CHECK(check_collision(m, JointConfig{0.0}, Pose::translation(c + Vec3(0.01, 0, 0)), g, 0.0) ==
        std::vector<std::string>{"l0"});

  const double reach = 0.05 + 0.01 + 0.5 * std::sqrt(3.0) * 0.02;
  CHECK(check_collision(m, JointConfig{0.0}, Pose::translation(c + Vec3(0, reach + 1e-6, 0)), g, 0.01).empty());
  CHECK_FALSE(check_collision(m, JointConfig{0.0}, Pose::translation(c + Vec3(0, reach - 1e-6, 0)), g, 0.01).empty());
}

TEST_CASE("collision checking is conservative against the point oracle", "[scene][property]") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> npts(1, 500), nsph(1, 10);
  std::uniform_real_distribution<double> rad(0.01, 0.12), res(0.005, 0.05);
  const double margin = 0.01;
  int positives = 0;
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<Sphere> spheres(nsph(rng));
    for (auto& s : spheres) s = {testing::random_vec(rng, -0.3, 0.3), rad(rng)};
    std::vector<Vec3> pts(npts(rng));
    for (auto& p : pts) p = testing::random_vec(rng, -0.4, 0.4);
    const auto grid = voxelize(cloud_of(pts), testing::random_vec(rng, -0.01, 0.01), res(rng));
    const auto hits = check_collision(testing::sphere_model(spheres), JointConfig(spheres.size(), 0.0), Pose::identity(), grid, margin);
    for (std::size_t i = 0; i < spheres.size(); ++i) {
      double d = 1e9;
      for (const auto& p : pts) d = std::min(d, (p - spheres[i].center).norm() - spheres[i].radius);
      const bool grid_hit = std::find(hits.begin(), hits.end(), "l" + std::to_string(i)) != hits.end();
      if (d <= margin) CHECK(grid_hit);
      if (grid_hit) {
        ++positives;
        CHECK(d <= margin + std::sqrt(3.0) * grid.resolution());
      }
    }
  }
  CHECK(positives > 0);
}

TEST_CASE("frustum examples", "[scene]") {
  CameraModel cam;
  CHECK(in_frustum({0, 0, 1}, cam));
  CHECK_FALSE(in_frustum({0, 0, -1}, cam));
  CHECK(std::abs(std::tan(43.5 * M_PI / 180.0) - 0.9490) < 1e-4);
  CHECK(in_frustum({0.948, 0, 1.0}, cam));
  CHECK_FALSE(in_frustum({0.950, 0, 1.0}, cam));
  CHECK_FALSE(in_frustum({0, 0, 0.29}, cam));
  CHECK_FALSE(in_frustum({0, 0, 3.01}, cam));
  CHECK_THROWS_AS(check_visibility(Pose::identity(), cam, {}), ContractError);
  cam.near = 4.0;
  CHECK_THROWS_AS(check_visibility(Pose::identity(), cam, {{0, 0, 1}}), ContractError);
}

TEST_CASE("visibility agrees with the projection oracle", "[scene][property]") {
  std::mt19937_64 rng(99);
  CameraModel cam;
  const Pose cam_world = testing::random_pose(rng);
  const auto inv = oracle::to_iso(cam_world).inverse();
  int agree = 0, visible = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p = cam_world.transform(testing::random_vec(rng, -3.5, 3.5));
    const bool expected = oracle::projects_inside(inv * p, cam.hfov_deg, cam.vfov_deg, cam.near, cam.far);
    const auto r = check_visibility(cam_world, cam, {p});
    agree += (r.visible_fraction == 1.0) == expected;
    visible += expected;
  }
  CHECK(agree == 10000);
  CHECK(visible > 100);
}

TEST_CASE("visibility fraction and threshold", "[scene]") {
  CameraModel cam;
  const std::vector<Vec3> pts{{0, 0, 1}, {0, 0, 2}, {0, 0, -1}, {5, 0, 1}};
  const auto r = check_visibility(Pose::identity(), cam, pts);
  CHECK(r.visible_fraction == 0.5);
  CHECK(r.lost);
  CHECK_FALSE(check_visibility(Pose::identity(), cam, {{0, 0, 1}}).lost);
}

TEST_CASE("speed mismatch examples", "[scene]") {
  const double deg15 = 15.0 * M_PI / 180.0;
  CHECK_FALSE(detect_speed_mismatch(Pose::identity(), Pose::identity(), 0.05, deg15));
  auto m = detect_speed_mismatch(Pose::translation({0.1, 0, 0}), Pose::identity(), 0.05, deg15);
  REQUIRE(m);
  CHECK(m->position_error == Catch::Approx(0.10));
  m = detect_speed_mismatch(Pose::from_axis_angle(Vec3::UnitX(), 20.0 * M_PI / 180.0), Pose::identity(), 0.05, deg15);
  REQUIRE(m);
  CHECK(m->orientation_error == Catch::Approx(20.0 * M_PI / 180.0));
  CHECK_THROWS_AS(detect_speed_mismatch(Pose::identity(), Pose::identity(), 0.0, deg15), ContractError);
}

TEST_CASE("display priority", "[scene]") {
  const FeedbackEvent collision{0.0, CollisionDetail{{"link7"}}};
  const FeedbackEvent speed{0.0, SpeedMismatch{0.1, 0.0}};
  const FeedbackEvent vis{0.0, VisibilityDetail{0.5}};
  auto d = compose_display({collision, speed}, true);
  CHECK(d.color == FrameColor::Blue);
  CHECK(d.haptic);
  CHECK(d.blinking);
  d = compose_display({speed}, false);
  CHECK(d.color == FrameColor::Yellow);
  CHECK_FALSE(d.haptic);
  CHECK(compose_display({}, true).color == FrameColor::Yellow);
  d = compose_display({vis}, false);
  CHECK(d.color == FrameColor::Red);
  CHECK_FALSE(d.blinking);
  CHECK(event_mask({collision, vis}) == 0b101);
}
