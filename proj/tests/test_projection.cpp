#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "raddepth/projection.hpp"

using namespace rd;

namespace {
CameraModel make_cam(double f = 100, int w = 100, int h = 100) {
  CameraModel cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}
}  // namespace

TEST_CASE("point on the optical axis lands on the principal point") {
  CameraModel cam = make_cam();
  auto out = project_points({{0, 0, 10}}, cam);
  REQUIRE(out.size() == 1);
  CHECK(out[0].u == int(std::lround(cam.cx)));
  CHECK(out[0].v == int(std::lround(cam.cy)));
  CHECK(out[0].depth == doctest::Approx(10.0f));
}

TEST_CASE("points behind the camera are dropped") {
  CameraModel cam = make_cam();
  CHECK(project_points({{0, 0, -5}, {1, 1, 0}}, cam).empty());
}

TEST_CASE("pinhole formula: fx=fy=100, cx=cy=50, point (1,0,10) -> u=60") {
  CameraModel cam = make_cam();
  auto out = project_points({{1, 0, 10}}, cam);
  REQUIRE(out.size() == 1);
  CHECK(out[0].u == 60);
  CHECK(out[0].v == 50);
  CHECK(out[0].depth == doctest::Approx(10.0f));
}

TEST_CASE("projection is invariant under appending T then T^-1") {
  CameraModel cam = make_cam(120, 160, 120);
  // a non-trivial rigid transform: rotation about y plus translation
  const double a = 0.3;
  Transform t;
  t.m = {std::cos(a), 0, std::sin(a), 0.7,
         0,           1, 0,          -0.2,
         -std::sin(a), 0, std::cos(a), 1.3,
         0,           0, 0,           1};
  Transform round_trip = compose(t.inverse(), t);
  CHECK(round_trip.rotation_valid(1e-9));

  std::vector<Point3D> pts = {{0.4, -0.2, 8}, {-1.0, 0.5, 20}, {2.0, 0.1, 35}};
  CameraModel cam2 = cam;
  cam2.extrinsic = compose(cam.extrinsic, round_trip);
  auto a1 = project_points(pts, cam);
  auto a2 = project_points(pts, cam2);
  REQUIRE(a1.size() == a2.size());
  for (size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1[i].u == a2[i].u);
    CHECK(a1[i].v == a2[i].v);
    CHECK(a1[i].depth == doctest::Approx(a2[i].depth).epsilon(1e-5));
  }
}

TEST_CASE("render_sparse_map applies z-buffer min rule") {
  CHECK(valid_mask(render_sparse_map({}, 4, 4)).count == 0);

  SparseDepthMap m = render_sparse_map({{1, 2, 9.0f}, {1, 2, 4.0f}}, 4, 4);
  CHECK(m.at(2, 1) == 4.0f);
  CHECK(valid_mask(m).count == 1);

  m = render_sparse_map({{0, 0, 1}, {1, 1, 2}, {3, 2, 3}}, 4, 4);
  CHECK(valid_mask(m).count == 3);
}

TEST_CASE("accumulate_sweeps picks nearest n and applies per-sweep transforms") {
  SweepSet s;
  for (int i = 0; i < 4; ++i) {
    Sweep sw;
    sw.timestamp = i * 0.1;
    sw.points.assign(size_t(10) * (i + 1), Point3D{1, 2, 3});
    s.sweeps.push_back(sw);
  }
  SUBCASE("single sweep, n=1") {
    auto pts = accumulate_sweeps(s, 0.0, 1);
    CHECK(pts.size() == 10);
    CHECK(pts[0].x == doctest::Approx(1.0));
  }
  SUBCASE("n=3 concatenates point counts 10+20+30") {
    auto pts = accumulate_sweeps(s, 0.1, 3);
    CHECK(pts.size() == 60);
  }
  SUBCASE("translation-displaced sweep shifts points by exactly that translation") {
    s.sweeps[1].extrinsic_at_time = Transform::translation(0.5, -1.0, 2.0);
    auto pts = accumulate_sweeps(s, 0.1, 1);
    REQUIRE(pts.size() == 20);
    CHECK(pts[0].x == doctest::Approx(1.5));
    CHECK(pts[0].y == doctest::Approx(1.0));
    CHECK(pts[0].z == doctest::Approx(5.0));
  }
  SUBCASE("fewer sweeps than n uses all and warns") {
    bool warn = false;
    auto pts = accumulate_sweeps(s, 0.1, 9, &warn);
    CHECK(warn);
    CHECK(pts.size() == 100);
  }
}

TEST_CASE("downscale: factor 1 identity, 900x1600 image -> 450x800, sparse errors") {
  Image img(8, 8);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 8; ++r)
      for (int col = 0; col < 8; ++col) img.at(c, r, col) = 0.1f * r;
  Image same = downscale_image(img, 1);
  CHECK(same.pixels == img.pixels);
  Image half = downscale_image(img, 2);
  CHECK(half.height == 4);
  CHECK(half.width == 4);
  CHECK(half.at(0, 0, 0) == doctest::Approx(0.05f));

  Image big(900, 1600);
  Image ds = downscale_image(big, 2);
  CHECK(ds.height == 450);
  CHECK(ds.width == 800);

  SparseDepthMap sparse(4, 4);
  CHECK_THROWS_WITH_AS(downscale_map(sparse, 2),
                       doctest::Contains("render at target resolution"),
                       std::invalid_argument);
}

TEST_CASE("render count is bounded by projected point count") {
  std::vector<ProjectedPoint> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({i % 7, i % 5, float(1 + i)});
  SparseDepthMap m = render_sparse_map(pts, 8, 8);
  CHECK(valid_mask(m).count <= 50);
}
