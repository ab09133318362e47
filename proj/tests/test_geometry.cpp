#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "priorpose/geometry.hpp"

using namespace priorpose;

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat3 rot_z(double deg) {
  const double a = deg * kPi / 180.0;
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

Mat3 rot_y(double deg) {
  const double a = deg * kPi / 180.0;
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

PointCloud random_cloud(int n, std::mt19937_64& rng, double lo = -0.5,
                        double hi = 0.5) {
  std::uniform_real_distribution<double> uni(lo, hi);
  PointCloud cloud;
  cloud.points.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) cloud.points(i, c) = uni(rng);
  return cloud;
}

}  // namespace

TEST_CASE("ngph encoding matches the closed form") {
  SUBCASE("unit intrinsics") {
    const Ngph g = ngph_encode({-1, -1, 1, 1}, {1, 1, 0, 0});
    const double expected[6] = {0.5, 0.5, -1, -1, 1, 1};
    for (int i = 0; i < 6; ++i) CHECK(g.g[i] == doctest::Approx(expected[i]));
  }
  SUBCASE("vga intrinsics") {
    // Frozen from an independent evaluation of the definition.
    const Ngph g = ngph_encode({192, 120, 448, 360}, {577.5, 577.5, 319.5, 239.5});
    const double expected[6] = {2.255859375, 2.40625,     -0.220779221,
                                -0.206926407, 0.222510823, 0.208658009};
    for (int i = 0; i < 6; ++i)
      CHECK(g.g[i] == doctest::Approx(expected[i]).epsilon(1e-6));
  }
  SUBCASE("degenerate box") {
    CHECK_THROWS_AS(ngph_encode({5, 5, 5, 10}, {1, 1, 0, 0}), InvalidInput);
    CHECK_THROWS_AS(ngph_encode({5, 10, 9, 10}, {1, 1, 0, 0}), InvalidInput);
  }
  SUBCASE("invariant to uniform rescaling of pixel quantities") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.1, 10.0);
    const BBox2D bbox{100, 80, 400, 300};
    const CameraIntrinsics intr{500, 490, 320, 240};
    const Ngph base = ngph_encode(bbox, intr);
    for (int trial = 0; trial < 50; ++trial) {
      const double k = uni(rng);
      const Ngph scaled = ngph_encode(
          {k * bbox.l, k * bbox.t, k * bbox.r, k * bbox.b},
          {k * intr.fx, k * intr.fy, k * intr.cx, k * intr.cy});
      CHECK((scaled.g - base.g).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("back projection") {
  const CameraIntrinsics intr{500, 500, 320, 240};
  SUBCASE("principal point ray") {
    DepthPatch patch;
    patch.pixels.resize(1, 2);
    patch.pixels << intr.cx, intr.cy;
    patch.depths.resize(1);
    patch.depths << 2.0;
    const PointCloud cloud = back_project(patch, intr);
    CHECK(cloud.points(0, 0) == doctest::Approx(0.0));
    CHECK(cloud.points(0, 1) == doctest::Approx(0.0));
    CHECK(cloud.points(0, 2) == doctest::Approx(2.0));
  }
  SUBCASE("45 degree ray") {
    DepthPatch patch;
    patch.pixels.resize(1, 2);
    patch.pixels << 500.0, 0.0;
    patch.depths.resize(1);
    patch.depths << 1.0;
    const PointCloud cloud = back_project(patch, {500, 500, 0, 0});
    CHECK(cloud.points(0, 0) == doctest::Approx(1.0));
    CHECK(cloud.points(0, 1) == doctest::Approx(0.0));
    CHECK(cloud.points(0, 2) == doctest::Approx(1.0));
  }
  SUBCASE("rejects non-positive depth") {
    DepthPatch patch;
    patch.pixels.resize(1, 2);
    patch.pixels << 0.0, 0.0;
    patch.depths.resize(1);
    patch.depths << 0.0;
    CHECK_THROWS_AS(back_project(patch, intr), InvalidInput);
  }
}

TEST_CASE("projection") {
  const CameraIntrinsics intr{500, 500, 320, 240};
  SUBCASE("axis point") {
    PointCloud cloud;
    cloud.points.resize(1, 3);
    cloud.points << 0, 0, 2;
    const DepthPatch patch = project(cloud, intr);
    CHECK(patch.pixels(0, 0) == doctest::Approx(intr.cx));
    CHECK(patch.pixels(0, 1) == doctest::Approx(intr.cy));
    CHECK(patch.depths[0] == doctest::Approx(2.0));
  }
  SUBCASE("unit offset") {
    PointCloud cloud;
    cloud.points.resize(1, 3);
    cloud.points << 1, 0, 1;
    const DepthPatch patch = project(cloud, {500, 500, 0, 0});
    CHECK(patch.pixels(0, 0) == doctest::Approx(500.0));
  }
  SUBCASE("rejects z <= 0") {
    PointCloud cloud;
    cloud.points.resize(1, 3);
    cloud.points << 0, 0, -1;
    CHECK_THROWS_AS(project(cloud, intr), InvalidInput);
  }
  SUBCASE("round trip is the identity") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      PointCloud cloud = random_cloud(64, rng);
      cloud.points.col(2).array() += 2.0;  // keep z > 0
      const PointCloud back = back_project(project(cloud, intr), intr);
      CHECK((back.points - cloud.points).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("umeyama alignment") {
  std::mt19937_64 rng(3);
  SUBCASE("identity") {
    const PointCloud cloud = random_cloud(32, rng);
    const Pose pose = umeyama_align(cloud, cloud);
    CHECK((pose.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pose.translation.norm() < 1e-12);
    CHECK(pose.scale == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("construct then recover") {
    const PointCloud src = random_cloud(100, rng);
    const double s = 2.0;
    const Mat3 r = rot_z(30.0);
    const Vec3 t(0.1, -0.2, 0.3);
    PointCloud dst;
    dst.points = (s * (r * src.points.transpose())).transpose();
    dst.points.rowwise() += t.transpose();
    const Pose pose = umeyama_align(src, dst);
    CHECK((pose.rotation - r).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((pose.translation - t).norm() < 1e-9);
    CHECK(pose.scale == doctest::Approx(s).epsilon(1e-9));
  }
  SUBCASE("collinear points are degenerate") {
    PointCloud src;
    src.points.resize(3, 3);
    src.points << 0, 0, 0, 1, 1, 1, 2, 2, 2;
    CHECK_THROWS_AS(umeyama_align(src, src), DegenerateConfig);
  }
  SUBCASE("size mismatch") {
    const PointCloud a = random_cloud(5, rng);
    const PointCloud b = random_cloud(6, rng);
    CHECK_THROWS_AS(umeyama_align(a, b), InvalidInput);
  }
  SUBCASE("recovers random similarity transforms") {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.5, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      const PointCloud src = random_cloud(64, rng);
      Eigen::Vector4d q;
      for (int i = 0; i < 4; ++i) q[i] = gauss(rng);
      q.normalize();
      Mat3 r;
      const double w = q[0], x = q[1], y = q[2], z = q[3];
      r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
      const double s = uni(rng);
      const Vec3 t(gauss(rng), gauss(rng), gauss(rng));
      PointCloud dst;
      dst.points = (s * (r * src.points.transpose())).transpose();
      dst.points.rowwise() += t.transpose();
      const Pose pose = umeyama_align(src, dst);
      CHECK((pose.rotation - r).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((pose.translation - t).norm() < 1e-9);
      CHECK(std::abs(pose.scale - s) < 1e-9);
    }
  }
  SUBCASE("invariant to a shared permutation") {
    const PointCloud src = random_cloud(50, rng);
    PointCloud dst;
    dst.points = (1.3 * (rot_z(40.0) * src.points.transpose())).transpose();
    dst.points.rowwise() += Vec3(0.2, 0.1, -0.4).transpose();
    const Pose base = umeyama_align(src, dst);

    std::vector<int> perm(50);
    for (int i = 0; i < 50; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    PointCloud src_p, dst_p;
    src_p.points.resize(50, 3);
    dst_p.points.resize(50, 3);
    for (int i = 0; i < 50; ++i) {
      src_p.points.row(i) = src.points.row(perm[i]);
      dst_p.points.row(i) = dst.points.row(perm[i]);
    }
    const Pose permuted = umeyama_align(src_p, dst_p);
    CHECK((permuted.rotation - base.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((permuted.translation - base.translation).norm() < 1e-9);
    CHECK(permuted.scale == doctest::Approx(base.scale).epsilon(1e-9));
  }
}

TEST_CASE("rotation error") {
  Pose identity;
  SUBCASE("zero for equal poses") {
    CHECK(rotation_error_deg(identity, identity, false) ==
          doctest::Approx(0.0));
    CHECK(rotation_error_deg(identity, identity, true) == doctest::Approx(0.0));
  }
  SUBCASE("axis-angle construction") {
    Pose pred;
    pred.rotation = rot_z(10.0);
    CHECK(rotation_error_deg(pred, identity, false) ==
          doctest::Approx(10.0).epsilon(1e-9));
  }
  SUBCASE("rotation about the symmetry axis is ignored") {
    Pose pred;
    pred.rotation = rot_y(90.0);
    CHECK(rotation_error_deg(pred, identity, true) == doctest::Approx(0.0));
    CHECK(rotation_error_deg(pred, identity, false) ==
          doctest::Approx(90.0).epsilon(1e-9));
  }
  SUBCASE("symmetric in its arguments") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      Pose a, b;
      a.rotation = rot_z(gauss(rng) * 50.0) * rot_y(gauss(rng) * 50.0);
      b.rotation = rot_y(gauss(rng) * 50.0) * rot_z(gauss(rng) * 50.0);
      CHECK(rotation_error_deg(a, b, false) ==
            doctest::Approx(rotation_error_deg(b, a, false)).epsilon(1e-10));
    }
  }
}

TEST_CASE("translation error") {
  Pose a, b;
  CHECK(translation_error_m(a, b) == doctest::Approx(0.0));
  b.translation = Vec3(0.03, 0.04, 0.0);
  CHECK(translation_error_m(a, b) == doctest::Approx(0.05));

  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Pose p, q;
    for (int c = 0; c < 3; ++c) {
      p.translation[c] = gauss(rng);
      q.translation[c] = gauss(rng);
    }
    double sum = 0.0;  // independent elementwise evaluation
    for (int c = 0; c < 3; ++c) {
      const double d = p.translation[c] - q.translation[c];
      sum += d * d;
    }
    CHECK(translation_error_m(p, q) == doctest::Approx(std::sqrt(sum)));
  }
}
