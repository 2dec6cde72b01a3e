#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "pcr/geometry.hpp"
#include "pcr/rng.hpp"

using pcr::CameraIntrinsics;
using pcr::Plane;
using pcr::Pose;
using pcr::Rng;

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

Eigen::Vector3d random_vec(Rng& rng, double scale) {
  return {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
}

}  // namespace

TEST_CASE("pose compose/inverse round trip") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Pose p{random_rotation(rng), random_vec(rng, 5.0), {}};
    REQUIRE(p.is_rigid(1e-9));
    const Pose id = p.compose(p.inverse());
    CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(id.translation.norm() < 1e-9);
  }
}

TEST_CASE("point/plane distance") {
  SUBCASE("axis-aligned plane") {
    CHECK(pcr::point_plane_distance({0, 0, 2}, Eigen::Vector4d(0, 0, 1, 0)) == doctest::Approx(2.0));
  }
  SUBCASE("point on plane") {
    const double s = 1.0 / std::sqrt(3.0);
    CHECK(pcr::point_plane_distance({1, 1, 1}, Eigen::Vector4d(s, s, s, -3 * s)) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("unnormalized coefficients") {
    CHECK(pcr::point_plane_distance({3, 4, 5}, Eigen::Vector4d(2, 0, 0, 0)) == doctest::Approx(3.0));
  }
  SUBCASE("zero normal") {
    CHECK_THROWS_AS(pcr::point_plane_distance({1, 2, 3}, Eigen::Vector4d(0, 0, 0, 1)),
                    pcr::DegenerateError);
  }
  SUBCASE("invariant to positive scaling of raw coefficients") {
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
      Eigen::Vector4d raw(rng.normal(), rng.normal(), rng.normal(), rng.normal());
      if (raw.head<3>().norm() < 1e-6) continue;
      const Eigen::Vector3d p = random_vec(rng, 10.0);
      const double k = rng.uniform(0.1, 50.0);
      CHECK(pcr::point_plane_distance(p, raw) ==
            doctest::Approx(pcr::point_plane_distance(p, Eigen::Vector4d(k * raw))).epsilon(1e-9));
    }
  }
}

TEST_CASE("plane canonical sign") {
  const Plane p = Plane::from_coeffs({0, 0, -2, 4});
  CHECK(p.normal().z() == doctest::Approx(1.0));
  CHECK(p.d() == doctest::Approx(-2.0));
  // Tie between axes resolves to the first one.
  const Plane q = Plane::from_coeffs({-1, -1, 0, 0});
  CHECK(q.normal().x() > 0.0);
}

TEST_CASE("plane fit: exact three points") {
  const std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const Plane p = pcr::fit_plane_svd(pts);
  CHECK((p.coeffs() - Eigen::Vector4d(0, 0, 1, 0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("plane fit: noisy samples against covariance oracle") {
  Rng rng(42);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 200; ++i) {
    pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), 2.0 + rng.normal(0.0, 0.01)});
  }
  const Plane fitted = pcr::fit_plane_svd(pts);

  // Independent oracle: smallest eigenvector of the 3x3 covariance.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d oracle_normal = eig.eigenvectors().col(0);
  if (oracle_normal.z() < 0) oracle_normal = -oracle_normal;

  const double angle = std::acos(std::clamp(fitted.normal().dot(oracle_normal), -1.0, 1.0));
  CHECK(angle < 1e-9);  // same normal, independent decomposition route

  const double angle_to_z = std::acos(std::clamp(fitted.normal().dot(Eigen::Vector3d(0, 0, 1)), -1.0, 1.0));
  CHECK(angle_to_z < 1e-2);
  CHECK(std::abs(fitted.d() - (-2.0)) <= 0.01);
}

TEST_CASE("plane fit: degenerate input") {
  const std::vector<Eigen::Vector3d> collinear = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  CHECK_THROWS_AS(pcr::fit_plane_svd(collinear), pcr::DegenerateError);
  const std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(pcr::fit_plane_svd(two), pcr::DegenerateError);
}

TEST_CASE("plane fit equivariance under rigid motion") {
  Rng rng(3);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 40; ++i) {
    pts.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), 0.5 * rng.uniform(-2, 2) + 1.0});
  }
  // Make it a proper plane z = 0.5*y-ish? Use an exact plane with spread.
  for (auto& p : pts) p.z() = 0.3 * p.x() - 0.2 * p.y() + 1.0;

  const Plane base = pcr::fit_plane_svd(pts);

  const Eigen::Matrix3d r = random_rotation(rng);
  const Eigen::Vector3d t = random_vec(rng, 3.0);
  std::vector<Eigen::Vector3d> moved;
  for (const auto& p : pts) moved.push_back(r * p + t);
  const Plane rotated = pcr::fit_plane_svd(moved);

  // Moving the fitted plane by the same rigid transform must agree with
  // fitting the moved points (canonical form makes them comparable).
  Eigen::Vector4d moved_coeffs;
  moved_coeffs.head<3>() = r * base.normal();
  moved_coeffs[3] = base.d() - moved_coeffs.head<3>().dot(t);
  const Plane expected = Plane::from_coeffs(moved_coeffs);
  CHECK((rotated.coeffs() - expected.coeffs()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("projection") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  SUBCASE("optical axis") {
    const Eigen::Vector2d px = pcr::project(k, Pose::identity(), {0, 0, 1});
    CHECK(px.x() == doctest::Approx(320.0));
    CHECK(px.y() == doctest::Approx(240.0));
  }
  SUBCASE("off-axis point") {
    const Eigen::Vector2d px = pcr::project(k, Pose::identity(), {1, 0, 2});
    CHECK(px.x() == doctest::Approx(570.0));
    CHECK(px.y() == doctest::Approx(240.0));
  }
  SUBCASE("behind camera") {
    CHECK_THROWS_AS(pcr::project(k, Pose::identity(), {0, 0, -1}), pcr::BehindCameraError);
  }
}

TEST_CASE("project/back-project round trip") {
  const CameraIntrinsics k{500, 480, 320, 240, 640, 480};
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    Pose pose{random_rotation(rng), random_vec(rng, 2.0), {}};
    const Eigen::Vector3d x_cam{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 10.0)};
    const Eigen::Vector3d x_world = pose.inverse().apply(x_cam);
    const Eigen::Vector2d px = pcr::project(k, pose, x_world);
    // Back-project at the known depth.
    const Eigen::Vector3d ray{(px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0};
    const Eigen::Vector3d recovered = pose.inverse().apply(ray * x_cam.z());
    CHECK((recovered - x_world).norm() < 1e-9);
  }
}

TEST_CASE("camera intrinsics validation") {
  CameraIntrinsics bad{-1, 500, 320, 240, 640, 480};
  CHECK_THROWS_AS(bad.validate(), pcr::ParameterError);
  CameraIntrinsics off{500, 500, 700, 240, 640, 480};
  CHECK_THROWS_AS(off.validate(), pcr::ParameterError);
}

TEST_CASE("horizon line: level camera") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const auto line = pcr::horizon_line(k, {0, -1, 0});
  REQUIRE(line.has_value());
  // v = 240, up to overall sign.
  const Eigen::Vector3d l = *line;
  CHECK(std::abs(l[0]) < 1e-12);
  CHECK(std::abs(l[1]) == doctest::Approx(1.0));
  CHECK(l[2] / -l[1] == doctest::Approx(240.0));
}

TEST_CASE("horizon line: frontal plane has no horizon") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  CHECK_FALSE(pcr::horizon_line(k, {0, 0, 1}).has_value());
  CHECK_THROWS_AS(pcr::horizon_line(k, {0, 0, 0}), pcr::DegenerateError);
}

TEST_CASE("horizon line: pitched camera against two-point oracle") {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const double theta = 0.03;
  const Eigen::Vector3d n{0.0, -std::cos(theta), std::sin(theta)};
  const auto line = pcr::horizon_line(k, n);
  REQUIRE(line.has_value());

  // v-intercept at the image center column.
  const double v_at_center = -((*line)[0] * 320.0 + (*line)[2]) / (*line)[1];
  CHECK(v_at_center == doctest::Approx(240.0 + 500.0 * std::tan(theta)).epsilon(1e-9));

  // Oracle: distant points on the plane through the camera center project
  // onto the vanishing line. Walk the plane along the camera's forward
  // direction so the pixels stay near the principal point.
  const Eigen::Vector3d forward = (Eigen::Vector3d(0, 0, 1) - n * n.z()).normalized();
  const Eigen::Vector3d lateral_dir = n.cross(forward);
  for (const double depth : {1e3, 1e6}) {
    for (const double lateral : {-0.2 * depth, 0.15 * depth}) {
      const Eigen::Vector3d p = forward * depth + lateral_dir * lateral;
      const Eigen::Vector2d px = pcr::project(k, Pose::identity(), p);
      const double dist = std::abs((*line)[0] * px.x() + (*line)[1] * px.y() + (*line)[2]);
      CHECK(dist < 1e-3);
    }
  }
}
