#include "pcr/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

namespace pcr {

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  out.timestamp = timestamp;
  return out;
}

Pose Pose::compose(const Pose& rhs) const {
  Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  out.timestamp = timestamp;
  return out;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool Pose::is_rigid(double tol) const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Plane Plane::from_coeffs(const Eigen::Vector4d& raw) {
  const double norm = raw.head<3>().norm();
  if (norm <= 0.0) throw DegenerateError("plane normal is zero");
  Eigen::Vector4d c = raw / norm;

  // Canonical sign: largest-magnitude normal component positive, first
  // such axis on ties.
  int axis = 0;
  double best = std::abs(c[0]);
  for (int i = 1; i < 3; ++i) {
    if (std::abs(c[i]) > best) {
      best = std::abs(c[i]);
      axis = i;
    }
  }
  if (c[axis] < 0.0) c = -c;

  Plane p;
  p.coeffs_ = c;
  return p;
}

Plane Plane::from_normal_point(const Eigen::Vector3d& normal, const Eigen::Vector3d& point) {
  Eigen::Vector4d raw;
  raw.head<3>() = normal;
  raw[3] = -normal.dot(point);
  return from_coeffs(raw);
}

double point_plane_distance(const Eigen::Vector3d& p, const Eigen::Vector4d& raw) {
  const double norm = raw.head<3>().norm();
  if (norm <= 0.0) throw DegenerateError("plane normal is zero");
  return std::abs(raw.head<3>().dot(p) + raw[3]) / norm;
}

double point_plane_distance(const Eigen::Vector3d& p, const Plane& plane) {
  return std::abs(plane.signed_distance(p));
}

Plane fit_plane_svd(std::span<const Eigen::Vector3d> points) {
  if (points.size() < 3) throw DegenerateError("plane fit needs at least 3 points");

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Eigen::MatrixXd centered(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    centered.row(i) = (points[i] - centroid).transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Collinear (or coincident) sets leave the second singular value at
  // zero; there is no unique plane.
  if (sv[1] <= 1e-12 * std::max(sv[0], 1e-300)) {
    throw DegenerateError("plane fit is rank-deficient (collinear points)");
  }

  const Eigen::Vector3d normal = svd.matrixV().col(2);
  return Plane::from_normal_point(normal, centroid);
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = fx;
  k(1, 1) = fy;
  k(0, 2) = cx;
  k(1, 2) = cy;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ParameterError("focal lengths must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ParameterError("principal point outside the image");
  }
}

Eigen::Vector2d project(const CameraIntrinsics& K, const Pose& world_to_camera,
                        const Eigen::Vector3d& x_world) {
  const Eigen::Vector3d x_cam = world_to_camera.apply(x_world);
  if (x_cam.z() <= 0.0) throw BehindCameraError("point at or behind the camera");
  return {K.fx * x_cam.x() / x_cam.z() + K.cx, K.fy * x_cam.y() / x_cam.z() + K.cy};
}

std::optional<Eigen::Vector3d> horizon_line(const CameraIntrinsics& K,
                                            const Eigen::Vector3d& plane_normal_cam) {
  const double norm = plane_normal_cam.norm();
  if (norm <= 0.0) throw DegenerateError("plane normal is zero");

  const Eigen::Vector3d line = K.matrix().transpose().inverse() * (plane_normal_cam / norm);
  const double dir = line.head<2>().norm();
  // A plane facing the camera maps to the line at infinity.
  if (dir <= 1e-12) return std::nullopt;
  return line / dir;
}

}  // namespace pcr
