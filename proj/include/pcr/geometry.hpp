#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <span>

#include "pcr/error.hpp"

namespace pcr {

/// Rigid transform: apply(p) = R * p + t. Camera poses in trajectory files
/// are camera-to-world; projection takes the world-to-camera direction.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::optional<double> timestamp;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  Pose inverse() const;

  /// this ∘ rhs: compose(a, b).apply(x) == a.apply(b.apply(x)).
  Pose compose(const Pose& rhs) const;

  Eigen::Matrix4d matrix() const;

  /// RᵀR = I and det(R) = +1 within tol.
  bool is_rigid(double tol = 1e-9) const;

  static Pose identity() { return {}; }
};

/// Plane a·x + b·y + c·z + d = 0 with unit normal (a,b,c). Canonical sign:
/// the largest-magnitude normal component is positive, ties resolved to the
/// first such axis.
class Plane {
 public:
  /// Normalizes raw coefficients [a,b,c,d] and applies the canonical sign.
  /// Throws DegenerateError on a zero normal.
  static Plane from_coeffs(const Eigen::Vector4d& raw);
  static Plane from_normal_point(const Eigen::Vector3d& normal, const Eigen::Vector3d& point);

  Eigen::Vector3d normal() const { return coeffs_.head<3>(); }
  double d() const { return coeffs_[3]; }
  const Eigen::Vector4d& coeffs() const { return coeffs_; }

  /// n·p + d; positive on the normal side.
  double signed_distance(const Eigen::Vector3d& p) const {
    return normal().dot(p) + coeffs_[3];
  }

 private:
  Plane() = default;
  Eigen::Vector4d coeffs_ = Eigen::Vector4d::Zero();
};

/// |a·x + b·y + c·z + d| / sqrt(a² + b² + c²) for raw, possibly
/// unnormalized, coefficients. Throws DegenerateError on a zero normal.
double point_plane_distance(const Eigen::Vector3d& p, const Eigen::Vector4d& raw_coeffs);
double point_plane_distance(const Eigen::Vector3d& p, const Plane& plane);

/// Total-least-squares plane through >= 3 non-collinear points: the normal
/// is the singular vector of the smallest singular value of the centered
/// point matrix. Throws DegenerateError when underdetermined.
Plane fit_plane_svd(std::span<const Eigen::Vector3d> points);

/// Pinhole model. Pixel origin top-left, +v downward.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Matrix3d matrix() const;

  /// Throws ParameterError when focal lengths or the principal point are
  /// out of range.
  void validate() const;
};

/// Projects a world point through a world-to-camera pose. Throws
/// BehindCameraError when the camera-frame depth is <= 0.
Eigen::Vector2d project(const CameraIntrinsics& K, const Pose& world_to_camera,
                        const Eigen::Vector3d& x_world);

/// Image of the ground plane's line at infinity: l = K⁻ᵀ·n scaled so
/// sqrt(la² + lb²) = 1. Pixels with l·(u,v,1) < 0 lie on the sky side
/// (rays opposing the normal). Returns nullopt when the plane faces the
/// camera and no finite horizon exists; throws DegenerateError on a zero
/// normal.
std::optional<Eigen::Vector3d> horizon_line(const CameraIntrinsics& K,
                                            const Eigen::Vector3d& plane_normal_cam);

/// Similarity transform: apply(p) = scale * R * p + t.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
};

}  // namespace pcr
