#pragma once

#include <Eigen/Core>

#include <span>

#include "pcr/geometry.hpp"

namespace pcr::pose {

/// One 3D-2D match for pose refinement. Filtered correspondences carry no
/// weight in the optimization at all.
struct Correspondence {
  Eigen::Vector3d map_point = Eigen::Vector3d::Zero();  // world, m
  Eigen::Vector2d observation = Eigen::Vector2d::Zero();  // px
  double info_weight = 1.0;  // > 0
  bool filtered = false;
};

struct RobustKernel {
  double delta = 2.0;  // px
};

struct HuberResult {
  double rho = 0.0;
  double weight = 1.0;
};

/// rho = r²/2 for r <= delta, delta·(r - delta/2) beyond; the IRLS weight
/// is 1 inside the knee and delta/r outside.
HuberResult huber(double r, double delta);

enum class RefineStatus { Converged, MaxIterations, NoConvergence };

struct RefineResult {
  Pose pose;
  double cost = 0.0;
  int iterations = 0;
  RefineStatus status = RefineStatus::Converged;
};

/// SE(3) exponential applied on the left: exp(xi^) * T, with
/// xi = [translation, rotation].
Pose apply_left_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& xi);

/// Jacobian of the projected pixel w.r.t. a left increment at xi = 0.
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraIntrinsics& K, const Pose& pose,
                                                  const Eigen::Vector3d& x_world);

/// Iteratively reweighted Gauss-Newton with Levenberg damping over the
/// unfiltered correspondences; the residual is the info_weight-scaled
/// pixel reprojection error under the robust kernel. Contributions are
/// accumulated in a canonical order so the result is invariant to the
/// input permutation. Throws UnderdeterminedError when fewer than 3
/// usable correspondences remain or their observations are collinear.
RefineResult refine_pose(const Pose& init, std::span<const Correspondence> correspondences,
                         const CameraIntrinsics& K, const RobustKernel& kernel,
                         int max_iters = 50);

struct KeyframePolicy {
  int n_min = 50;
  double rho_max = 0.6;
  double dt_min = 0.25;  // s
  double q_min = 20.0;   // px
};

/// Insert when matches suffice, the filtered ratio stays acceptable, and
/// either enough time passed or the view moved enough. Zero counts on
/// both sides never insert.
bool keyframe_decision(int n_matches, int n_filtered, double dt, double q_motion,
                       const KeyframePolicy& policy = {});

}  // namespace pcr::pose
