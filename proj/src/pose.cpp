#include "pcr/pose.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace pcr::pose {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

HuberResult huber(double r, double delta) {
  if (!(delta > 0.0)) throw ParameterError("huber delta must be positive");
  if (r < 0.0) throw ParameterError("residual magnitude must be >= 0");
  if (r <= delta) return {0.5 * r * r, 1.0};
  return {delta * (r - 0.5 * delta), delta / r};
}

Pose apply_left_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d omega = xi.tail<3>();
  const double theta = omega.norm();
  const Eigen::Matrix3d w = skew(omega);

  Eigen::Matrix3d rot;
  Eigen::Matrix3d v_mat;
  if (theta < 1e-10) {
    rot = Eigen::Matrix3d::Identity() + w + 0.5 * w * w;
    v_mat = Eigen::Matrix3d::Identity() + 0.5 * w + w * w / 6.0;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    const double c = (theta - std::sin(theta)) / (theta * theta * theta);
    rot = Eigen::Matrix3d::Identity() + a * w + b * w * w;
    v_mat = Eigen::Matrix3d::Identity() + b * w + c * w * w;
  }

  Pose out;
  out.rotation = rot * pose.rotation;
  out.translation = rot * pose.translation + v_mat * v;
  out.timestamp = pose.timestamp;
  return out;
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraIntrinsics& K, const Pose& pose,
                                                  const Eigen::Vector3d& x_world) {
  const Eigen::Vector3d xc = pose.apply(x_world);
  const double z = xc.z();
  if (z <= 0.0) throw BehindCameraError("jacobian of a point behind the camera");
  const double inv_z = 1.0 / z;

  Eigen::Matrix<double, 2, 3> d_pix;
  d_pix << K.fx * inv_z, 0.0, -K.fx * xc.x() * inv_z * inv_z, 0.0, K.fy * inv_z,
      -K.fy * xc.y() * inv_z * inv_z;

  // Left increment moves the camera-frame point by v + omega x xc.
  Eigen::Matrix<double, 3, 6> d_cam;
  d_cam.leftCols<3>() = Eigen::Matrix3d::Identity();
  d_cam.rightCols<3>() = -skew(xc);
  return d_pix * d_cam;
}

RefineResult refine_pose(const Pose& init, std::span<const Correspondence> correspondences,
                         const CameraIntrinsics& K, const RobustKernel& kernel, int max_iters) {
  // Canonical processing order keeps the accumulation, and therefore the
  // result, independent of how the caller ordered the list.
  std::vector<const Correspondence*> active;
  active.reserve(correspondences.size());
  for (const auto& c : correspondences) {
    if (c.filtered) continue;
    if (!(c.info_weight > 0.0)) throw ParameterError("info_weight must be positive");
    active.push_back(&c);
  }
  std::sort(active.begin(), active.end(), [](const Correspondence* a, const Correspondence* b) {
    for (int i = 0; i < 3; ++i) {
      if (a->map_point[i] != b->map_point[i]) return a->map_point[i] < b->map_point[i];
    }
    for (int i = 0; i < 2; ++i) {
      if (a->observation[i] != b->observation[i]) return a->observation[i] < b->observation[i];
    }
    return a->info_weight < b->info_weight;
  });

  if (active.size() < 3) throw UnderdeterminedError("need at least 3 unfiltered correspondences");
  {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto* c : active) mean += c->observation;
    mean /= static_cast<double>(active.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto* c : active) {
      const Eigen::Vector2d d = c->observation - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    if (eig.eigenvalues()[0] <= 1e-9 * std::max(eig.eigenvalues()[1], 1e-300)) {
      throw UnderdeterminedError("observations are collinear in the image");
    }
  }

  const auto cost_at = [&](const Pose& p, bool* valid) -> double {
    double total = 0.0;
    for (const auto* c : active) {
      const Eigen::Vector3d xc = p.apply(c->map_point);
      if (xc.z() <= 0.0) {
        *valid = false;
        return 0.0;
      }
      const Eigen::Vector2d pix{K.fx * xc.x() / xc.z() + K.cx, K.fy * xc.y() / xc.z() + K.cy};
      const double r = std::sqrt(c->info_weight) * (c->observation - pix).norm();
      total += huber(r, kernel.delta).rho;
    }
    *valid = true;
    return total;
  };

  RefineResult result;
  result.pose = init;
  bool valid = false;
  result.cost = cost_at(init, &valid);
  if (!valid) throw UnderdeterminedError("initial pose puts correspondences behind the camera");

  double lambda = 1e-4;
  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;

    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto* c : active) {
      const Eigen::Vector3d xc = result.pose.apply(c->map_point);
      if (xc.z() <= 0.0) continue;
      const Eigen::Vector2d pix{K.fx * xc.x() / xc.z() + K.cx, K.fy * xc.y() / xc.z() + K.cy};
      const Eigen::Vector2d err = c->observation - pix;
      const double magnitude = std::sqrt(c->info_weight) * err.norm();
      const double w = huber(magnitude, kernel.delta).weight * c->info_weight;
      const Eigen::Matrix<double, 2, 6> j = reprojection_jacobian(K, result.pose, c->map_point);
      h += w * j.transpose() * j;
      g += w * j.transpose() * err;
    }

    // Levenberg damping: retry with a stiffer system until the step
    // reduces the cost.
    bool accepted = false;
    while (lambda <= 1e8) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Pose candidate = apply_left_increment(result.pose, step);
      bool cand_valid = false;
      const double cand_cost = cost_at(candidate, &cand_valid);
      if (cand_valid && cand_cost <= result.cost) {
        const double decrease = result.cost - cand_cost;
        result.pose = candidate;
        result.cost = cand_cost;
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
        if (step.norm() < 1e-8 || decrease < 1e-10) {
          result.status = RefineStatus::Converged;
          return result;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      result.status = RefineStatus::NoConvergence;
      return result;
    }
  }
  result.status = RefineStatus::MaxIterations;
  return result;
}

bool keyframe_decision(int n_matches, int n_filtered, double dt, double q_motion,
                       const KeyframePolicy& policy) {
  if (n_matches < 0 || n_filtered < 0) throw ParameterError("counts must be >= 0");
  if (dt < 0.0) throw ParameterError("dt must be >= 0");
  if (n_matches + n_filtered == 0) return false;
  if (n_matches < policy.n_min) return false;
  const double ratio =
      static_cast<double>(n_filtered) / static_cast<double>(n_matches + n_filtered);
  if (ratio > policy.rho_max) return false;
  return dt >= policy.dt_min || q_motion >= policy.q_min;
}

}  // namespace pcr::pose
