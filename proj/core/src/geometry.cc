#include "semloc/geometry.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "semloc/errors.h"

namespace semloc {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConsistencyError("camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ConsistencyError("camera image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ConsistencyError("principal point outside the image");
  }
}

Eigen::Vector3d CameraIntrinsics::bearing(const Eigen::Vector2d& px) const {
  return Eigen::Vector3d((px.x() - cx) / fx, (px.y() - cy) / fy, 1.0).normalized();
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  Pose pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.translation = t;
  return pose;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    return false;
  }
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

std::optional<Eigen::Vector2d> project(const Pose& pose, const CameraIntrinsics& camera,
                                       const Eigen::Vector3d& point) {
  const Eigen::Vector3d cam = pose.transform(point);
  if (!(cam.z() > 1e-9)) {
    return std::nullopt;
  }
  return Eigen::Vector2d(camera.fx * cam.x() / cam.z() + camera.cx,
                         camera.fy * cam.y() / cam.z() + camera.cy);
}

Eigen::Vector3d unproject(const Pose& pose, const CameraIntrinsics& camera,
                          const Eigen::Vector2d& px, double depth) {
  const Eigen::Vector3d cam((px.x() - camera.cx) / camera.fx * depth,
                            (px.y() - camera.cy) / camera.fy * depth, depth);
  return pose.rotation.transpose() * (cam - pose.translation);
}

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

namespace {

// Stacked residuals (2 per correspondence); false if any point is behind.
bool residuals(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
               const Pose& pose, Eigen::VectorXd* out) {
  out->resize(2 * static_cast<Eigen::Index>(corrs.size()));
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d cam = pose.transform(corrs[i].point);
    if (!(cam.z() > 1e-9)) {
      return false;
    }
    (*out)(2 * i) = camera.fx * cam.x() / cam.z() + camera.cx - corrs[i].pixel.x();
    (*out)(2 * i + 1) = camera.fy * cam.y() / cam.z() + camera.cy - corrs[i].pixel.y();
  }
  return out->allFinite();
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Jacobian of the residuals w.r.t. the local update (w, dt).
Eigen::MatrixXd jacobian(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                         const Pose& pose) {
  Eigen::MatrixXd jac(2 * static_cast<Eigen::Index>(corrs.size()), 6);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d rotated = pose.rotation * corrs[i].point;
    const Eigen::Vector3d cam = rotated + pose.translation;
    const double inv_z = 1.0 / cam.z();
    Eigen::Matrix<double, 2, 3> d_proj;
    d_proj << camera.fx * inv_z, 0.0, -camera.fx * cam.x() * inv_z * inv_z,  //
        0.0, camera.fy * inv_z, -camera.fy * cam.y() * inv_z * inv_z;
    Eigen::Matrix<double, 3, 6> d_cam;
    d_cam.leftCols<3>() = -skew(rotated);
    d_cam.rightCols<3>().setIdentity();
    jac.middleRows<2>(2 * static_cast<Eigen::Index>(i)) = d_proj * d_cam;
  }
  return jac;
}

double rms_of(double cost, std::size_t n) { return std::sqrt(cost / static_cast<double>(n)); }

}  // namespace

Pose apply_local_update(const Pose& pose, const Vector6d& delta) {
  const Eigen::Vector3d w = delta.head<3>();
  const double angle = w.norm();
  Eigen::Matrix3d exp_w = Eigen::Matrix3d::Identity();
  if (angle > 0.0) {
    exp_w = Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
  }
  Pose out;
  out.rotation = exp_w * pose.rotation;
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

double reprojection_cost(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                         const Pose& pose) {
  Eigen::VectorXd r;
  if (!residuals(corrs, camera, pose, &r)) {
    return std::numeric_limits<double>::infinity();
  }
  return r.squaredNorm();
}

Vector6d reprojection_cost_gradient(std::span<const Correspondence> corrs,
                                    const CameraIntrinsics& camera, const Pose& pose) {
  Eigen::VectorXd r;
  if (!residuals(corrs, camera, pose, &r)) {
    throw NumericalFailure("reprojection residuals are not finite");
  }
  return 2.0 * jacobian(corrs, camera, pose).transpose() * r;
}

Pose refine_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                const Pose& init, const RefineOptions& options, RefineSummary* summary) {
  if (corrs.size() < 4) {
    throw std::invalid_argument("refine_pnp needs at least 4 correspondences");
  }
  Eigen::VectorXd r;
  if (!residuals(corrs, camera, init, &r)) {
    throw NumericalFailure("reprojection residuals are not finite at the initial pose");
  }

  Pose current = init;
  double cost = r.squaredNorm();
  double damping = options.initial_damping;

  RefineSummary local;
  local.initial_rms = rms_of(cost, corrs.size());
  local.rms_history.push_back(local.initial_rms);

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::MatrixXd jac = jacobian(corrs, camera, current);
    const Vector6d gradient = jac.transpose() * r;
    const Eigen::Matrix<double, 6, 6> hessian = jac.transpose() * jac;

    Eigen::Matrix<double, 6, 6> damped = hessian;
    damped.diagonal() += damping * hessian.diagonal();
    const Vector6d step = damped.ldlt().solve(-gradient);
    if (!step.allFinite() || step.norm() < options.step_tolerance) {
      break;
    }

    const Pose candidate = apply_local_update(current, step);
    Eigen::VectorXd candidate_r;
    const bool ok = residuals(corrs, camera, candidate, &candidate_r);
    if (ok && candidate_r.squaredNorm() < cost) {
      current = candidate;
      r = std::move(candidate_r);
      cost = r.squaredNorm();
      damping *= options.damping_decrease;
      ++local.accepted_steps;
      local.rms_history.push_back(rms_of(cost, corrs.size()));
    } else {
      damping *= options.damping_increase;
      if (damping > 1e16) {
        break;
      }
    }
  }
  local.iterations = iter;
  local.final_rms = rms_of(cost, corrs.size());
  if (summary != nullptr) {
    *summary = std::move(local);
  }
  return current;
}

PoseError pose_error(const Pose& estimate, const Pose& ground_truth) {
  PoseError err;
  err.translation_m = (estimate.center() - ground_truth.center()).norm();
  // arccos((trace - 1) / 2) evaluated through atan2 so that errors far below
  // sqrt(eps) radians stay resolvable.
  const Eigen::Matrix3d delta = ground_truth.rotation.transpose() * estimate.rotation;
  const double cos_angle = std::clamp((delta.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axis(delta(2, 1) - delta(1, 2), delta(0, 2) - delta(2, 0),
                             delta(1, 0) - delta(0, 1));
  const double sin_angle = std::min(1.0, axis.norm() / 2.0);
  err.rotation_deg = std::atan2(sin_angle, cos_angle) * 180.0 / std::numbers::pi;
  return err;
}

}  // namespace semloc
