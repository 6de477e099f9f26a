#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace semloc {

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Calibrated pinhole camera, no distortion.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  // Throws ConsistencyError unless fx, fy > 0 and the principal point lies
  // strictly inside the image.
  void validate() const;

  bool contains(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }

  // Unit bearing vector of a pixel in the camera frame.
  Eigen::Vector3d bearing(const Eigen::Vector2d& px) const;

  bool operator==(const CameraIntrinsics&) const = default;
};

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }

  Eigen::Vector3d transform(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }

  // C = -R^T t
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

  // Orthonormality and det = +1 within tol.
  bool is_valid(double tol = 1e-9) const;
};

// Pixel of X under pose/K, or nullopt when X is not strictly in front of
// the camera (z <= 1e-9).
std::optional<Eigen::Vector2d> project(const Pose& pose, const CameraIntrinsics& camera,
                                       const Eigen::Vector3d& point);

// Point at depth z along the ray through px.
Eigen::Vector3d unproject(const Pose& pose, const CameraIntrinsics& camera,
                          const Eigen::Vector2d& px, double depth);

inline Eigen::Vector3d camera_center(const Pose& pose) { return pose.center(); }

struct Correspondence {
  Eigen::Vector2d pixel;
  Eigen::Vector3d point;
};

// Minimal absolute pose from three 2D-3D correspondences.
//
// Returns up to four poses, each reprojecting all three points within 1e-6 px,
// sorted deterministically. Throws DegenerateConfiguration when the 3D
// points span a triangle of area <= 1e-9 m^2 (or a pixel is not finite) and
// NoRealSolution when no physically valid pose exists.
std::vector<Pose> solve_p3p(const std::array<Correspondence, 3>& corrs,
                            const CameraIntrinsics& camera);

// Non-throwing variant used inside RANSAC loops; degenerate or unsolvable
// samples simply produce an empty vector.
std::vector<Pose> solve_p3p_noexcept(const std::array<Correspondence, 3>& corrs,
                                     const CameraIntrinsics& camera);

struct RefineOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-10;
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
};

struct RefineSummary {
  double initial_rms = 0.0;
  double final_rms = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  // RMS after the initial evaluation and after every accepted step.
  std::vector<double> rms_history;
};

// Levenberg-style damped Gauss-Newton on the summed squared reprojection
// error. The rotation is updated as R <- exp([w]x) R and the translation
// additively. Requires >= 4 correspondences; throws NumericalFailure on
// non-finite residuals at the initial pose.
Pose refine_pnp(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                const Pose& init, const RefineOptions& options = {},
                RefineSummary* summary = nullptr);

// Sum of squared pixel residuals; +inf if any point is behind the camera.
double reprojection_cost(std::span<const Correspondence> corrs, const CameraIntrinsics& camera,
                         const Pose& pose);

// Gradient of reprojection_cost w.r.t. the local update (w, dt) at zero.
Vector6d reprojection_cost_gradient(std::span<const Correspondence> corrs,
                                    const CameraIntrinsics& camera, const Pose& pose);

// Applies the local update used by refine_pnp: first three entries are the
// rotation vector, last three the translation increment.
Pose apply_local_update(const Pose& pose, const Vector6d& delta);

struct PoseError {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

PoseError pose_error(const Pose& estimate, const Pose& ground_truth);

// Angle between two non-zero vectors in radians, accurate near 0 and pi.
double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

}  // namespace semloc
