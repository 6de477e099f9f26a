// Minimal absolute pose from three points.
//
// The unknown depths l = (l1, l2, l3) along the three bearings satisfy the
// law of cosines
//   li^2 + lj^2 + bij li lj = aij,   bij = -2 yi.yj,   aij = |xi - xj|^2.
// Eliminating the right-hand sides gives two homogeneous conics D1, D2 whose
// pencil D1 + g D2 contains degenerate members (det = 0, a cubic in g). A
// degenerate member factors into two planes through the origin; intersecting
// each plane with D2 and rescaling with the (2,3) equation yields the depth
// candidates, which are then polished with Newton's method and converted to
// a rigid transform.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "semloc/errors.h"
#include "semloc/geometry.h"

namespace semloc {
namespace {

// Real roots of a x^2 + b x + c = 0.
int solve_quadratic(double a, double b, double c, double roots[2]) {
  if (a == 0.0) {
    if (b == 0.0) {
      return 0;
    }
    roots[0] = -c / b;
    return 1;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    return 0;
  }
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(sq, b));
  if (q == 0.0) {
    roots[0] = 0.0;
    return 1;
  }
  roots[0] = q / a;
  roots[1] = c / q;
  return 2;
}

double eval_cubic(const double c[4], double x) { return ((c[3] * x + c[2]) * x + c[1]) * x + c[0]; }

void polish_cubic_root(const double c[4], double* x) {
  for (int i = 0; i < 4; ++i) {
    const double f = eval_cubic(c, *x);
    const double df = (3.0 * c[3] * *x + 2.0 * c[2]) * *x + c[1];
    if (df == 0.0) {
      return;
    }
    const double next = *x - f / df;
    if (!std::isfinite(next) || std::abs(eval_cubic(c, next)) >= std::abs(f)) {
      return;
    }
    *x = next;
  }
}

// Real roots of c[3] x^3 + c[2] x^2 + c[1] x + c[0].
std::vector<double> real_cubic_roots(const double c[4]) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3])});
  if (scale == 0.0) {
    return roots;
  }
  if (std::abs(c[3]) <= 1e-14 * scale) {
    double r[2];
    const int n = solve_quadratic(c[2], c[1], c[0], r);
    roots.assign(r, r + n);
    return roots;
  }
  const double a = c[2] / c[3];
  const double b = c[1] / c[3];
  const double d = c[0] / c[3];
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + d;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  const double shift = -a / 3.0;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    roots.push_back(std::cbrt(-q / 2.0 + sq) + std::cbrt(-q / 2.0 - sq) + shift);
  } else if (p == 0.0) {
    roots.push_back(shift);
  } else {
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) {
      roots.push_back(m * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }
  }
  for (double& r : roots) {
    polish_cubic_root(c, &r);
  }
  return roots;
}

struct P3PProblem {
  std::array<Eigen::Vector3d, 3> bearings;
  std::array<Eigen::Vector3d, 3> points;
  double b12, b13, b23;
  double a12, a13, a23;

  Eigen::Vector3d residual(const Eigen::Vector3d& l) const {
    return {l(0) * l(0) + l(1) * l(1) + b12 * l(0) * l(1) - a12,
            l(0) * l(0) + l(2) * l(2) + b13 * l(0) * l(2) - a13,
            l(1) * l(1) + l(2) * l(2) + b23 * l(1) * l(2) - a23};
  }

  Eigen::Matrix3d residual_jacobian(const Eigen::Vector3d& l) const {
    Eigen::Matrix3d j;
    j << 2.0 * l(0) + b12 * l(1), 2.0 * l(1) + b12 * l(0), 0.0,  //
        2.0 * l(0) + b13 * l(2), 0.0, 2.0 * l(2) + b13 * l(0),   //
        0.0, 2.0 * l(1) + b23 * l(2), 2.0 * l(2) + b23 * l(1);
    return j;
  }
};

void refine_depths(const P3PProblem& prob, Eigen::Vector3d* depths) {
  Eigen::Vector3d best = *depths;
  double best_norm = prob.residual(best).norm();
  for (int iter = 0; iter < 8 && best_norm > 0.0; ++iter) {
    const Eigen::Vector3d step = prob.residual_jacobian(best).partialPivLu().solve(prob.residual(best));
    const Eigen::Vector3d next = best - step;
    const double n = prob.residual(next).norm();
    if (!next.allFinite() || !(n < best_norm)) {
      break;
    }
    best = next;
    best_norm = n;
  }
  *depths = best;
}

// Directions d on the plane {n . d = 0} with d^T conic d = 0.
void plane_conic_directions(const Eigen::Vector3d& normal, const Eigen::Matrix3d& conic,
                            std::vector<Eigen::Vector3d>* out) {
  const Eigen::Vector3d n = normal.normalized();
  const Eigen::Vector3d p = n.unitOrthogonal();
  const Eigen::Vector3d q = n.cross(p);
  const double h00 = p.dot(conic * p);
  const double h01 = p.dot(conic * q);
  const double h11 = q.dot(conic * q);
  const double scale = std::max({std::abs(h00), std::abs(h01), std::abs(h11)});
  if (scale == 0.0) {
    return;
  }
  double r[2];
  if (std::abs(h00) >= std::abs(h11)) {
    // beta = 1: h00 alpha^2 + 2 h01 alpha + h11 = 0
    const int k = solve_quadratic(h00, 2.0 * h01, h11, r);
    for (int i = 0; i < k; ++i) {
      out->push_back(r[i] * p + q);
    }
  } else {
    const int k = solve_quadratic(h11, 2.0 * h01, h00, r);
    for (int i = 0; i < k; ++i) {
      out->push_back(p + r[i] * q);
    }
  }
}

bool depths_to_pose(const P3PProblem& prob, const Eigen::Vector3d& depths, Pose* pose) {
  Eigen::Matrix3d world;
  Eigen::Matrix3d cam;
  for (int i = 0; i < 3; ++i) {
    world.col(i) = prob.points[i];
    cam.col(i) = depths(i) * prob.bearings[i];
  }
  const Eigen::Matrix4d transform = Eigen::umeyama(world, cam, false);
  if (!transform.allFinite()) {
    return false;
  }
  pose->rotation = transform.topLeftCorner<3, 3>();
  pose->translation = transform.topRightCorner<3, 1>();
  return true;
}

bool same_pose(const Pose& a, const Pose& b, double scale) {
  return (a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-7 &&
         (a.translation - b.translation).norm() < 1e-7 * std::max(1.0, scale);
}

}  // namespace

std::vector<Pose> solve_p3p_noexcept(const std::array<Correspondence, 3>& corrs,
                                     const CameraIntrinsics& camera) {
  std::vector<Pose> solutions;
  for (const auto& c : corrs) {
    if (!c.pixel.allFinite() || !c.point.allFinite()) {
      return solutions;
    }
  }
  const Eigen::Vector3d& x1 = corrs[0].point;
  const Eigen::Vector3d& x2 = corrs[1].point;
  const Eigen::Vector3d& x3 = corrs[2].point;
  if (0.5 * (x2 - x1).cross(x3 - x1).norm() <= 1e-9) {
    return solutions;
  }

  P3PProblem prob;
  for (int i = 0; i < 3; ++i) {
    prob.bearings[i] = camera.bearing(corrs[i].pixel);
    prob.points[i] = corrs[i].point;
  }
  prob.b12 = -2.0 * prob.bearings[0].dot(prob.bearings[1]);
  prob.b13 = -2.0 * prob.bearings[0].dot(prob.bearings[2]);
  prob.b23 = -2.0 * prob.bearings[1].dot(prob.bearings[2]);
  prob.a12 = (x1 - x2).squaredNorm();
  prob.a13 = (x1 - x3).squaredNorm();
  prob.a23 = (x2 - x3).squaredNorm();

  Eigen::Matrix3d m12 = Eigen::Matrix3d::Zero();
  m12 << 1.0, prob.b12 / 2.0, 0.0, prob.b12 / 2.0, 1.0, 0.0, 0.0, 0.0, 0.0;
  Eigen::Matrix3d m13 = Eigen::Matrix3d::Zero();
  m13 << 1.0, 0.0, prob.b13 / 2.0, 0.0, 0.0, 0.0, prob.b13 / 2.0, 0.0, 1.0;
  Eigen::Matrix3d m23 = Eigen::Matrix3d::Zero();
  m23 << 0.0, 0.0, 0.0, 0.0, 1.0, prob.b23 / 2.0, 0.0, prob.b23 / 2.0, 1.0;

  const Eigen::Matrix3d d1 = prob.a23 * m12 - prob.a12 * m23;
  const Eigen::Matrix3d d2 = prob.a23 * m13 - prob.a13 * m23;

  // det(d1 + g d2) = c3 g^3 + c2 g^2 + c1 g + c0
  auto mixed = [](const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    // sum over columns of a[i] . (b[j] x b[k]) for cyclic (i, j, k)
    return a.col(0).dot(b.col(1).cross(b.col(2))) + a.col(1).dot(b.col(2).cross(b.col(0))) +
           a.col(2).dot(b.col(0).cross(b.col(1)));
  };
  const double coeffs[4] = {d1.determinant(), mixed(d2, d1), mixed(d1, d2), d2.determinant()};

  std::vector<Eigen::Matrix3d> degenerate;
  for (const double g : real_cubic_roots(coeffs)) {
    degenerate.push_back(d1 + g * d2);
  }
  const double cscale =
      std::max({std::abs(coeffs[0]), std::abs(coeffs[1]), std::abs(coeffs[2]), std::abs(coeffs[3])});
  if (std::abs(coeffs[3]) <= 1e-10 * cscale) {
    degenerate.push_back(d2);
  }

  std::vector<Eigen::Vector3d> directions;
  for (const Eigen::Matrix3d& d0 : degenerate) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(d0);
    if (eig.info() != Eigen::Success) {
      continue;
    }
    const Eigen::Vector3d values = eig.eigenvalues();
    const Eigen::Matrix3d vectors = eig.eigenvectors();
    Eigen::Index null_idx = 0;
    values.cwiseAbs().minCoeff(&null_idx);
    const Eigen::Index ia = (null_idx + 1) % 3;
    const Eigen::Index ib = (null_idx + 2) % 3;
    double sa = values(ia);
    double sb = values(ib);
    Eigen::Vector3d ua = vectors.col(ia);
    Eigen::Vector3d ub = vectors.col(ib);
    if (sa * sb >= 0.0) {
      // Semi-definite member: the only real directions are along the null space.
      directions.push_back(vectors.col(null_idx));
      continue;
    }
    if (sa < 0.0) {
      std::swap(sa, sb);
      std::swap(ua, ub);
    }
    const double s = std::sqrt(-sb / sa);
    plane_conic_directions(ua - s * ub, d2, &directions);
    plane_conic_directions(ua + s * ub, d2, &directions);
  }

  const double scene_scale = std::sqrt(std::max({prob.a12, prob.a13, prob.a23}));
  for (const Eigen::Vector3d& d : directions) {
    const double m = d(1) * d(1) + d(2) * d(2) + prob.b23 * d(1) * d(2);
    if (!(m > 0.0)) {
      continue;
    }
    Eigen::Vector3d depths = std::sqrt(prob.a23 / m) * d;
    if (depths.sum() < 0.0) {
      depths = -depths;
    }
    refine_depths(prob, &depths);
    if (!(depths.minCoeff() > 0.0) || !depths.allFinite()) {
      continue;
    }
    Pose pose;
    if (!depths_to_pose(prob, depths, &pose)) {
      continue;
    }
    bool exact = true;
    for (const auto& c : corrs) {
      const auto px = project(pose, camera, c.point);
      if (!px || (*px - c.pixel).norm() > 1e-6) {
        exact = false;
        break;
      }
    }
    if (!exact) {
      continue;
    }
    const bool duplicate = std::any_of(solutions.begin(), solutions.end(), [&](const Pose& other) {
      return same_pose(other, pose, scene_scale);
    });
    if (!duplicate) {
      solutions.push_back(pose);
    }
  }

  std::sort(solutions.begin(), solutions.end(), [](const Pose& a, const Pose& b) {
    const Eigen::Vector3d ca = a.center();
    const Eigen::Vector3d cb = b.center();
    return std::lexicographical_compare(ca.data(), ca.data() + 3, cb.data(), cb.data() + 3);
  });
  return solutions;
}

std::vector<Pose> solve_p3p(const std::array<Correspondence, 3>& corrs,
                            const CameraIntrinsics& camera) {
  for (const auto& c : corrs) {
    if (!c.pixel.allFinite() || !c.point.allFinite()) {
      throw DegenerateConfiguration("non-finite input to P3P");
    }
  }
  const Eigen::Vector3d& x1 = corrs[0].point;
  if (0.5 * (corrs[1].point - x1).cross(corrs[2].point - x1).norm() <= 1e-9) {
    throw DegenerateConfiguration("P3P points are collinear or coincident");
  }
  std::vector<Pose> solutions = solve_p3p_noexcept(corrs, camera);
  if (solutions.empty()) {
    throw NoRealSolution("P3P has no physically valid solution");
  }
  return solutions;
}

}  // namespace semloc
