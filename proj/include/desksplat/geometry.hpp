#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "desksplat/error.hpp"

namespace desksplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// The single generator type all seeded randomness flows through.
using Rng = std::mt19937_64;

/// 3D points in meters. Whether they live in a camera or the world frame is
/// up to the caller.
using PointSet = std::vector<Vec3>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double near = 0.1;
  double far = 10.0;

  bool valid() const {
    return fx > 0 && fy > 0 && near > 0 && near < far && width >= 1 && height >= 1;
  }

  void validate() const {
    if (!valid()) throw Error(ErrorCode::kInvalidArgument, "invalid camera intrinsics");
  }

  bool in_bounds(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < static_cast<double>(width) && v < static_cast<double>(height);
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid transform x' = rotation * x + translation.
///
/// Camera poses are stored world-from-camera throughout the library: applying
/// a camera pose to a camera-frame point yields its world coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  Pose inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose invert(const Pose& p) { return p.inverse(); }

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

/// Rodrigues rotation for an axis-angle vector.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

inline Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Six-DOF increment (rotation vector, translation) applied on the left:
/// result = [exp(w) | v] * pose.
inline Pose apply_left_increment(const Vec6& xi, const Pose& pose) {
  const Pose delta{so3_exp(xi.head<3>()), xi.tail<3>()};
  return delta * pose;
}

/// Rotation angle of a * b^-1 in radians.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a * b.transpose()).trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

inline Mat3 rotation_from_quaternion(double qw, double qx, double qy, double qz) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  return q.toRotationMatrix();
}

/// Unit quaternion (w, x, y, z) with w >= 0.
inline Eigen::Vector4d quaternion_from_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

/// Correspondence between a pixel in frame t-1 and one in frame t.
struct PixelMatch {
  double u0 = 0;
  double v0 = 0;
  double u1 = 0;
  double v1 = 0;
  double confidence = 1.0;

  friend bool operator==(const PixelMatch&, const PixelMatch&) = default;
};

inline Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorCode::kInvalidDepth, "depth must be positive and finite");
  }
  return {(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth};
}

struct Projection {
  double u = 0;
  double v = 0;
  double depth = 0;
};

inline Projection project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) throw Error(ErrorCode::kBehindCamera, "point has non-positive depth");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

namespace detail {

struct RigidFit {
  Pose pose;
  Eigen::Vector3d singular_values;
};

// Closed-form least-squares alignment dst ~ R * src + t. Centroids are removed,
// the cross-covariance H = Qsrc^T Qdst is decomposed as U S V^T, R = V U^T and
// a reflection is repaired by flipping the last column of V. Rank-deficient H
// is tolerated here; callers decide what counts as degenerate.
inline RigidFit fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const double n = static_cast<double>(src.size());
  Vec3 c_src = Vec3::Zero();
  Vec3 c_dst = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    c_src += src[i];
    c_dst += dst[i];
  }
  c_src /= n;
  c_dst /= n;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h.noalias() += (src[i] - c_src) * (dst[i] - c_dst).transpose();
  }

  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Mat3 r = v * u.transpose();
  if (r.determinant() < 0.0) {
    v.col(2) *= -1.0;
    r = v * u.transpose();
  }
  return {Pose{r, c_dst - r * c_src}, svd.singularValues()};
}

}  // namespace detail

/// Rigid transform minimizing sum ||dst_i - (R src_i + t)||^2.
///
/// Coplanar sets are fine; collinear or coincident sets, where the rotation
/// about the common line is undetermined, raise DegenerateGeometry.
inline Pose estimate_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::kInvalidArgument, "point sets differ in size");
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::kInsufficientCorrespondences, "need at least 3 point pairs");
  }
  const detail::RigidFit fit = detail::fit_rigid(src, dst);
  const auto& s = fit.singular_values;
  if (!(s(0) > 0.0) || s(1) < 1e-12 * s(0)) {
    throw Error(ErrorCode::kDegenerateGeometry, "correspondences are collinear or coincident");
  }
  return fit.pose;
}

/// Sum of squared residuals ||dst_i - pose * src_i||^2.
inline double registration_residual(const Pose& pose, std::span<const Vec3> src,
                                    std::span<const Vec3> dst) {
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (dst[i] - pose * src[i]).squaredNorm();
  return sum;
}

}  // namespace desksplat
