#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace povio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Skew-symmetric matrix of v, so that skew(v)*w = v x w.
inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

inline Vec3 unskew(const Mat3& s) { return Vec3(s(2, 1), s(0, 2), s(1, 0)); }

// Below this angle the closed-form coefficients are replaced by their
// Taylor series to keep relative error under ~1e-12.
constexpr double kSmallAngle = 1e-7;

/// Exponential map R^3 -> SO(3) (Rodrigues formula).
inline Mat3 exp_so3(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 s = skew(theta);
  if (angle < kSmallAngle) {
    return Mat3::Identity() + s + 0.5 * s * s;
  }
  const double a = std::sin(angle) / angle;
  const double b = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + a * s + b * s * s;
}

/// Logarithm map SO(3) -> R^3. Throws if the rotation angle is within
/// 1e-6 of pi, where the axis sign is ambiguous.
inline Vec3 log_so3(const Mat3& R) {
  const double cos_angle = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  if (angle > M_PI - 1e-6) {
    throw std::domain_error("log_so3: rotation angle too close to pi");
  }
  if (angle < kSmallAngle) {
    // log(R) ~ unskew(R - R^T)/2 * (1 + angle^2/6)
    return 0.5 * unskew(R - R.transpose()) * (1.0 + angle * angle / 6.0);
  }
  return angle / (2.0 * std::sin(angle)) * unskew(R - R.transpose());
}

/// Right Jacobian of SO(3): exp(theta + d) ~ exp(theta) * exp(Jr(theta) d).
inline Mat3 right_jacobian(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 s = skew(theta);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * s + (1.0 / 6.0) * s * s;
  }
  const double a2 = angle * angle;
  const double b = (1.0 - std::cos(angle)) / a2;
  const double c = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() - b * s + c * s * s;
}

inline bool is_valid_rotation(const Mat3& R, double tol = 1e-9) {
  return (R.transpose() * R - Mat3::Identity()).norm() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

/// Nearest rotation matrix (polar decomposition via SVD).
inline Mat3 orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    out = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return out;
}

}  // namespace povio
