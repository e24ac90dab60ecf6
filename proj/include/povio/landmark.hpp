#pragma once

#include <cstdint>
#include <vector>

#include "povio/so3.hpp"
#include "povio/window_state.hpp"

namespace povio {

/// One observation on the normalized image plane; the homogeneous form is
/// [x, y, 1].
struct NormalizedObs {
  int64_t frame_id = 0;
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
};

/// A landmark's base frame (first observer) plus its observations,
/// frame ids strictly increasing.
struct FeatureTrack {
  int64_t feature_id = 0;
  int64_t base_frame_id = 0;
  std::vector<NormalizedObs> obs;
};

enum class LandmarkStatus { ok, degenerate, depth_out_of_range };

struct LandmarkOptions {
  bool two_view = false;       // use only the base and last observation rows
  double eps_cond = 1e-10;     // A^T A below this is degenerate geometry
  double depth_min = 0.1;      // m
  double depth_max = 200.0;    // m
  ErrorConvention convention = ErrorConvention::invariant;
};

/// Closed-form landmark: depth in the base frame, global position, and the
/// Jacobians of the position w.r.t. window pose errors and observation noise.
struct LandmarkSolution {
  LandmarkStatus status = LandmarkStatus::ok;
  double depth = 0.0;            // d in the base camera frame, m
  Vec3 position_global = Vec3::Zero();
  double condition = 0.0;        // scalar A^T A
  MatX jac_poses;                // 3 x 6N, blocks (theta_l, p_l) in track order
  MatX jac_obs;                  // 3 x 2N, blocks per observation in track order
};

namespace detail {

inline Vec3 homogeneous(const Eigen::Vector2d& xy) { return Vec3(xy.x(), xy.y(), 1.0); }

/// Resolves every observation's clone, in track order.
inline std::vector<const CameraClone*> resolve_clones(const FeatureTrack& track,
                                                      const std::vector<CameraClone>& clones) {
  std::vector<const CameraClone*> out;
  out.reserve(track.obs.size());
  for (const auto& ob : track.obs) {
    const CameraClone* c = nullptr;
    for (const auto& cl : clones)
      if (cl.frame_id == ob.frame_id) {
        c = &cl;
        break;
      }
    if (!c) throw std::invalid_argument("landmark: observation frame not in window");
    out.push_back(c);
  }
  return out;
}

/// Row indices of the linear system: every non-base observation, or just
/// the last one in two-view mode.
inline std::vector<size_t> selected_rows(size_t n_obs, bool two_view) {
  std::vector<size_t> sel;
  if (two_view) {
    sel.push_back(n_obs - 1);
  } else {
    for (size_t i = 1; i < n_obs; ++i) sel.push_back(i);
  }
  return sel;
}

}  // namespace detail

/// Stacks the per-view rows  [x_i]_x R_{C_i C_1} x_1 * d = -[x_i]_x p^{C_i}_{C_1}
/// for the depth least squares. Requires >= 2 observations.
inline void build_linear_system(const FeatureTrack& track,
                                const std::vector<CameraClone>& clones, VecX& A, VecX& b,
                                bool two_view = false) {
  if (track.obs.size() < 2) {
    throw std::invalid_argument("build_linear_system: need at least 2 observations");
  }
  const auto cams = detail::resolve_clones(track, clones);
  const auto sel = detail::selected_rows(track.obs.size(), two_view);

  const Vec3 ray1 = detail::homogeneous(track.obs[0].xy);
  const Mat3& R1 = cams[0]->R_GC;
  const Vec3& p1 = cams[0]->p_GC;

  A.resize(3 * static_cast<int>(sel.size()));
  b.resize(3 * static_cast<int>(sel.size()));
  for (size_t r = 0; r < sel.size(); ++r) {
    const size_t i = sel[r];
    const Mat3 Ri_T = cams[i]->R_GC.transpose();
    const Mat3 xi_skew = skew(detail::homogeneous(track.obs[i].xy));
    A.segment<3>(3 * r) = xi_skew * (Ri_T * (R1 * ray1));
    b.segment<3>(3 * r) = -xi_skew * (Ri_T * (p1 - cams[i]->p_GC));
  }
}

/// Scalar normal-equation depth d = (A^T A)^-1 A^T b; the returned
/// condition is A^T A itself, used for degeneracy gating.
inline LandmarkStatus solve_depth(const VecX& A, const VecX& b, double eps_cond,
                                  double& depth, double& condition) {
  condition = A.squaredNorm();
  if (condition < eps_cond) return LandmarkStatus::degenerate;
  depth = A.dot(b) / condition;
  return LandmarkStatus::ok;
}

/// Solves the landmark position g = d * R_{C1} x_1 + p_{C1} and fills its
/// Jacobians w.r.t. per-clone pose errors and per-observation noise.
inline LandmarkSolution landmark_position(const FeatureTrack& track,
                                          const std::vector<CameraClone>& clones,
                                          const LandmarkOptions& opt = {}) {
  LandmarkSolution sol;
  VecX A, b;
  build_linear_system(track, clones, A, b, opt.two_view);
  sol.status = solve_depth(A, b, opt.eps_cond, sol.depth, sol.condition);
  if (sol.status != LandmarkStatus::ok) return sol;
  if (sol.depth < opt.depth_min || sol.depth > opt.depth_max) {
    sol.status = LandmarkStatus::depth_out_of_range;
    return sol;
  }

  const auto cams = detail::resolve_clones(track, clones);
  const Vec3 ray1 = detail::homogeneous(track.obs[0].xy);
  const Mat3& R1 = cams[0]->R_GC;
  const Vec3& p1 = cams[0]->p_GC;
  const Vec3 base_ray_world = R1 * ray1;
  sol.position_global = sol.depth * base_ray_world + p1;

  // --- Jacobians of d and g --------------------------------------------
  // d = t/s with s = A.A, t = A.b, so for any perturbation channel xi:
  //   dd/dxi = sum_i [ (b_i - 2 d A_i)^T dA_i/dxi + A_i^T db_i/dxi ] / s
  const size_t n = track.obs.size();
  const bool invariant = opt.convention == ErrorConvention::invariant;
  const auto sel = detail::selected_rows(n, opt.two_view);

  Eigen::Matrix<double, 3, 2> E;
  E << 1, 0, 0, 1, 0, 0;

  Eigen::Matrix<double, 1, Eigen::Dynamic> dd_pose(1, 6 * n);
  Eigen::Matrix<double, 1, Eigen::Dynamic> dd_obs(1, 2 * n);
  dd_pose.setZero();
  dd_obs.setZero();

  for (size_t r = 0; r < sel.size(); ++r) {
    const size_t i = sel[r];
    const Vec3 Ai = A.segment<3>(3 * r);
    const Vec3 bi = b.segment<3>(3 * r);
    const Eigen::RowVector3d wA = (bi - 2.0 * sol.depth * Ai).transpose();
    const Eigen::RowVector3d wB = Ai.transpose();

    const Mat3 Ri_T = cams[i]->R_GC.transpose();
    const Mat3 xi_skew = skew(detail::homogeneous(track.obs[i].xy));
    const Mat3 dA_dth = xi_skew * Ri_T * skew(base_ray_world);  // sign applied per clone
    const Mat3 xiRiT = xi_skew * Ri_T;
    const Mat3 db_dth_inv = xiRiT * skew(p1);

    // base clone (columns 0..5)
    dd_pose.block<1, 3>(0, 0) += wA * (-dA_dth);
    if (invariant) dd_pose.block<1, 3>(0, 0) += wB * db_dth_inv;
    dd_pose.block<1, 3>(0, 3) += wB * (-xiRiT);

    // observing clone i (its own row only)
    dd_pose.block<1, 3>(0, 6 * i) += wA * dA_dth;
    if (invariant) {
      dd_pose.block<1, 3>(0, 6 * i) += wB * (-db_dth_inv);
    } else {
      dd_pose.block<1, 3>(0, 6 * i) += wB * (-xiRiT * skew(p1 - cams[i]->p_GC));
    }
    dd_pose.block<1, 3>(0, 6 * i + 3) += wB * xiRiT;

    // observation noise
    const Vec3 ci = Ri_T * base_ray_world;
    const Vec3 wi = Ri_T * (p1 - cams[i]->p_GC);
    dd_obs.block<1, 2>(0, 0) += wA * (xiRiT * R1 * E);
    dd_obs.block<1, 2>(0, 2 * i) += wA * (-skew(ci) * E) + wB * (skew(wi) * E);
  }
  dd_pose /= sol.condition;
  dd_obs /= sol.condition;

  // g = d * R1 x1 + p1
  sol.jac_poses = base_ray_world * dd_pose;
  sol.jac_obs = base_ray_world * dd_obs;
  sol.jac_poses.block<3, 3>(0, 0) += -sol.depth * skew(base_ray_world);
  if (invariant) sol.jac_poses.block<3, 3>(0, 0) += -skew(p1);
  sol.jac_poses.block<3, 3>(0, 3) += Mat3::Identity();
  sol.jac_obs.block<3, 2>(0, 0) += sol.depth * R1 * E;

  return sol;
}

}  // namespace povio
