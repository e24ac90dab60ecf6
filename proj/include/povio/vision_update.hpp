#pragma once

#include <optional>
#include <vector>

#include "povio/chi2.hpp"
#include "povio/landmark.hpp"
#include "povio/window_state.hpp"

namespace povio {

/// Stacked visual measurement: residual, state Jacobian in error
/// coordinates, and the Jacobian w.r.t. the raw observation noise vector.
struct MeasurementBatch {
  VecX residual;   // 2M
  MatX H_state;    // 2M x dim(state)
  MatX H_noise;    // 2M x 2N (observations of the track, in track order)
};

struct VisionUpdateOptions {
  LandmarkOptions landmark;
  double sigma_norm = 1.0 / 460.0;  // per-axis std on the normalized plane
  double z_min = 0.05;              // m, minimum camera-frame depth
  size_t min_obs = 4;               // pose-only update threshold
};

struct VisionUpdateStats {
  int tracks_used = 0;
  int tracks_rejected = 0;   // degenerate / out-of-range / behind camera
  int tracks_gated = 0;
  bool skipped_batch = false;  // innovation factorization failed
  MatX H_stacked;              // rows of all accepted tracks (for analysis)
};

/// Pinhole projection onto the normalized plane; empty if the point is not
/// safely in front of the camera.
inline std::optional<Eigen::Vector2d> project(const CameraClone& clone, const Vec3& p_global,
                                              double z_min = 0.05) {
  const Vec3 pc = clone.R_GC.transpose() * (p_global - clone.p_GC);
  if (pc.z() <= z_min) return std::nullopt;
  return Eigen::Vector2d(pc.x() / pc.z(), pc.y() / pc.z());
}

namespace detail {

inline Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& pc) {
  Eigen::Matrix<double, 2, 3> J;
  const double iz = 1.0 / pc.z();
  J << iz, 0.0, -pc.x() * iz * iz,
       0.0, iz, -pc.y() * iz * iz;
  return J;
}

inline std::vector<int> clone_positions(const WindowState& state, const FeatureTrack& track) {
  std::vector<int> pos;
  pos.reserve(track.obs.size());
  for (const auto& ob : track.obs) {
    const int p = state.clone_position(ob.frame_id);
    if (p < 0) throw std::invalid_argument("vision: observation frame not in window");
    pos.push_back(p);
  }
  return pos;
}

}  // namespace detail

/// Measurement rows of one target frame k of a track: the chain term
/// through the landmark function plus the direct projection term at k.
/// Returns false if the landmark is behind the target camera.
inline bool poseonly_jacobians(const WindowState& state, const FeatureTrack& track,
                               const LandmarkSolution& sol, size_t k,
                               const VisionUpdateOptions& opt, Eigen::Vector2d& residual,
                               MatX& H_state_row, MatX& H_noise_row) {
  const size_t n = track.obs.size();
  const auto pos = detail::clone_positions(state, track);
  const CameraClone& cam_k = state.clones[static_cast<size_t>(pos[k])];

  const Vec3 pc = cam_k.R_GC.transpose() * (sol.position_global - cam_k.p_GC);
  if (pc.z() <= opt.z_min) return false;

  const Eigen::Matrix<double, 2, 3> Jpi = detail::projection_jacobian(pc);
  const Eigen::Matrix<double, 2, 3> Hp = Jpi * cam_k.R_GC.transpose();
  residual = track.obs[k].xy - Eigen::Vector2d(pc.x() / pc.z(), pc.y() / pc.z());

  H_state_row = MatX::Zero(2, state.dim());
  H_noise_row = MatX::Zero(2, 2 * static_cast<Eigen::Index>(n));

  const bool invariant = opt.landmark.convention == ErrorConvention::invariant;
  const Mat3 direct_theta =
      invariant ? skew(sol.position_global) : skew(sol.position_global - cam_k.p_GC);

  for (size_t l = 0; l < n; ++l) {
    const int col = state.clone_idx(static_cast<size_t>(pos[l]));
    Mat3 g_th = sol.jac_poses.block<3, 3>(0, 6 * l);
    Mat3 g_p = sol.jac_poses.block<3, 3>(0, 6 * l + 3);
    if (l == k) g_th += direct_theta;
    H_state_row.block<2, 3>(0, col) += Hp * g_th;
    H_state_row.block<2, 3>(0, col + 3) += Hp * g_p;
    if (l == k) H_state_row.block<2, 3>(0, col + 3) -= Hp;
  }
  for (size_t m = 0; m < n; ++m) {
    H_noise_row.block<2, 2>(0, 2 * m) = -Hp * sol.jac_obs.block<3, 2>(0, 2 * m);
    if (m == k) H_noise_row.block<2, 2>(0, 2 * m) += Eigen::Matrix2d::Identity();
  }
  return true;
}

/// All rows of one track (every non-base frame as target).
inline bool build_track_batch(const WindowState& state, const FeatureTrack& track,
                              const LandmarkSolution& sol, const VisionUpdateOptions& opt,
                              MeasurementBatch& batch) {
  const size_t n = track.obs.size();
  const Eigen::Index rows = 2 * static_cast<Eigen::Index>(n - 1);
  batch.residual.resize(rows);
  batch.H_state.resize(rows, state.dim());
  batch.H_noise.resize(rows, 2 * static_cast<Eigen::Index>(n));

  for (size_t k = 1; k < n; ++k) {
    Eigen::Vector2d r;
    MatX hs, hn;
    if (!poseonly_jacobians(state, track, sol, k, opt, r, hs, hn)) return false;
    batch.residual.segment<2>(2 * (k - 1)) = r;
    batch.H_state.middleRows(2 * (k - 1), 2) = hs;
    batch.H_noise.middleRows(2 * (k - 1), 2) = hn;
  }
  return true;
}

namespace detail {

/// Joseph-form EKF update shared by the vision and GNSS paths.
inline bool ekf_update(WindowState& state, const MatX& H, const VecX& r, const MatX& R_eff,
                       ErrorConvention conv) {
  const MatX PHt = state.cov * H.transpose();
  MatX S = H * PHt + R_eff;
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LDLT<MatX> ldlt(S);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
    return false;
  }
  const MatX K = ldlt.solve(PHt.transpose()).transpose();
  apply_error(state, K * r, conv);
  const MatX A = MatX::Identity(state.dim(), state.dim()) - K * H;
  state.cov = A * state.cov * A.transpose() + K * R_eff * K.transpose();
  state.symmetrize();
  return true;
}

}  // namespace detail

/// Tightly-coupled pose-only update: stacks all row blocks of the given
/// tracks, forms the correlated effective noise R = Hn (sigma^2 I) Hn^T,
/// chi-square gates per track at 95%, and applies one Joseph-form update.
inline VisionUpdateStats poseonly_update(WindowState& state,
                                         const std::vector<const FeatureTrack*>& tracks,
                                         const VisionUpdateOptions& opt) {
  VisionUpdateStats stats;
  std::vector<MeasurementBatch> accepted;
  Eigen::Index total_rows = 0;

  for (const FeatureTrack* track : tracks) {
    if (track->obs.size() < opt.min_obs) continue;
    LandmarkSolution sol = landmark_position(*track, state.clones, opt.landmark);
    if (sol.status != LandmarkStatus::ok) {
      ++stats.tracks_rejected;
      continue;
    }
    MeasurementBatch batch;
    if (!build_track_batch(state, *track, sol, opt, batch)) {
      ++stats.tracks_rejected;
      continue;
    }
    const double var = opt.sigma_norm * opt.sigma_norm;
    const MatX R_t = var * batch.H_noise * batch.H_noise.transpose();
    MatX S = batch.H_state * state.cov * batch.H_state.transpose() + R_t;
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::LDLT<MatX> ldlt(S);
    if (ldlt.info() != Eigen::Success) {
      ++stats.tracks_gated;
      continue;
    }
    const double mahal = batch.residual.dot(ldlt.solve(batch.residual));
    if (mahal > chi2_quantile_95(static_cast<int>(batch.residual.size()))) {
      ++stats.tracks_gated;
      continue;
    }
    total_rows += batch.residual.size();
    accepted.push_back(std::move(batch));
  }
  if (accepted.empty()) return stats;

  VecX r(total_rows);
  MatX H = MatX::Zero(total_rows, state.dim());
  MatX R_eff = MatX::Zero(total_rows, total_rows);
  Eigen::Index at = 0;
  const double var = opt.sigma_norm * opt.sigma_norm;
  for (const auto& b : accepted) {
    const Eigen::Index m = b.residual.size();
    r.segment(at, m) = b.residual;
    H.middleRows(at, m) = b.H_state;
    R_eff.block(at, at, m, m) = var * b.H_noise * b.H_noise.transpose();
    at += m;
  }

  if (!detail::ekf_update(state, H, r, R_eff, opt.landmark.convention)) {
    stats.skipped_batch = true;
    return stats;
  }
  stats.tracks_used = static_cast<int>(accepted.size());
  stats.H_stacked = std::move(H);
  return stats;
}

/// Conventional MSCKF update: per-observation Jacobians w.r.t. poses and
/// the landmark, left-multiplied by the null space of the landmark Jacobian
/// (the infinite-prior-covariance treatment), then a standard EKF update.
inline VisionUpdateStats msckf_update_baseline(WindowState& state,
                                               const std::vector<const FeatureTrack*>& tracks,
                                               const VisionUpdateOptions& opt) {
  VisionUpdateStats stats;
  struct Projected {
    VecX r;
    MatX H;
  };
  std::vector<Projected> accepted;
  Eigen::Index total_rows = 0;

  for (const FeatureTrack* track : tracks) {
    const size_t n = track->obs.size();
    if (n < 3) continue;
    LandmarkOptions lm = opt.landmark;
    lm.two_view = false;  // baseline always triangulates from all views
    LandmarkSolution sol = landmark_position(*track, state.clones, lm);
    if (sol.status != LandmarkStatus::ok) {
      ++stats.tracks_rejected;
      continue;
    }
    const auto pos = detail::clone_positions(state, *track);
    const bool invariant = opt.landmark.convention == ErrorConvention::invariant;

    VecX r(2 * n);
    MatX Hx = MatX::Zero(2 * n, state.dim());
    MatX Hf = MatX::Zero(2 * n, 3);
    bool behind = false;
    for (size_t k = 0; k < n; ++k) {
      const CameraClone& cam = state.clones[static_cast<size_t>(pos[k])];
      const Vec3 pc = cam.R_GC.transpose() * (sol.position_global - cam.p_GC);
      if (pc.z() <= opt.z_min) {
        behind = true;
        break;
      }
      const Eigen::Matrix<double, 2, 3> Jpi = detail::projection_jacobian(pc);
      const Eigen::Matrix<double, 2, 3> Hp = Jpi * cam.R_GC.transpose();
      r.segment<2>(2 * k) =
          track->obs[k].xy - Eigen::Vector2d(pc.x() / pc.z(), pc.y() / pc.z());
      const int col = state.clone_idx(static_cast<size_t>(pos[k]));
      const Mat3 dth = invariant ? skew(sol.position_global)
                                 : skew(sol.position_global - cam.p_GC);
      Hx.block<2, 3>(2 * k, col) = Hp * dth;
      Hx.block<2, 3>(2 * k, col + 3) = -Hp;
      Hf.middleRows<2>(2 * k) = Hp;
    }
    if (behind) {
      ++stats.tracks_rejected;
      continue;
    }

    // Left null space of Hf via full QR.
    Eigen::HouseholderQR<MatX> qr(Hf);
    const MatX Rfac = qr.matrixQR().topRows(3).triangularView<Eigen::Upper>();
    if (std::abs(Rfac(0, 0)) < 1e-12 || std::abs(Rfac(1, 1)) < 1e-12 ||
        std::abs(Rfac(2, 2)) < 1e-12) {
      ++stats.tracks_rejected;  // rank-deficient landmark Jacobian
      continue;
    }
    const MatX Q = qr.householderQ() * MatX::Identity(2 * n, 2 * n);
    const MatX U = Q.rightCols(2 * n - 3);

    Projected proj;
    proj.r = U.transpose() * r;
    proj.H = U.transpose() * Hx;

    const double var = opt.sigma_norm * opt.sigma_norm;
    MatX S = proj.H * state.cov * proj.H.transpose() +
             var * MatX::Identity(proj.r.size(), proj.r.size());
    Eigen::LDLT<MatX> ldlt(S);
    const double mahal = proj.r.dot(ldlt.solve(proj.r));
    if (mahal > chi2_quantile_95(static_cast<int>(proj.r.size()))) {
      ++stats.tracks_gated;
      continue;
    }
    total_rows += proj.r.size();
    accepted.push_back(std::move(proj));
  }
  if (accepted.empty()) return stats;

  VecX r(total_rows);
  MatX H = MatX::Zero(total_rows, state.dim());
  Eigen::Index at = 0;
  for (const auto& p : accepted) {
    r.segment(at, p.r.size()) = p.r;
    H.middleRows(at, p.r.size()) = p.H;
    at += p.r.size();
  }
  const double var = opt.sigma_norm * opt.sigma_norm;
  const MatX R_eff = var * MatX::Identity(total_rows, total_rows);

  if (!detail::ekf_update(state, H, r, R_eff, opt.landmark.convention)) {
    stats.skipped_batch = true;
    return stats;
  }
  stats.tracks_used = static_cast<int>(accepted.size());
  stats.H_stacked = std::move(H);
  return stats;
}

/// Joint pose/landmark covariance of the pose-only representation:
/// [[P_X, P_X Hg^T], [Hg P_X, Hg P_X Hg^T]] over the observing clones.
inline MatX joint_covariance(const WindowState& state, const FeatureTrack& track,
                             const LandmarkSolution& sol) {
  const auto pos = detail::clone_positions(state, track);
  const int n = static_cast<int>(track.obs.size());
  MatX P_X(6 * n, 6 * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      P_X.block<6, 6>(6 * a, 6 * b) = state.cov.block<6, 6>(
          state.clone_idx(static_cast<size_t>(pos[a])), state.clone_idx(static_cast<size_t>(pos[b])));

  MatX out(6 * n + 3, 6 * n + 3);
  const MatX cross = sol.jac_poses * P_X;  // 3 x 6n
  out.topLeftCorner(6 * n, 6 * n) = P_X;
  out.topRightCorner(6 * n, 3) = cross.transpose();
  out.bottomLeftCorner(3, 6 * n) = cross;
  out.bottomRightCorner(3, 3) = cross * sol.jac_poses.transpose();
  return out;
}

}  // namespace povio
