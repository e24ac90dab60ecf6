#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "povio/group.hpp"
#include "povio/so3.hpp"

namespace povio {

/// Error parameterization used for covariance, Jacobians and corrections.
/// Classical keeps the same rotation error but plain additive translation
/// and velocity errors; it exists as a consistency contrast.
enum class ErrorConvention { invariant, classical };

struct ImuState {
  Mat3 R_GI = Mat3::Identity();  // IMU -> global
  Vec3 p_GI = Vec3::Zero();      // m
  Vec3 v_GI = Vec3::Zero();      // m/s
  Vec3 b_g = Vec3::Zero();       // rad/s
  Vec3 b_a = Vec3::Zero();       // m/s^2
};

struct CameraClone {
  int64_t frame_id = 0;
  Mat3 R_GC = Mat3::Identity();
  Vec3 p_GC = Vec3::Zero();
};

/// Receiver clock: one code bias per constellation (meters, c absorbed)
/// plus a single shared drift (m/s).
struct ClockState {
  Eigen::Vector4d dt_r = Eigen::Vector4d::Zero();
  double dt_r_dot = 0.0;
};

/// Fixed camera-from-IMU extrinsic, treated as known.
struct CameraExtrinsic {
  Mat3 R_IC = Mat3::Identity();  // camera -> IMU
  Vec3 p_IC = Vec3::Zero();      // camera origin in IMU frame
};

constexpr int kImuErrDim = 15;    // [theta, p, v, bg, ba]
constexpr int kCloneErrDim = 6;   // [theta_C, p_C]
constexpr int kClockErrDim = 5;   // [dt_r(4), dt_r_dot]

/// Sliding-window filter state: IMU state, camera clones (oldest first),
/// optional receiver clock, and the joint error-state covariance.
///
/// Error ordering: [theta_I, p_I, v_I, b_g, b_a,
///                  (theta_C, p_C) per clone oldest->newest,
///                  dt_r(4), dt_r_dot].
struct WindowState {
  ImuState imu;
  std::vector<CameraClone> clones;
  std::optional<ClockState> clock;
  MatX cov;
  size_t max_clones = 10;

  int dim() const {
    return kImuErrDim + kCloneErrDim * static_cast<int>(clones.size()) +
           (clock ? kClockErrDim : 0);
  }
  static int imu_idx() { return 0; }
  int clone_idx(size_t i) const { return kImuErrDim + kCloneErrDim * static_cast<int>(i); }
  int clock_idx() const { return kImuErrDim + kCloneErrDim * static_cast<int>(clones.size()); }

  const CameraClone* find_clone(int64_t frame_id) const {
    for (const auto& c : clones)
      if (c.frame_id == frame_id) return &c;
    return nullptr;
  }
  int clone_position(int64_t frame_id) const {
    for (size_t i = 0; i < clones.size(); ++i)
      if (clones[i].frame_id == frame_id) return static_cast<int>(i);
    return -1;
  }

  void symmetrize() { cov = 0.5 * (cov + cov.transpose()).eval(); }
};

/// Makes a state with zeroed covariance of the right dimension.
inline WindowState make_window_state(bool with_clock, size_t max_clones = 10) {
  WindowState s;
  s.max_clones = max_clones;
  if (with_clock) s.clock = ClockState{};
  s.cov = MatX::Zero(s.dim(), s.dim());
  return s;
}

inline CameraClone camera_pose_from_imu(const ImuState& imu, const CameraExtrinsic& ext,
                                        int64_t frame_id) {
  CameraClone c;
  c.frame_id = frame_id;
  c.R_GC = imu.R_GI * ext.R_IC;
  c.p_GC = imu.p_GI + imu.R_GI * ext.p_IC;
  return c;
}

/// Appends a camera clone of the current IMU pose and augments the
/// covariance. Under the right-invariant error the clone error equals the
/// IMU (theta, p) error exactly, for any extrinsic; the classical
/// convention picks up a lever-arm coupling on the rotation.
inline void clone_camera(WindowState& state, const CameraExtrinsic& ext, int64_t frame_id,
                         ErrorConvention conv = ErrorConvention::invariant) {
  if (state.clones.size() >= state.max_clones) {
    throw std::runtime_error("clone_camera: window full, marginalize first");
  }
  if (!state.clones.empty() && frame_id <= state.clones.back().frame_id) {
    throw std::invalid_argument("clone_camera: frame ids must increase");
  }

  Eigen::Matrix<double, kCloneErrDim, Eigen::Dynamic> J(kCloneErrDim, state.dim());
  J.setZero();
  J.block<3, 3>(0, 0) = Mat3::Identity();  // dtheta_C / dtheta_I
  J.block<3, 3>(3, 3) = Mat3::Identity();  // dp_C / dp_I
  if (conv == ErrorConvention::classical) {
    J.block<3, 3>(3, 0) = -skew(state.imu.R_GI * ext.p_IC);  // dp_C / dtheta_I
  }

  const int old_dim = state.dim();
  const int clk = state.clock ? kClockErrDim : 0;
  const int insert_at = old_dim - clk;  // clones sit before the clock block

  MatX cov_new = MatX::Zero(old_dim + kCloneErrDim, old_dim + kCloneErrDim);
  const MatX cross = J * state.cov;  // 6 x old_dim

  // Shuffle [imu+clones | clock] -> [imu+clones | new clone | clock].
  auto scatter = [&](int src) { return src < insert_at ? src : src + kCloneErrDim; };
  for (int r = 0; r < old_dim; ++r)
    for (int c = 0; c < old_dim; ++c) cov_new(scatter(r), scatter(c)) = state.cov(r, c);
  for (int c = 0; c < old_dim; ++c)
    for (int r = 0; r < kCloneErrDim; ++r) {
      cov_new(insert_at + r, scatter(c)) = cross(r, c);
      cov_new(scatter(c), insert_at + r) = cross(r, c);
    }
  cov_new.block<kCloneErrDim, kCloneErrDim>(insert_at, insert_at) =
      cross * J.transpose();

  state.clones.push_back(camera_pose_from_imu(state.imu, ext, frame_id));
  state.cov = std::move(cov_new);
  state.symmetrize();
}

/// Drops a clone; the remaining covariance is the corresponding submatrix.
inline void marginalize_clone(WindowState& state, int64_t frame_id) {
  const int pos = state.clone_position(frame_id);
  if (pos < 0) throw std::invalid_argument("marginalize_clone: unknown frame id");

  const int start = state.clone_idx(static_cast<size_t>(pos));
  const int old_dim = state.dim();
  const int tail = old_dim - start - kCloneErrDim;

  MatX cov_new(old_dim - kCloneErrDim, old_dim - kCloneErrDim);
  cov_new.topLeftCorner(start, start) = state.cov.topLeftCorner(start, start);
  cov_new.topRightCorner(start, tail) =
      state.cov.block(0, start + kCloneErrDim, start, tail);
  cov_new.bottomLeftCorner(tail, start) =
      state.cov.block(start + kCloneErrDim, 0, tail, start);
  cov_new.bottomRightCorner(tail, tail) =
      state.cov.block(start + kCloneErrDim, start + kCloneErrDim, tail, tail);

  state.clones.erase(state.clones.begin() + pos);
  state.cov = std::move(cov_new);
  state.symmetrize();
}

/// Blockwise error truth [-] estimate in the given convention; biases and
/// clock are plain differences. Ordering matches the covariance.
inline VecX state_error(const WindowState& truth, const WindowState& estimate,
                        ErrorConvention conv = ErrorConvention::invariant) {
  if (truth.clones.size() != estimate.clones.size() ||
      truth.clock.has_value() != estimate.clock.has_value()) {
    throw std::invalid_argument("state_error: structure mismatch");
  }
  VecX err(estimate.dim());

  const Vec3 th_i = log_so3(truth.imu.R_GI * estimate.imu.R_GI.transpose());
  const Mat3 dR = conv == ErrorConvention::invariant ? exp_so3(th_i) : Mat3::Identity();
  err.segment<3>(0) = th_i;
  err.segment<3>(3) = truth.imu.p_GI - dR * estimate.imu.p_GI;
  err.segment<3>(6) = truth.imu.v_GI - dR * estimate.imu.v_GI;
  err.segment<3>(9) = truth.imu.b_g - estimate.imu.b_g;
  err.segment<3>(12) = truth.imu.b_a - estimate.imu.b_a;

  for (size_t i = 0; i < estimate.clones.size(); ++i) {
    if (truth.clones[i].frame_id != estimate.clones[i].frame_id) {
      throw std::invalid_argument("state_error: clone frame ids differ");
    }
    const Vec3 th = log_so3(truth.clones[i].R_GC * estimate.clones[i].R_GC.transpose());
    const Mat3 dRc = conv == ErrorConvention::invariant ? exp_so3(th) : Mat3::Identity();
    err.segment<3>(estimate.clone_idx(i)) = th;
    err.segment<3>(estimate.clone_idx(i) + 3) =
        truth.clones[i].p_GC - dRc * estimate.clones[i].p_GC;
  }
  if (estimate.clock) {
    err.segment<4>(estimate.clock_idx()) = truth.clock->dt_r - estimate.clock->dt_r;
    err(estimate.clock_idx() + 4) = truth.clock->dt_r_dot - estimate.clock->dt_r_dot;
  }
  return err;
}

/// In-place boxplus of an error vector onto the state (EKF correction).
inline void apply_error(WindowState& state, const VecX& delta,
                        ErrorConvention conv = ErrorConvention::invariant) {
  if (delta.size() != state.dim()) {
    throw std::invalid_argument("apply_error: dimension mismatch");
  }
  const Mat3 dR = exp_so3(delta.segment<3>(0));
  state.imu.R_GI = dR * state.imu.R_GI;
  if (conv == ErrorConvention::invariant) {
    state.imu.p_GI = dR * state.imu.p_GI + delta.segment<3>(3);
    state.imu.v_GI = dR * state.imu.v_GI + delta.segment<3>(6);
  } else {
    state.imu.p_GI += delta.segment<3>(3);
    state.imu.v_GI += delta.segment<3>(6);
  }
  state.imu.b_g += delta.segment<3>(9);
  state.imu.b_a += delta.segment<3>(12);

  for (size_t i = 0; i < state.clones.size(); ++i) {
    const int at = state.clone_idx(i);
    const Mat3 dRc = exp_so3(delta.segment<3>(at));
    state.clones[i].R_GC = dRc * state.clones[i].R_GC;
    if (conv == ErrorConvention::invariant) {
      state.clones[i].p_GC = dRc * state.clones[i].p_GC + delta.segment<3>(at + 3);
    } else {
      state.clones[i].p_GC += delta.segment<3>(at + 3);
    }
  }
  if (state.clock) {
    state.clock->dt_r += delta.segment<4>(state.clock_idx());
    state.clock->dt_r_dot += delta(state.clock_idx() + 4);
  }
}

}  // namespace povio
