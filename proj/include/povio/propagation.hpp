#pragma once

#include "povio/so3.hpp"
#include "povio/window_state.hpp"

namespace povio {

inline const Vec3 kGravity(0.0, 0.0, -9.81);  // z-up global frame

struct ImuSample {
  double t = 0.0;        // s
  Vec3 omega = Vec3::Zero();  // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force in body frame
};

/// Continuous-time noise densities.
struct NoiseParams {
  double sigma_g = 3e-4;         // rad * s^-0.5
  double sigma_a = 1e-3;         // m * s^-1.5
  double sigma_wg = 3e-5;        // rad * s^-1.5
  double sigma_wa = 2e-4;        // m * s^-2.5
  double sigma_clock_rw = 0.1;   // m * s^-1.5 (clock drift random walk)
};

/// One discrete IMU step with bias-corrected inputs. The velocity and
/// position integrals use the midpoint rotation R*exp(w dt/2).
inline ImuState propagate_mean(const ImuState& imu, const ImuSample& sample, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("propagate_mean: dt must be positive");
  const Vec3 w = sample.omega - imu.b_g;
  const Vec3 a = sample.accel - imu.b_a;
  const Mat3 R_mid = imu.R_GI * exp_so3(0.5 * w * dt);
  const Vec3 a_world = R_mid * a + kGravity;

  ImuState out = imu;
  out.R_GI = imu.R_GI * exp_so3(w * dt);
  out.v_GI = imu.v_GI + a_world * dt;
  out.p_GI = imu.p_GI + imu.v_GI * dt + 0.5 * a_world * dt * dt;
  return out;
}

/// 15x15 error-state transition for one IMU step, matching the discrete
/// integrator above. Row/column order: [theta, p, v, bg, ba].
///
/// The bias-coupling blocks are the single-step bias sensitivities of the
/// discrete model; gyro noise enters identically to a gyro bias error and
/// accel noise identically to an accel bias error, so the bg/ba columns
/// double as the noise input columns.
inline Eigen::Matrix<double, 15, 15> state_transition(
    const ImuState& prev, const ImuState& next, const ImuSample& sample, double dt,
    ErrorConvention conv = ErrorConvention::invariant) {
  using Mat15 = Eigen::Matrix<double, 15, 15>;
  const Vec3 w = sample.omega - prev.b_g;
  const Vec3 a = sample.accel - prev.b_a;
  const Mat3 Jr_full = right_jacobian(w * dt);
  const Mat3 Jr_half = right_jacobian(0.5 * w * dt);
  const Mat3 R_half = exp_so3(0.5 * w * dt);
  const Mat3 R_mid = prev.R_GI * R_half;
  const Mat3 gyro_col = -next.R_GI * Jr_full * dt;  // dtheta+/dbg

  Mat15 phi = Mat15::Identity();
  phi.block<3, 3>(0, 9) = gyro_col;
  phi.block<3, 3>(3, 6) = Mat3::Identity() * dt;
  phi.block<3, 3>(3, 12) = -R_mid * (0.5 * dt * dt);
  phi.block<3, 3>(6, 12) = -R_mid * dt;

  const Mat3 accel_sens = R_mid * skew(a) * Jr_half;  // d(R_mid a)/dbg
  if (conv == ErrorConvention::invariant) {
    phi.block<3, 3>(3, 0) = 0.5 * skew(kGravity) * dt * dt;
    phi.block<3, 3>(6, 0) = skew(kGravity) * dt;
    phi.block<3, 3>(3, 9) = -skew(next.p_GI) * next.R_GI * Jr_full * dt +
                            accel_sens * (0.25 * dt * dt * dt);
    phi.block<3, 3>(6, 9) = -skew(next.v_GI) * next.R_GI * Jr_full * dt +
                            accel_sens * (0.5 * dt * dt);
  } else {
    const Vec3 a_body_world = R_mid * a;
    phi.block<3, 3>(3, 0) = -0.5 * skew(a_body_world) * dt * dt;
    phi.block<3, 3>(6, 0) = -skew(a_body_world) * dt;
    phi.block<3, 3>(3, 9) = accel_sens * (0.25 * dt * dt * dt);
    phi.block<3, 3>(6, 9) = accel_sens * (0.5 * dt * dt);
  }
  return phi;
}

/// P <- Phi_full P Phi_full^T + Q_d with Phi_full identity on clone blocks
/// and the clock modeled as a shared-drift random walk. Also integrates the
/// clock bias mean.
inline void propagate_covariance(WindowState& state,
                                 const Eigen::Matrix<double, 15, 15>& phi_imu, double dt,
                                 const NoiseParams& noise) {
  const int d = state.dim();

  state.cov.topRows(kImuErrDim) = (phi_imu * state.cov.topRows(kImuErrDim)).eval();
  state.cov.leftCols(kImuErrDim) = (state.cov.leftCols(kImuErrDim) * phi_imu.transpose()).eval();

  // White noise maps through the bias columns of phi (same input channel),
  // with variance density/dt over one step; bias walks add sigma^2 dt.
  const auto Mg = phi_imu.block<15, 3>(0, 9);
  const auto Ma = phi_imu.block<15, 3>(0, 12);
  Eigen::Matrix<double, 15, 15> Q =
      Mg * (noise.sigma_g * noise.sigma_g / dt) * Mg.transpose() +
      Ma * (noise.sigma_a * noise.sigma_a / dt) * Ma.transpose();
  Q.block<3, 3>(9, 9) += Mat3::Identity() * noise.sigma_wg * noise.sigma_wg * dt;
  Q.block<3, 3>(12, 12) += Mat3::Identity() * noise.sigma_wa * noise.sigma_wa * dt;
  state.cov.topLeftCorner(kImuErrDim, kImuErrDim) += Q;

  if (state.clock) {
    const int c = state.clock_idx();
    // Phi_clk = [I4 1*dt; 0 1] applied to rows then columns.
    state.cov.block(c, 0, 4, d) += dt * state.cov.row(c + 4).replicate(4, 1);
    state.cov.block(0, c, d, 4) += dt * state.cov.col(c + 4).replicate(1, 4);

    const double s2 = noise.sigma_clock_rw * noise.sigma_clock_rw;
    const Eigen::Vector4d ones = Eigen::Vector4d::Ones();
    state.cov.block<4, 4>(c, c) += s2 * (dt * dt * dt / 3.0) * ones * ones.transpose();
    state.cov.block<4, 1>(c, c + 4) += s2 * (dt * dt / 2.0) * ones;
    state.cov.block<1, 4>(c + 4, c) += s2 * (dt * dt / 2.0) * ones.transpose();
    state.cov(c + 4, c + 4) += s2 * dt;

    state.clock->dt_r.array() += state.clock->dt_r_dot * dt;
  }
  state.symmetrize();
}

}  // namespace povio
