#pragma once

#include <vector>

#include "povio/so3.hpp"

namespace povio {

/// Element of the composite group SO(3) x R^{3m}: one rotation plus m
/// 3-vectors that share the rotation under the group error.
struct GroupElement {
  Mat3 rotation = Mat3::Identity();
  std::vector<Vec3> vectors;
};

/// Right-invariant tangent error of a GroupElement.
struct TangentError {
  Vec3 theta = Vec3::Zero();
  std::vector<Vec3> vector_errors;
};

/// X = err [+] Xhat: rotation = exp(theta)*Rhat, x_i = exp(theta)*xhat_i + err_i.
inline GroupElement boxplus(const TangentError& err, const GroupElement& estimate) {
  if (err.vector_errors.size() != estimate.vectors.size()) {
    throw std::invalid_argument("boxplus: slot count mismatch");
  }
  GroupElement out;
  const Mat3 dR = exp_so3(err.theta);
  out.rotation = dR * estimate.rotation;
  out.vectors.reserve(estimate.vectors.size());
  for (size_t i = 0; i < estimate.vectors.size(); ++i) {
    out.vectors.push_back(dR * estimate.vectors[i] + err.vector_errors[i]);
  }
  return out;
}

/// err = X [-] Xhat: theta = log(R*Rhat^T), err_i = x_i - exp(theta)*xhat_i.
inline TangentError boxminus(const GroupElement& x, const GroupElement& xhat) {
  if (x.vectors.size() != xhat.vectors.size()) {
    throw std::invalid_argument("boxminus: slot count mismatch");
  }
  TangentError err;
  err.theta = log_so3(x.rotation * xhat.rotation.transpose());
  const Mat3 dR = exp_so3(err.theta);
  err.vector_errors.reserve(x.vectors.size());
  for (size_t i = 0; i < x.vectors.size(); ++i) {
    err.vector_errors.push_back(x.vectors[i] - dR * xhat.vectors[i]);
  }
  return err;
}

}  // namespace povio
