#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace povio {

namespace detail {
// Standard chi-square upper quantiles for small dof.
constexpr std::array<double, 10> kChi2_95 = {3.841, 5.991, 7.815, 9.488, 11.070,
                                             12.592, 14.067, 15.507, 16.919, 18.307};
constexpr std::array<double, 10> kChi2_99 = {6.635, 9.210, 11.345, 13.277, 15.086,
                                             16.812, 18.475, 20.090, 21.666, 23.209};

// Wilson-Hilferty approximation, adequate for gating at larger dof.
inline double chi2_wilson_hilferty(int dof, double z) {
  const double k = static_cast<double>(dof);
  const double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}
}  // namespace detail

/// 95% chi-square quantile for the given degrees of freedom.
inline double chi2_quantile_95(int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_quantile_95: dof < 1");
  if (dof <= 10) return detail::kChi2_95[dof - 1];
  return detail::chi2_wilson_hilferty(dof, 1.6448536269514722);
}

/// 99% chi-square quantile for the given degrees of freedom.
inline double chi2_quantile_99(int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_quantile_99: dof < 1");
  if (dof <= 10) return detail::kChi2_99[dof - 1];
  return detail::chi2_wilson_hilferty(dof, 2.3263478740408408);
}

}  // namespace povio
