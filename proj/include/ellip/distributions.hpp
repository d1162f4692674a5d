#ifndef ELLIP_DISTRIBUTIONS_HPP
#define ELLIP_DISTRIBUTIONS_HPP

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

namespace ellip {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// P(Z > x) without cancellation in the upper tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// P(X <= x) for X ~ chi-square(dof), via the regularized lower incomplete gamma.
inline double chi2_cdf(double x, double dof) {
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

/// P(X > x) for X ~ chi-square(dof).
inline double chi2_sf(double x, double dof) {
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

}  // namespace ellip

#endif
