#ifndef ELLIP_FAMILIES_HPP
#define ELLIP_FAMILIES_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "ellip/errors.hpp"
#include "ellip/random.hpp"

namespace ellip {

enum class FamilyKind { normal, student_t, power_exponential };

/// Elliptical family with a fully known density generator g.
///
/// The shape constants (nu for Student-t, lambda for power exponential) are
/// fixed inputs, never estimated.
class EllipticalFamily {
 public:
  static EllipticalFamily normal() { return EllipticalFamily(FamilyKind::normal, 0.0); }

  static EllipticalFamily student_t(double nu) {
    if (!(nu > 0.0) || !std::isfinite(nu)) throw DomainError("student_t requires nu > 0");
    return EllipticalFamily(FamilyKind::student_t, nu);
  }

  static EllipticalFamily power_exponential(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw DomainError("power_exponential requires lambda > 0");
    return EllipticalFamily(FamilyKind::power_exponential, lambda);
  }

  /// Builds from a config name plus optional shape; shape must be present iff required.
  static EllipticalFamily from_name(std::string_view name, std::optional<double> nu = {},
                                    std::optional<double> lambda = {}) {
    if (name == "normal") {
      if (nu || lambda) throw DomainError("normal family takes no shape parameter");
      return normal();
    }
    if (name == "student_t" || name == "t") {
      if (!nu) throw DomainError("student_t requires nu");
      if (lambda) throw DomainError("student_t does not take lambda");
      return student_t(*nu);
    }
    if (name == "power_exponential" || name == "pe") {
      if (!lambda) throw DomainError("power_exponential requires lambda");
      if (nu) throw DomainError("power_exponential does not take nu");
      return power_exponential(*lambda);
    }
    throw DomainError("unknown family '" + std::string(name) + "'");
  }

  FamilyKind kind() const noexcept { return kind_; }
  std::optional<double> nu() const {
    return kind_ == FamilyKind::student_t ? std::optional<double>(shape_) : std::nullopt;
  }
  std::optional<double> lambda() const {
    return kind_ == FamilyKind::power_exponential ? std::optional<double>(shape_) : std::nullopt;
  }

  std::string name() const {
    switch (kind_) {
      case FamilyKind::normal: return "normal";
      case FamilyKind::student_t: return "student_t";
      case FamilyKind::power_exponential: return "power_exponential";
    }
    return "unknown";
  }

  /// True when v depends on u (weights not identically 1).
  bool has_varying_weights() const noexcept {
    return !(kind_ == FamilyKind::normal ||
             (kind_ == FamilyKind::power_exponential && shape_ == 1.0));
  }

  /// Power exponential with lambda != 1 has unbounded weights at u = 0.
  bool singular_at_zero() const noexcept {
    return kind_ == FamilyKind::power_exponential && shape_ != 1.0;
  }

  bool operator==(const EllipticalFamily&) const = default;

 private:
  EllipticalFamily(FamilyKind kind, double shape) : kind_(kind), shape_(shape) {}

  FamilyKind kind_;
  double shape_;
};

struct Weights {
  double v;
  double v_dot;
};

namespace detail {
inline void check_uq(double u, int q) {
  if (q < 1) throw DomainError("dimension q must be >= 1");
  if (!(u >= 0.0)) throw DomainError("u must be >= 0");
}
}  // namespace detail

/// log g(u) for a q-dimensional member of the family.
inline double log_g(const EllipticalFamily& family, double u, int q) {
  detail::check_uq(u, q);
  const double half_q = 0.5 * q;
  const double log_pi = std::log(std::numbers::pi);
  switch (family.kind()) {
    case FamilyKind::normal:
      return -0.5 * u - half_q * std::log(2.0 * std::numbers::pi);
    case FamilyKind::student_t: {
      const double nu = *family.nu();
      return std::lgamma(0.5 * (nu + q)) - std::lgamma(0.5 * nu) - half_q * (log_pi + std::log(nu)) -
             0.5 * (nu + q) * std::log1p(u / nu);
    }
    case FamilyKind::power_exponential: {
      const double lambda = *family.lambda();
      return std::log(lambda) + std::lgamma(half_q) - (q / (2.0 * lambda)) * std::numbers::ln2 -
             half_q * log_pi - 0.5 * std::pow(u, lambda) - std::lgamma(q / (2.0 * lambda));
    }
  }
  return 0.0;
}

/// v = -2 W_g(u) and v_dot = -2 W_g'(u), where W_g = d log g / du.
inline Weights weights(const EllipticalFamily& family, double u, int q) {
  detail::check_uq(u, q);
  switch (family.kind()) {
    case FamilyKind::normal:
      return {1.0, 0.0};
    case FamilyKind::student_t: {
      const double nu = *family.nu();
      const double denom = nu + u;
      return {(nu + q) / denom, -(nu + q) / (denom * denom)};
    }
    case FamilyKind::power_exponential: {
      const double lambda = *family.lambda();
      if (lambda == 1.0) return {1.0, 0.0};
      if (u == 0.0) throw SingularWeightError("power_exponential weights are unbounded at u = 0");
      return {lambda * std::pow(u, lambda - 1.0), lambda * (lambda - 1.0) * std::pow(u, lambda - 2.0)};
    }
  }
  return {1.0, 0.0};
}

/// One draw from El_q(0, I_q).
inline Eigen::VectorXd sample_spherical(const EllipticalFamily& family, int q, RandomStream& rng) {
  if (q < 1) throw DomainError("dimension q must be >= 1");
  Eigen::VectorXd z(q);
  for (int k = 0; k < q; ++k) z(k) = rng.normal();
  switch (family.kind()) {
    case FamilyKind::normal:
      return z;
    case FamilyKind::student_t: {
      const double nu = *family.nu();
      const double w = rng.chi_square(nu);
      return z * std::sqrt(nu / w);
    }
    case FamilyKind::power_exponential: {
      const double lambda = *family.lambda();
      // Uniform direction times radius R = w^(1/(2 lambda)), w ~ Gamma(q/(2 lambda), 2).
      const double w = rng.gamma(q / (2.0 * lambda), 2.0);
      return z.normalized() * std::pow(w, 1.0 / (2.0 * lambda));
    }
  }
  return z;
}

}  // namespace ellip

#endif
