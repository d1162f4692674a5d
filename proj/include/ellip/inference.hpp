#ifndef ELLIP_INFERENCE_HPP
#define ELLIP_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ellip/ancillary.hpp"
#include "ellip/distributions.hpp"
#include "ellip/errors.hpp"
#include "ellip/families.hpp"
#include "ellip/fit.hpp"
#include "ellip/likelihood.hpp"
#include "ellip/linalg.hpp"
#include "ellip/model.hpp"

namespace ellip {

/// Below these the adjustment is skipped (gamma = rho = 1) and flagged.
inline constexpr double kNearZeroR = 1e-4;
inline constexpr double kNearZeroLR = 1e-8;
/// LR values in [-kLRSlack, 0) are rounding noise and clamp to 0.
inline constexpr double kLRSlack = 1e-8;

enum class Sided { two, lower, upper };

inline std::string to_string(Sided s) {
  switch (s) {
    case Sided::two: return "two";
    case Sided::lower: return "lower";
    case Sided::upper: return "upper";
  }
  return "two";
}

inline Sided parse_sided(std::string_view s) {
  if (s == "two") return Sided::two;
  if (s == "lower") return Sided::lower;
  if (s == "upper") return Sided::upper;
  throw std::invalid_argument("sided must be one of two, lower, upper (got '" + std::string(s) + "')");
}

/// H0: theta[interest] = psi0. Lower means H1: psi < psi0, upper H1: psi > psi0;
/// one-sided nulls are tested at the boundary psi = psi0.
struct Hypothesis {
  std::vector<std::size_t> interest;
  VectorXd psi0;
  Sided sided = Sided::two;

  std::size_t dim() const { return interest.size(); }

  std::vector<std::size_t> nuisance(std::size_t p) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < p; ++k)
      if (std::find(interest.begin(), interest.end(), k) == interest.end()) out.push_back(k);
    return out;
  }

  void validate(std::size_t p) const {
    if (interest.empty()) throw std::invalid_argument("hypothesis needs at least one interest parameter");
    if (static_cast<std::size_t>(psi0.size()) != interest.size())
      throw std::invalid_argument("psi0 length differs from the number of interest parameters");
    std::set<std::size_t> seen;
    for (std::size_t k : interest) {
      if (k >= p) throw std::invalid_argument("interest index " + std::to_string(k) + " out of range");
      if (!seen.insert(k).second) throw std::invalid_argument("duplicate interest index");
    }
    if (sided != Sided::two && interest.size() != 1)
      throw std::invalid_argument("one-sided tests need a scalar interest parameter");
  }

  Restriction restriction() const { return Restriction{interest, psi0}; }
};

enum class Flag {
  near_zero_r,
  near_zero_LR,
  nonpd_info,
  boundary_fit,
  negative_determinant,
  LR_star_floored,
  negative_LR_star2,
  near_zero_residual,
  info_asymmetry,
};

inline std::string to_string(Flag f) {
  switch (f) {
    case Flag::near_zero_r: return "near_zero_r";
    case Flag::near_zero_LR: return "near_zero_LR";
    case Flag::nonpd_info: return "nonpd_info";
    case Flag::boundary_fit: return "boundary_fit";
    case Flag::negative_determinant: return "negative_determinant";
    case Flag::LR_star_floored: return "LR_star_floored";
    case Flag::negative_LR_star2: return "negative_LR_star2";
    case Flag::near_zero_residual: return "near_zero_residual";
    case Flag::info_asymmetry: return "info_asymmetry";
  }
  return "unknown";
}

inline Flag parse_flag(std::string_view s) {
  for (Flag f : {Flag::near_zero_r, Flag::near_zero_LR, Flag::nonpd_info, Flag::boundary_fit,
                 Flag::negative_determinant, Flag::LR_star_floored, Flag::negative_LR_star2,
                 Flag::near_zero_residual, Flag::info_asymmetry})
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown flag '" + std::string(s) + "'");
}

using FlagSet = std::set<Flag>;

struct TestReport {
  Hypothesis hypothesis;
  double LR = 0.0;
  std::optional<double> r;
  std::optional<double> gamma;
  double rho = 1.0;
  std::optional<double> r_star;
  double LR_star = 0.0;
  double LR_star2 = 0.0;
  double p_LR = 1.0;
  std::optional<double> p_r;
  std::optional<double> p_r_star;
  double p_LR_star = 1.0;
  double p_LR_star2 = 1.0;
  FlagSet flags;

  VectorXd theta_hat;
  VectorXd theta_tilde;
  double loglik_hat = 0.0;
  double loglik_tilde = 0.0;
};

struct LikelihoodRatio {
  double LR;
  std::optional<double> r;
};

/// LR = 2 (l_hat - l_tilde) clamped at 0; r = sgn(psi_hat - psi0) sqrt(LR) when q = 1.
inline LikelihoodRatio lr_and_r(const FitResult& fit_hat, const FitResult& fit_tilde, const Hypothesis& h) {
  if (!fit_hat.converged || !fit_tilde.converged)
    throw FitError("likelihood ratio needs two converged fits");
  const double raw = 2.0 * (fit_hat.loglik - fit_tilde.loglik);
  if (raw < -kLRSlack * (1.0 + std::abs(fit_hat.loglik)))
    throw FitError("restricted log-likelihood exceeds the unrestricted one");
  LikelihoodRatio out{std::max(raw, 0.0), std::nullopt};
  if (h.dim() == 1) {
    const double diff = fit_hat.theta(static_cast<Index>(h.interest[0])) - h.psi0(0);
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.r = sgn * std::sqrt(out.LR);
  }
  return out;
}

namespace detail {

// log|det M| with the sign recorded into flags; throws when M is singular.
inline double checked_log_det(const MatrixXd& M, FlagSet& flags, const char* what) {
  const LogDet ld = log_abs_det(M);
  if (ld.sign == 0) throw DegenerateAdjustmentError(std::string(what) + " is singular");
  if (ld.sign < 0) flags.insert(Flag::negative_determinant);
  return ld.log_abs;
}

// l_hat' - l_tilde' as a row vector times (U_tilde')^-1.
inline VectorXd delta_times_inverse(const SampleSpaceDerivs& d) {
  const VectorXd delta = d.ell_hat_prime - d.ell_tilde_prime;
  Eigen::FullPivLU<MatrixXd> lu(d.U_tilde_prime.transpose());
  if (!lu.isInvertible()) throw DegenerateAdjustmentError("U_tilde' is singular");
  return lu.solve(delta);
}

// log( |J_hat|^1/2 |U'~|^-1 |J~_ww|^1/2 ), shared by gamma and rho.
inline double common_log_factor(const FitResult& fit_hat, const FitResult& fit_tilde, const SampleSpaceDerivs& d,
                                const std::vector<std::size_t>& nuisance, FlagSet& flags) {
  const double ld_hat = checked_log_det(fit_hat.info, flags, "J_hat");
  const double ld_U = checked_log_det(d.U_tilde_prime, flags, "U_tilde'");
  const double ld_tww = checked_log_det(submatrix(fit_tilde.info, nuisance), flags, "J_tilde_ww");
  return 0.5 * ld_hat - ld_U + 0.5 * ld_tww;
}

}  // namespace detail

/// Barndorff-Nielsen's gamma for a scalar interest parameter.
inline double gamma_factor(const FitResult& fit_hat, const FitResult& fit_tilde, const SampleSpaceDerivs& d,
                           const Hypothesis& h, double r, FlagSet& flags) {
  if (h.dim() != 1) throw std::invalid_argument("gamma is defined for scalar interest only");
  if (std::abs(r) < kNearZeroR) {
    flags.insert(Flag::near_zero_r);
    return 1.0;
  }
  const auto nuisance = h.nuisance(static_cast<std::size_t>(fit_hat.theta.size()));
  const double common = detail::common_log_factor(fit_hat, fit_tilde, d, nuisance, flags);
  const double x_psi = detail::delta_times_inverse(d)(static_cast<Index>(h.interest[0]));
  if (x_psi == 0.0 || !std::isfinite(x_psi)) throw DegenerateAdjustmentError("[(l_hat' - l_tilde')' U'^-1]_psi is zero");
  if (r / x_psi < 0.0) flags.insert(Flag::negative_determinant);
  return std::exp(common + std::log(std::abs(r)) - std::log(std::abs(x_psi)));
}

/// Skovgaard's rho.
inline double rho_factor(const FitResult& fit_hat, const FitResult& fit_tilde, const SampleSpaceDerivs& d,
                         const Hypothesis& h, double LR, FlagSet& flags) {
  if (LR < kNearZeroLR) {
    flags.insert(Flag::near_zero_LR);
    return 1.0;
  }
  const std::size_t p = static_cast<std::size_t>(fit_hat.theta.size());
  const double q = static_cast<double>(h.dim());
  const auto nuisance = h.nuisance(p);
  const double common = detail::common_log_factor(fit_hat, fit_tilde, d, nuisance, flags);
  const double ld_jj = detail::checked_log_det(d.J_doubletilde, flags, "J_doubletilde");
  const double ld_jjww = detail::checked_log_det(submatrix(d.J_doubletilde, nuisance), flags, "J_doubletilde_ww");

  const VectorXd& U = fit_tilde.score;
  Eigen::FullPivLU<MatrixXd> lu(d.J_doubletilde);
  const double quad = U.dot(lu.solve(U));
  const double denom = detail::delta_times_inverse(d).dot(U);
  if (quad == 0.0 || denom == 0.0 || !std::isfinite(quad) || !std::isfinite(denom))
    throw DegenerateAdjustmentError("rho numerator or denominator vanishes");
  if (quad < 0.0) flags.insert(Flag::nonpd_info);
  if (denom < 0.0) flags.insert(Flag::negative_determinant);

  const double log_rho = common - 0.5 * ld_jjww + 0.5 * ld_jj + 0.5 * q * std::log(std::abs(quad)) -
                         (0.5 * q - 1.0) * std::log(LR) - std::log(std::abs(denom));
  return std::exp(log_rho);
}

struct AdjustedStatistics {
  std::optional<double> r_star;
  double LR_star;
  double LR_star2;
};

/// r* = r - log(gamma)/r, LR* = LR (1 - log(rho)/LR)^2, LR** = LR - 2 log(rho).
inline AdjustedStatistics adjusted_statistics(double LR, std::optional<double> r, std::optional<double> gamma,
                                              double rho, FlagSet& flags) {
  AdjustedStatistics out{};
  if (r && gamma) {
    out.r_star = std::abs(*r) < kNearZeroR ? *r : *r - std::log(*gamma) / *r;
  }
  if (LR < kNearZeroLR) {
    out.LR_star = LR;
    out.LR_star2 = LR;
    return out;
  }
  const double log_rho = std::log(rho);
  const double inner = 1.0 - log_rho / LR;
  if (inner < 0.0) {
    flags.insert(Flag::LR_star_floored);
    out.LR_star = 0.0;
  } else {
    out.LR_star = LR * inner * inner;
  }
  out.LR_star2 = LR - 2.0 * log_rho;
  if (out.LR_star2 < 0.0) flags.insert(Flag::negative_LR_star2);
  return out;
}

/// Fills the p-value fields of a report whose statistics are already set.
inline void p_values(TestReport& rep) {
  const double q = static_cast<double>(rep.hypothesis.dim());
  rep.p_LR = chi2_sf(rep.LR, q);
  rep.p_LR_star = chi2_sf(rep.LR_star, q);
  rep.p_LR_star2 = chi2_sf(std::max(rep.LR_star2, 0.0), q);
  auto signed_p = [&](double stat) {
    switch (rep.hypothesis.sided) {
      case Sided::lower: return normal_cdf(stat);
      case Sided::upper: return normal_sf(stat);
      case Sided::two: return std::min(1.0, 2.0 * normal_sf(std::abs(stat)));
    }
    return 1.0;
  };
  if (rep.r) rep.p_r = signed_p(*rep.r);
  if (rep.r_star) rep.p_r_star = signed_p(*rep.r_star);
}

struct TestOptions {
  FitOptions fit;
};

namespace detail {

inline bool near_boundary(const ModelSpec& model, const VectorXd& theta) {
  const auto pos = model.positive_params();
  const double scale = std::max(1.0, theta.cwiseAbs().maxCoeff());
  for (std::size_t k = 0; k < pos.size(); ++k)
    if (pos[k] && theta(static_cast<Index>(k)) < 1e-8 * scale) return true;
  return false;
}

}  // namespace detail

/// Complete pipeline: both fits, ancillary, sample-space derivatives,
/// gamma and rho, adjusted statistics and p-values.
inline TestReport run_test(const ModelSpec& model, const EllipticalFamily& family, const Dataset& data,
                           const Hypothesis& h, const TestOptions& opt = {}) {
  const std::size_t p = model.num_params();
  h.validate(p);
  TestReport rep;
  rep.hypothesis = h;

  FitResult hat, tilde;
  try {
    hat = fit(model, family, data, std::nullopt, std::nullopt, opt.fit);
  } catch (const std::exception& e) {
    throw StageError("fit_hat", e.what());
  }
  if (!hat.converged) throw StageError("fit_hat", "unrestricted fit did not converge");
  try {
    VectorXd start = hat.theta;
    for (std::size_t k = 0; k < h.dim(); ++k) start(static_cast<Index>(h.interest[k])) = h.psi0(static_cast<Index>(k));
    tilde = fit(model, family, data, h.restriction(), start, opt.fit);
  } catch (const std::exception& e) {
    throw StageError("fit_tilde", e.what());
  }
  if (!tilde.converged) throw StageError("fit_tilde", "restricted fit did not converge");
  if (tilde.loglik > hat.loglik) {
    // The unrestricted search stopped at a lower local maximum; restart it from theta_tilde.
    FitResult again = fit(model, family, data, std::nullopt, tilde.theta, opt.fit);
    if (again.converged && again.loglik > hat.loglik) hat = std::move(again);
  }

  LikelihoodRatio lr;
  try {
    lr = lr_and_r(hat, tilde, h);
  } catch (const std::exception& e) {
    throw StageError("likelihood_ratio", e.what());
  }
  rep.LR = lr.LR;
  rep.r = lr.r;
  rep.theta_hat = hat.theta;
  rep.theta_tilde = tilde.theta;
  rep.loglik_hat = hat.loglik;
  rep.loglik_tilde = tilde.loglik;
  if (!hat.info_positive_definite) rep.flags.insert(Flag::nonpd_info);
  if (detail::near_boundary(model, hat.theta) || detail::near_boundary(model, tilde.theta))
    rep.flags.insert(Flag::boundary_fit);
  if (hat.near_zero_residuals > 0 || tilde.near_zero_residuals > 0) rep.flags.insert(Flag::near_zero_residual);
  if (hat.info_asymmetry > kInfoAsymmetryWarn || tilde.info_asymmetry > kInfoAsymmetryWarn)
    rep.flags.insert(Flag::info_asymmetry);

  SampleSpaceDerivs derivs;
  try {
    const AncillaryBundle bundle = build_ancillary(hat, data, model);
    const ModelEval eval_tilde = evaluate(model, tilde.theta, data);
    derivs = sample_space_derivs(bundle, eval_tilde, family);
  } catch (const std::exception& e) {
    throw StageError("ancillary", e.what());
  }

  try {
    if (h.dim() == 1) rep.gamma = gamma_factor(hat, tilde, derivs, h, *rep.r, rep.flags);
    rep.rho = rho_factor(hat, tilde, derivs, h, rep.LR, rep.flags);
  } catch (const std::exception& e) {
    throw StageError("adjustment", e.what());
  }

  const AdjustedStatistics adj = adjusted_statistics(rep.LR, rep.r, rep.gamma, rep.rho, rep.flags);
  rep.r_star = adj.r_star;
  rep.LR_star = adj.LR_star;
  rep.LR_star2 = adj.LR_star2;
  p_values(rep);
  return rep;
}

}  // namespace ellip

#endif
