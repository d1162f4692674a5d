#ifndef ELLIP_FIT_HPP
#define ELLIP_FIT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ellip/errors.hpp"
#include "ellip/families.hpp"
#include "ellip/likelihood.hpp"
#include "ellip/model.hpp"
#include "ellip/random.hpp"

namespace ellip {

struct FitOptions {
  double score_tol = 1e-8;   // on ||U_free||_inf / (1 + |loglik|)
  double step_tol = 1e-10;   // relative parameter step
  int max_iterations = 500;
  int restarts = 5;          // jittered restarts after a failed attempt
  std::uint64_t jitter_seed = 0x5eed;
};

/// Parameters held fixed during a restricted (null) fit.
struct Restriction {
  std::vector<std::size_t> indices;
  VectorXd values;
};

struct FitResult {
  VectorXd theta;
  double loglik = -std::numeric_limits<double>::infinity();
  VectorXd score;            // full score vector at theta
  double score_norm = std::numeric_limits<double>::infinity();  // over the free block
  MatrixXd info;             // observed information at theta (natural scale)
  VectorXd std_errors;       // sqrt(diag(info^-1)); NaN when info is not PD
  bool converged = false;
  int iterations = 0;
  bool restricted = false;
  bool info_positive_definite = false;
  double info_asymmetry = 0.0;
  std::size_t near_zero_residuals = 0;
};

namespace detail {

struct Transform {
  std::vector<std::size_t> free;  // indices into theta that are optimized
  std::vector<bool> log_scale;    // per free index
  VectorXd fixed_theta;           // template carrying the fixed values

  VectorXd to_theta(const VectorXd& phi) const {
    VectorXd theta = fixed_theta;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double x = phi(static_cast<Index>(k));
      theta(static_cast<Index>(free[k])) = log_scale[k] ? std::exp(x) : x;
    }
    return theta;
  }

  VectorXd to_phi(const VectorXd& theta) const {
    VectorXd phi(static_cast<Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double x = theta(static_cast<Index>(free[k]));
      phi(static_cast<Index>(k)) = log_scale[k] ? std::log(x) : x;
    }
    return phi;
  }
};

struct Point {
  bool ok = false;
  VectorXd phi;
  VectorXd theta;
  double f = std::numeric_limits<double>::infinity();  // -loglik
  VectorXd g;                                          // gradient of f in phi
  MatrixXd H;                                          // Hessian of f in phi
  ScoreInfo si;
  double score_norm = std::numeric_limits<double>::infinity();
};

inline Point evaluate_point(const ModelSpec& model, const EllipticalFamily& family, const Dataset& data,
                            const Transform& tr, const VectorXd& phi) {
  Point pt;
  pt.phi = phi;
  if (!phi.allFinite()) return pt;
  pt.theta = tr.to_theta(phi);
  try {
    const ModelEval ev = evaluate(model, pt.theta, data);
    pt.si = score_info(family, ev, data, true);
  } catch (const std::exception&) {
    return pt;
  }
  if (!std::isfinite(pt.si.loglik) || !pt.si.score.allFinite() || !pt.si.info.allFinite()) return pt;
  const Index m = static_cast<Index>(tr.free.size());
  pt.f = -pt.si.loglik;
  pt.g.resize(m);
  pt.H.resize(m, m);
  VectorXd jac(m);
  pt.score_norm = 0.0;
  for (Index k = 0; k < m; ++k) {
    const Index idx = static_cast<Index>(tr.free[static_cast<std::size_t>(k)]);
    jac(k) = tr.log_scale[static_cast<std::size_t>(k)] ? pt.theta(idx) : 1.0;
    pt.g(k) = -pt.si.score(idx) * jac(k);
    pt.score_norm = std::max(pt.score_norm, std::abs(pt.si.score(idx)));
  }
  for (Index k = 0; k < m; ++k) {
    const Index ik = static_cast<Index>(tr.free[static_cast<std::size_t>(k)]);
    for (Index l = 0; l < m; ++l) {
      const Index il = static_cast<Index>(tr.free[static_cast<std::size_t>(l)]);
      pt.H(k, l) = pt.si.info(ik, il) * jac(k) * jac(l);
    }
    if (tr.log_scale[static_cast<std::size_t>(k)]) pt.H(k, k) -= pt.si.score(ik) * jac(k);
  }
  pt.ok = true;
  return pt;
}

inline double relative_step(const Transform& tr, const VectorXd& from, const VectorXd& to) {
  double rel = 0.0;
  for (std::size_t k = 0; k < tr.free.size(); ++k) {
    const Index idx = static_cast<Index>(tr.free[k]);
    const double scale = tr.log_scale[k] ? std::abs(from(idx)) : std::max(1.0, std::abs(from(idx)));
    rel = std::max(rel, std::abs(to(idx) - from(idx)) / scale);
  }
  return rel;
}

struct Attempt {
  Point best;
  bool converged = false;
  int iterations = 0;
};

// Damped Newton on the exact Hessian when it is positive definite, BFGS
// direction otherwise; backtracking Armijo line search in both cases.
inline Attempt minimize(const ModelSpec& model, const EllipticalFamily& family, const Dataset& data,
                        const Transform& tr, const VectorXd& phi0, const FitOptions& opt) {
  Attempt out;
  Point cur = evaluate_point(model, family, data, tr, phi0);
  if (!cur.ok) return out;
  const Index m = cur.phi.size();
  MatrixXd Binv = MatrixXd::Identity(m, m);
  bool binv_scaled = false;
  constexpr double kMaxLogStep = 3.0;

  auto score_ok = [&](const Point& pt) { return pt.score_norm < opt.score_tol * (1.0 + std::abs(pt.f)); };

  if (m == 0) {
    out.best = cur;
    out.converged = true;
    return out;
  }

  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    VectorXd dir;
    bool newton = false;
    Eigen::LLT<MatrixXd> llt(cur.H);
    if (llt.info() == Eigen::Success) {
      dir = -llt.solve(cur.g);
      newton = dir.allFinite();
    }
    if (!newton) {
      if (!binv_scaled) {
        const double scale = 1.0 / std::max(1.0, cur.H.diagonal().cwiseAbs().maxCoeff());
        Binv = scale * MatrixXd::Identity(m, m);
        binv_scaled = true;
      }
      dir = -Binv * cur.g;
    }
    if (!(cur.g.dot(dir) < 0.0)) {
      dir = -cur.g / std::max(1.0, cur.H.diagonal().cwiseAbs().maxCoeff());
      newton = false;
    }
    for (Index k = 0; k < m; ++k) {
      if (tr.log_scale[static_cast<std::size_t>(k)] && std::abs(dir(k)) > kMaxLogStep)
        dir *= kMaxLogStep / std::abs(dir(k));
    }

    if (score_ok(cur) && relative_step(tr, cur.theta, tr.to_theta(cur.phi + dir)) < opt.step_tol) {
      out.converged = true;
      break;
    }

    const double slope = cur.g.dot(dir);
    double t = 1.0;
    Point next;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      next = evaluate_point(model, family, data, tr, cur.phi + t * dir);
      if (!next.ok) continue;
      if (next.f <= cur.f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      // Objective flat to rounding: accept when the gradient still shrinks.
      if (std::abs(next.f - cur.f) <= 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur.f)) &&
          next.g.norm() < cur.g.norm()) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (score_ok(cur)) out.converged = true;
      break;
    }
    const VectorXd s = next.phi - cur.phi;
    const VectorXd y = next.g - cur.g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!binv_scaled) {
        Binv = (sy / y.squaredNorm()) * MatrixXd::Identity(m, m);
        binv_scaled = true;
      }
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(m, m);
      Binv = (I - rho * s * y.transpose()) * Binv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const double step = relative_step(tr, cur.theta, next.theta);
    cur = std::move(next);
    if (score_ok(cur) && step < opt.step_tol) {
      out.converged = true;
      break;
    }
  }
  out.best = std::move(cur);
  return out;
}

inline VectorXd jitter(const ModelSpec& model, const VectorXd& theta, const std::vector<std::size_t>& free,
                       RandomStream& rng) {
  VectorXd out = theta;
  const auto pos = model.positive_params();
  for (std::size_t k : free) {
    const Index i = static_cast<Index>(k);
    if (pos[k])
      out(i) = theta(i) * std::exp(0.5 * rng.normal());
    else
      out(i) = theta(i) + 0.1 * rng.normal() * (1.0 + std::abs(theta(i)));
  }
  return out;
}

}  // namespace detail

/// Maximum-likelihood fit of theta; with a restriction, the restricted
/// parameters are frozen at their values and only the rest are optimized.
///
/// Non-convergence is reported through FitResult::converged. A FitError is
/// thrown only when no attempted start yields a finite log-likelihood.
inline FitResult fit(const ModelSpec& model, const EllipticalFamily& family, const Dataset& data,
                     const std::optional<Restriction>& restriction = std::nullopt,
                     const std::optional<VectorXd>& start = std::nullopt, const FitOptions& opt = {}) {
  const std::size_t p = model.num_params();
  model.check_data(data);
  if (!(p < data.size()))
    throw FitError("need more observations than parameters (p = " + std::to_string(p) + ", n = " +
                   std::to_string(data.size()) + ")");

  VectorXd theta0 = start ? *start : model.start_values(data);
  if (static_cast<std::size_t>(theta0.size()) != p) throw FitError("start vector has the wrong length");

  detail::Transform tr;
  tr.fixed_theta = theta0;
  std::vector<bool> is_fixed(p, false);
  if (restriction) {
    if (restriction->indices.size() != static_cast<std::size_t>(restriction->values.size()))
      throw FitError("restriction indices and values differ in length");
    for (std::size_t k = 0; k < restriction->indices.size(); ++k) {
      const std::size_t idx = restriction->indices[k];
      if (idx >= p) throw FitError("restricted index out of range");
      is_fixed[idx] = true;
      tr.fixed_theta(static_cast<Index>(idx)) = restriction->values(static_cast<Index>(k));
    }
  }
  const auto pos = model.positive_params();
  for (std::size_t k = 0; k < p; ++k) {
    if (is_fixed[k]) continue;
    tr.free.push_back(k);
    tr.log_scale.push_back(pos[k]);
  }
  theta0 = tr.fixed_theta;

  RandomStream rng(opt.jitter_seed);
  detail::Attempt best;
  bool any_ok = false;
  int total_iterations = 0;
  for (int attempt = 0; attempt <= opt.restarts; ++attempt) {
    VectorXd phi_start;
    const VectorXd th = attempt == 0 ? theta0 : detail::jitter(model, theta0, tr.free, rng);
    bool valid = true;
    for (std::size_t k = 0; k < tr.free.size(); ++k)
      if (tr.log_scale[k] && !(th(static_cast<Index>(tr.free[k])) > 0.0)) valid = false;
    if (!valid) continue;
    phi_start = tr.to_phi(th);
    detail::Attempt a = detail::minimize(model, family, data, tr, phi_start, opt);
    total_iterations += a.iterations;
    if (!a.best.ok) continue;
    if (!any_ok || (a.converged && !best.converged) ||
        (a.converged == best.converged && a.best.f < best.best.f)) {
      best = std::move(a);
      any_ok = true;
    }
    if (best.converged) break;
  }
  if (!any_ok) throw FitError("log-likelihood is not finite at any start value");

  FitResult res;
  const detail::Point& pt = best.best;
  res.theta = pt.theta;
  res.loglik = pt.si.loglik;
  res.score = pt.si.score;
  res.score_norm = pt.score_norm;
  res.info = pt.si.info;
  res.converged = best.converged;
  res.iterations = total_iterations;
  res.restricted = restriction.has_value();
  res.info_asymmetry = pt.si.info_asymmetry;
  res.near_zero_residuals = pt.si.near_zero_residuals;
  Eigen::LLT<MatrixXd> llt(res.info);
  res.info_positive_definite = llt.info() == Eigen::Success;
  res.std_errors = VectorXd::Constant(static_cast<Index>(p), std::numeric_limits<double>::quiet_NaN());
  if (res.info_positive_definite) {
    const MatrixXd inv = llt.solve(MatrixXd::Identity(static_cast<Index>(p), static_cast<Index>(p)));
    res.std_errors = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return res;
}

}  // namespace ellip

#endif
