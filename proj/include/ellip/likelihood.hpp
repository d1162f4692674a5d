#ifndef ELLIP_LIKELIHOOD_HPP
#define ELLIP_LIKELIHOOD_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ellip/families.hpp"
#include "ellip/linalg.hpp"
#include "ellip/model.hpp"

namespace ellip {

/// Floor applied to u before computing weights of families that are singular at 0.
inline constexpr double kMinWeightU = 1e-12;

/// Raw J asymmetry above this (relative) is reported as a diagnostic.
inline constexpr double kInfoAsymmetryWarn = 1e-8;

struct ScoreInfo {
  double loglik = 0.0;
  VectorXd score;
  MatrixXd info;
  VectorXd u;
  VectorXd v;
  VectorXd v_dot;
  double info_asymmetry = 0.0;          // before symmetrization
  std::size_t near_zero_residuals = 0;  // observations where u was clamped
};

/// Y_i - mu_i(theta) for every observation.
inline std::vector<VectorXd> residuals(const ModelEval& eval, const Dataset& data) {
  std::vector<VectorXd> z(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) z[i] = data.observations[i].y - eval.obs[i].mu;
  return z;
}

namespace detail {

inline double log_det_from_factor(const MatrixXd& P) {
  return 2.0 * P.diagonal().array().log().sum();
}

/// Log-likelihood, score and (optionally) observed information at the model
/// evaluation, with the residual of observation i taken from z[i].
///
/// Passing z_i = Y_i - mu_i gives the ordinary quantities; passing the
/// ancillary reconstruction P_i a_i gives the information of the likelihood
/// in which the MLE coincides with the evaluation point.
inline ScoreInfo assemble(const EllipticalFamily& family, const ModelEval& eval, const std::vector<VectorXd>& z,
                          bool want_info) {
  const std::size_t n = eval.size();
  const Index p = eval.theta.size();
  ScoreInfo out;
  out.score = VectorXd::Zero(p);
  if (want_info) out.info = MatrixXd::Zero(p, p);
  out.u.resize(static_cast<Index>(n));
  out.v.resize(static_cast<Index>(n));
  out.v_dot.resize(static_cast<Index>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const ObsEval& e = eval.obs[i];
    const VectorXd& zi = z[i];
    const int q = static_cast<int>(e.dim());
    const VectorXd w = solve_with_cholesky(e.P, zi);
    const double u = std::max(zi.dot(w), 0.0);
    double u_w = u;
    if (family.singular_at_zero() && u < kMinWeightU) {
      u_w = kMinWeightU;
      ++out.near_zero_residuals;
    }
    const Weights wt = weights(family, u_w, q);
    const double v = wt.v, vd = wt.v_dot;
    out.u(static_cast<Index>(i)) = u;
    out.v(static_cast<Index>(i)) = v;
    out.v_dot(static_cast<Index>(i)) = vd;
    out.loglik += -0.5 * log_det_from_factor(e.P) + log_g(family, u, q);

    const MatrixXd Sinv = inverse_from_cholesky(e.P);
    // a_r = d_r' Sigma^-1 z,  C_r w,  b_r = z' A_r z = -w' C_r w
    const VectorXd a = e.D.transpose() * w;
    MatrixXd Cw(q, p);
    VectorXd b(p);
    VectorXd trSC(p);
    for (Index r = 0; r < p; ++r) {
      const MatrixXd& C = e.C[static_cast<std::size_t>(r)];
      Cw.col(r) = C * w;
      b(r) = -w.dot(Cw.col(r));
      trSC(r) = (Sinv.cwiseProduct(C)).sum();
    }
    // U_r = v d_r' Sigma^-1 z - 1/2 tr(C_r Sigma^-1 (Sigma - v z z') Sigma^-1)
    out.score += v * a - 0.5 * (trSC + v * b);

    if (!want_info) continue;
    const MatrixXd SinvD = Sinv * e.D;
    const MatrixXd DtSinvD = e.D.transpose() * SinvD;
    const MatrixXd CwSinvD = Cw.transpose() * SinvD;     // (C_r w)' Sigma^-1 d_s
    const MatrixXd kappa = Cw.transpose() * Sinv * Cw;   // (C_r w)' Sigma^-1 (C_s w)
    std::vector<MatrixXd> SC(static_cast<std::size_t>(p));
    for (Index r = 0; r < p; ++r) SC[static_cast<std::size_t>(r)] = Sinv * e.C[static_cast<std::size_t>(r)];

    for (Index r = 0; r < p; ++r) {
      for (Index s = 0; s < p; ++s) {
        const double tau = (SC[static_cast<std::size_t>(r)].cwiseProduct(SC[static_cast<std::size_t>(s)].transpose())).sum();
        double jrs = vd * (2.0 * a(r) * a(s) - a(r) * b(s) - b(r) * a(s) + 0.5 * b(r) * b(s)) +
                     v * (DtSinvD(r, s) + CwSinvD(r, s) + CwSinvD(s, r) + kappa(r, s)) - 0.5 * tau;
        if (!e.C2.empty()) {
          const MatrixXd& C2 = e.C2[static_cast<std::size_t>(s * p + r)];
          jrs += 0.5 * (Sinv.cwiseProduct(C2)).sum() - 0.5 * v * w.dot(C2 * w);
        }
        if (!e.d2.empty()) jrs -= v * w.dot(e.d2[static_cast<std::size_t>(s * p + r)]);
        out.info(r, s) += jrs;
      }
    }
  }
  if (want_info) {
    out.info_asymmetry = relative_asymmetry(out.info);
    out.info = (0.5 * (out.info + out.info.transpose())).eval();
  }
  return out;
}

}  // namespace detail

/// Log-likelihood, score and observed information in one pass.
inline ScoreInfo score_info(const EllipticalFamily& family, const ModelEval& eval, const Dataset& data,
                            bool want_info = true) {
  return detail::assemble(family, eval, residuals(eval, data), want_info);
}

inline double loglik(const EllipticalFamily& family, const ModelEval& eval, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const ObsEval& e = eval.obs[i];
    const VectorXd z = data.observations[i].y - e.mu;
    const double u = std::max(z.dot(solve_with_cholesky(e.P, z)), 0.0);
    total += -0.5 * detail::log_det_from_factor(e.P) + log_g(family, u, static_cast<int>(e.dim()));
  }
  return total;
}

inline VectorXd score(const EllipticalFamily& family, const ModelEval& eval, const Dataset& data) {
  return score_info(family, eval, data, false).score;
}

inline MatrixXd observed_info(const EllipticalFamily& family, const ModelEval& eval, const Dataset& data) {
  return score_info(family, eval, data, true).info;
}

}  // namespace ellip

#endif
