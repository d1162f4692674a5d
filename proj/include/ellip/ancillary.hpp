#ifndef ELLIP_ANCILLARY_HPP
#define ELLIP_ANCILLARY_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ellip/families.hpp"
#include "ellip/fit.hpp"
#include "ellip/likelihood.hpp"
#include "ellip/linalg.hpp"
#include "ellip/model.hpp"

namespace ellip {

/// Approximate ancillary a_i = P_hat_i^-1 (Y_i - mu_hat_i) together with the
/// model quantities at theta_hat and the derivatives of P_hat_i in theta_hat.
struct AncillaryBundle {
  ModelEval eval_hat;
  std::vector<VectorXd> a;
  std::vector<std::vector<MatrixXd>> P_hat_deriv;  // [i][r]

  std::size_t size() const { return a.size(); }
  const MatrixXd& P_hat(std::size_t i) const { return eval_hat.obs[i].P; }

  /// R_hat_i: column r is P_hat_i(r) a_i + d_hat_i(r).
  MatrixXd R_hat(std::size_t i) const {
    const ObsEval& e = eval_hat.obs[i];
    MatrixXd R = e.D;
    for (Index r = 0; r < R.cols(); ++r) R.col(r) += P_hat_deriv[i][static_cast<std::size_t>(r)] * a[i];
    return R;
  }

  /// P_hat_i a_i + mu_hat_i, which reproduces Y_i.
  VectorXd reconstruct(std::size_t i) const { return P_hat(i) * a[i] + eval_hat.obs[i].mu; }
};

inline AncillaryBundle build_ancillary(const ModelEval& eval_hat, const Dataset& data) {
  AncillaryBundle b;
  b.eval_hat = eval_hat;
  const std::size_t n = eval_hat.size();
  b.a.resize(n);
  b.P_hat_deriv.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ObsEval& e = eval_hat.obs[i];
    b.a[i] = e.P.triangularView<Eigen::Lower>().solve(data.observations[i].y - e.mu);
    auto& dP = b.P_hat_deriv[i];
    dP.reserve(e.C.size());
    for (const MatrixXd& C : e.C) dP.push_back(cholesky_derivative(e.P, C));
  }
  return b;
}

inline AncillaryBundle build_ancillary(const FitResult& fit_hat, const Dataset& data, const ModelSpec& model) {
  return build_ancillary(evaluate(model, fit_hat.theta, data), data);
}

struct SampleSpaceGradients {
  VectorXd ell_prime;  // d l / d theta_hat at fixed a
  MatrixXd U_prime;    // rows: theta, columns: theta_hat
};

/// l' and U' at the evaluation point, with residuals z_i = P_hat_i a_i + mu_hat_i - mu_i.
inline SampleSpaceGradients sample_space_gradients(const ModelEval& eval_at, const AncillaryBundle& bundle,
                                                   const EllipticalFamily& family) {
  const Index p = eval_at.theta.size();
  SampleSpaceGradients out{VectorXd::Zero(p), MatrixXd::Zero(p, p)};
  if (eval_at.size() != bundle.size()) throw std::invalid_argument("sample_space_gradients: size mismatch");
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const ObsEval& e = eval_at.obs[i];
    const int q = static_cast<int>(e.dim());
    const VectorXd z = bundle.reconstruct(i) - e.mu;
    const VectorXd w = solve_with_cholesky(e.P, z);
    double u = std::max(z.dot(w), 0.0);
    if (family.singular_at_zero()) u = std::max(u, kMinWeightU);
    const Weights wt = weights(family, u, q);
    const MatrixXd R = bundle.R_hat(i);
    if (R.cols() != p) throw std::invalid_argument("sample_space_gradients: parameter count mismatch");

    out.ell_prime += R.transpose() * (-wt.v * w);

    MatrixXd Q(q, p);
    for (Index r = 0; r < p; ++r) {
      const VectorXd Cw = e.C[static_cast<std::size_t>(r)] * w;
      const double dw = e.D.col(r).dot(w);
      const double zAz = -w.dot(Cw);
      Q.col(r) = (2.0 * wt.v_dot * dw - wt.v_dot * zAz) * z + wt.v * e.D.col(r) + wt.v * Cw;
    }
    const MatrixXd SinvR = e.P.triangularView<Eigen::Lower>().transpose().solve(
        e.P.triangularView<Eigen::Lower>().solve(R));
    out.U_prime += Q.transpose() * SinvR;
  }
  return out;
}

/// Observed information at theta_tilde for the likelihood whose MLE is
/// theta_tilde and whose ancillary is a: residuals become P_tilde_i a_i.
inline MatrixXd doubletilde_info(const ModelEval& eval_tilde, const AncillaryBundle& bundle,
                                 const EllipticalFamily& family) {
  std::vector<VectorXd> z(bundle.size());
  for (std::size_t i = 0; i < bundle.size(); ++i) z[i] = eval_tilde.obs[i].P * bundle.a[i];
  return detail::assemble(family, eval_tilde, z, true).info;
}

struct SampleSpaceDerivs {
  VectorXd ell_hat_prime;
  VectorXd ell_tilde_prime;
  MatrixXd U_tilde_prime;
  MatrixXd J_doubletilde;
};

inline SampleSpaceDerivs sample_space_derivs(const AncillaryBundle& bundle, const ModelEval& eval_tilde,
                                             const EllipticalFamily& family) {
  SampleSpaceDerivs d;
  d.ell_hat_prime = sample_space_gradients(bundle.eval_hat, bundle, family).ell_prime;
  const SampleSpaceGradients at_tilde = sample_space_gradients(eval_tilde, bundle, family);
  d.ell_tilde_prime = at_tilde.ell_prime;
  d.U_tilde_prime = at_tilde.U_prime;
  d.J_doubletilde = doubletilde_info(eval_tilde, bundle, family);
  return d;
}

}  // namespace ellip

#endif
