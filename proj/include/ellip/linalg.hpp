#ifndef ELLIP_LINALG_HPP
#define ELLIP_LINALG_HPP

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ellip {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

class CholeskyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower-triangular P with P P^T = S and positive diagonal.
inline MatrixXd cholesky_lower(const MatrixXd& S) {
  if (S.rows() != S.cols()) throw CholeskyError("cholesky_lower: matrix is not square");
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw CholeskyError("cholesky_lower: matrix is not positive definite");
  MatrixXd P = llt.matrixL();
  for (Index k = 0; k < P.rows(); ++k) {
    if (!(P(k, k) > 0.0) || !std::isfinite(P(k, k)))
      throw CholeskyError("cholesky_lower: matrix is not positive definite");
  }
  return P;
}

/// Directional derivative of the Cholesky factor.
///
/// For S(t) = S + t dS with chol(S) = P, returns d/dt chol(S(t)) at t = 0 as
/// P * Phi(P^-1 dS P^-T), where Phi keeps the strict lower triangle and half
/// the diagonal.
inline MatrixXd cholesky_derivative(const MatrixXd& P, const MatrixXd& dS) {
  const Index q = P.rows();
  if (P.cols() != q || dS.rows() != q || dS.cols() != q)
    throw std::invalid_argument("cholesky_derivative: dimension mismatch");
  for (Index k = 0; k < q; ++k) {
    if (P(k, k) == 0.0) throw CholeskyError("cholesky_derivative: singular factor");
  }
  const auto L = P.triangularView<Eigen::Lower>();
  MatrixXd M = L.solve(dS);
  M = L.solve(M.transpose()).transpose();  // P^-1 dS P^-T
  MatrixXd phi = M.triangularView<Eigen::StrictlyLower>();
  phi.diagonal() = 0.5 * M.diagonal();
  MatrixXd dP = L * phi;
  return dP.triangularView<Eigen::Lower>();
}

/// Explicit S^-1 from the lower Cholesky factor, via triangular solves against I.
inline MatrixXd inverse_from_cholesky(const MatrixXd& P) {
  const auto L = P.triangularView<Eigen::Lower>();
  MatrixXd Linv = L.solve(MatrixXd::Identity(P.rows(), P.cols()));
  MatrixXd inv = Linv.transpose() * Linv;
  return 0.5 * (inv + inv.transpose());
}

/// S^-1 x through the factor.
inline VectorXd solve_with_cholesky(const MatrixXd& P, const VectorXd& x) {
  const auto L = P.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(x));
}

struct LogDet {
  double log_abs;  // log |det|; -inf for singular
  int sign;        // -1, 0, +1
};

/// log|det M| with sign, from a partially pivoted LU. Empty matrix -> (0, +1).
inline LogDet log_abs_det(const MatrixXd& M) {
  if (M.rows() == 0) return {0.0, 1};
  Eigen::PartialPivLU<MatrixXd> lu(M);
  const MatrixXd& U = lu.matrixLU();
  double acc = 0.0;
  int sign = static_cast<int>(lu.permutationP().determinant());
  for (Index k = 0; k < U.rows(); ++k) {
    const double d = U(k, k);
    if (d == 0.0 || !std::isfinite(d)) return {-std::numeric_limits<double>::infinity(), 0};
    if (d < 0.0) sign = -sign;
    acc += std::log(std::abs(d));
  }
  return {acc, sign};
}

/// Rows and columns of M picked by idx.
inline MatrixXd submatrix(const MatrixXd& M, std::span<const std::size_t> idx) {
  const Index k = static_cast<Index>(idx.size());
  MatrixXd out(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b) out(a, b) = M(static_cast<Index>(idx[a]), static_cast<Index>(idx[b]));
  return out;
}

inline VectorXd subvector(const VectorXd& v, std::span<const std::size_t> idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (Index a = 0; a < out.size(); ++a) out(a) = v(static_cast<Index>(idx[a]));
  return out;
}

/// Largest |M - M^T| entry relative to the largest |M| entry.
inline double relative_asymmetry(const MatrixXd& M) {
  const double scale = M.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (M - M.transpose()).cwiseAbs().maxCoeff() / scale;
}

}  // namespace ellip

#endif
