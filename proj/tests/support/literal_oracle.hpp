#ifndef ELLIP_TESTS_LITERAL_ORACLE_HPP
#define ELLIP_TESTS_LITERAL_ORACLE_HPP

// Independent, deliberately naive transcription of the adjusted likelihood
// ratio statistics. Nothing here calls into the library: the two test models,
// the density generator and its weights, the Cholesky factor and its
// derivative (Smith's recursion), the score in its F'Hs Kronecker form, the
// observed information, the sample-space derivatives, gamma and rho are all
// written out term by term with explicit inverses and plain determinants.
//
// Only the two maximizers theta_hat and theta_tilde are taken as inputs.
//
// Arithmetic is carried out in long double so the reference stays accurate
// on the badly conditioned scatter matrices of the mixed model; the entry
// points at the bottom take and return double.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Real = long double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

enum class Dist { normal, t, pe };

struct Family {
  Dist dist = Dist::normal;
  double nu = 0.0;
  double lambda = 1.0;
};

template <typename T>
T log_g(const Family& f, T u, int q) {
  const T pi = 3.14159265358979323846264338327950288L;
  const T nu = f.nu, lambda = f.lambda, h = T(q) / 2;
  switch (f.dist) {
    case Dist::normal:
      return -u / 2 - h * std::log(2 * pi);
    case Dist::t:
      return std::lgamma((nu + q) / 2) - h * std::log(pi) - h * std::log(nu) - (nu + q) / 2 * std::log(1 + u / nu) -
             std::lgamma(nu / 2);
    case Dist::pe:
      return std::log(lambda) + std::lgamma(h) - q / (2 * lambda) * std::log(T(2)) - h * std::log(pi) -
             std::pow(u, lambda) / 2 - std::lgamma(q / (2 * lambda));
  }
  return 0;
}

// v = -2 W_g(u) and v_dot = -2 W_g'(u)
inline Real v_of(const Family& f, Real u, int q) {
  const Real nu = f.nu, lambda = f.lambda;
  if (f.dist == Dist::normal) return 1;
  if (f.dist == Dist::t) return (nu + q) / (nu + u);
  return lambda * std::pow(u, lambda - 1);
}

inline Real vdot_of(const Family& f, Real u, int q) {
  const Real nu = f.nu, lambda = f.lambda;
  if (f.dist == Dist::normal) return 0;
  if (f.dist == Dist::t) return -(nu + q) / ((nu + u) * (nu + u));
  return lambda * (lambda - 1) * std::pow(u, lambda - 2);
}

// Everything about one observation at one parameter value.
struct Obs {
  Vec mu;
  Mat Sigma;
  std::vector<Vec> d;                  // d_(r)
  std::vector<std::vector<Vec>> d2;    // d_(sr)
  std::vector<Mat> C;                  // C_(r)
  std::vector<std::vector<Mat>> C2;    // C_(sr)
};

// Model 1: mu = 1 / (1 + b0 + b1 x1 + b2 x2 + b3 x2^2), Sigma = sigma2.
inline Obs model1(Real x1, Real x2, const Vec& th) {
  const int p = 5;
  Obs o;
  const Real g[4] = {1, x1, x2, x2 * x2};
  Real eta = 1;
  for (int k = 0; k < 4; ++k) eta += th(k) * g[k];
  o.mu = Vec::Constant(1, 1 / eta);
  o.Sigma = Mat::Constant(1, 1, th(4));
  o.d.assign(p, Vec::Zero(1));
  o.d2.assign(p, std::vector<Vec>(p, Vec::Zero(1)));
  o.C.assign(p, Mat::Zero(1, 1));
  o.C2.assign(p, std::vector<Mat>(p, Mat::Zero(1, 1)));
  for (int r = 0; r < 4; ++r) {
    o.d[r](0) = -g[r] / (eta * eta);
    for (int s = 0; s < 4; ++s) o.d2[s][r](0) = 2 * g[r] * g[s] / (eta * eta * eta);
  }
  o.C[4](0, 0) = 1;
  return o;
}

// Model 2: mu = X beta, Sigma = Z Delta Z' + sigma2 I, X = [1 x1 x2 x3 x4], Z = [1 x1].
inline Obs model2(const Mat& x, const Vec& th) {
  const int p = 9;
  const int q = static_cast<int>(x.rows());
  Mat X(q, 5), Z(q, 2);
  for (int j = 0; j < q; ++j) {
    X(j, 0) = 1;
    for (int k = 0; k < 4; ++k) X(j, k + 1) = x(j, k);
    Z(j, 0) = 1;
    Z(j, 1) = x(j, 0);
  }
  Mat Delta(2, 2);
  Delta << th(5), th(6), th(6), th(7);
  Obs o;
  o.mu = X * th.head(5);
  o.Sigma = Z * Delta * Z.transpose() + th(8) * Mat::Identity(q, q);
  o.d.assign(p, Vec::Zero(q));
  o.d2.assign(p, std::vector<Vec>(p, Vec::Zero(q)));
  o.C.assign(p, Mat::Zero(q, q));
  o.C2.assign(p, std::vector<Mat>(p, Mat::Zero(q, q)));
  for (int r = 0; r < 5; ++r) o.d[r] = X.col(r);
  Mat E1(2, 2), E2(2, 2), E3(2, 2);
  E1 << 1, 0, 0, 0;
  E2 << 0, 1, 1, 0;
  E3 << 0, 0, 0, 1;
  o.C[5] = Z * E1 * Z.transpose();
  o.C[6] = Z * E2 * Z.transpose();
  o.C[7] = Z * E3 * Z.transpose();
  o.C[8] = Mat::Identity(q, q);
  return o;
}

// Cholesky-Banachiewicz, row by row.
inline Mat cholesky(const Mat& S) {
  const int n = static_cast<int>(S.rows());
  Mat L = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      Real sum = S(i, j);
      for (int k = 0; k < j; ++k) sum -= L(i, k) * L(j, k);
      if (i == j) {
        if (!(sum > 0)) throw std::runtime_error("oracle cholesky: not positive definite");
        L(i, i) = std::sqrt(sum);
      } else {
        L(i, j) = sum / L(j, j);
      }
    }
  }
  return L;
}

// Smith's forward-mode recursion for dL given L and dS.
inline Mat cholesky_derivative(const Mat& L, const Mat& dS) {
  const int n = static_cast<int>(L.rows());
  Mat dL = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    Real s = dS(j, j);
    for (int k = 0; k < j; ++k) s -= 2 * L(j, k) * dL(j, k);
    dL(j, j) = s / (2 * L(j, j));
    for (int i = j + 1; i < n; ++i) {
      Real t = dS(i, j);
      for (int k = 0; k < j; ++k) t -= dL(i, k) * L(j, k) + L(i, k) * dL(j, k);
      t -= L(i, j) * dL(j, j);
      dL(i, j) = t / L(j, j);
    }
  }
  return dL;
}

inline Vec vec(const Mat& M) { return Eigen::Map<const Vec>(M.data(), M.size()); }

inline Mat kron(const Mat& A, const Mat& B) {
  Mat K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

struct Problem {
  int model = 1;                 // 1 or 2
  Family family;
  std::vector<Vec> y;
  std::vector<Mat> x;            // model 1: 1 x 2 rows (x1, x2); model 2: q_i x 4
  int p() const { return model == 1 ? 5 : 9; }
  Obs obs(std::size_t i, const Vec& th) const {
    return model == 1 ? model1(x[i](0, 0), x[i](0, 1), th) : model2(x[i], th);
  }
};

inline Real loglik(const Problem& pr, const Vec& th) {
  Real l = 0;
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th);
    const Vec z = pr.y[i] - o.mu;
    const Real u = z.dot(o.Sigma.inverse() * z);
    l += -0.5 * std::log(o.Sigma.determinant()) + log_g(pr.family, u, static_cast<int>(z.size()));
  }
  return l;
}

// U = F' H s, with F_i = (D_i; V_i), H_i = blockdiag(Sigma_i, 2 Sigma_i (x) Sigma_i)^-1,
// s_i = (v z; -vec(Sigma_i - v z z')).
inline Vec score_fhs(const Problem& pr, const Vec& th) {
  const int p = pr.p();
  Vec U = Vec::Zero(p);
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th);
    const int q = static_cast<int>(o.mu.size());
    const Vec z = pr.y[i] - o.mu;
    const Real u = z.dot(o.Sigma.inverse() * z);
    const Real v = v_of(pr.family, u, q);
    Mat F(q + q * q, p);
    for (int r = 0; r < p; ++r) {
      F.block(0, r, q, 1) = o.d[r];
      F.block(q, r, q * q, 1) = vec(o.C[r]);
    }
    // blockdiag(Sigma, 2 Sigma (x) Sigma)^-1 = blockdiag(Sigma^-1, 1/2 Sigma^-1 (x) Sigma^-1); inverting
    // the q^2 x q^2 block directly squares the condition number.
    const Mat Si = o.Sigma.inverse();
    Mat H = Mat::Zero(q + q * q, q + q * q);
    H.topLeftCorner(q, q) = Si;
    H.bottomRightCorner(q * q, q * q) = kron(Si, Si) / 2;
    Vec s(q + q * q);
    s.head(q) = v * z;
    s.tail(q * q) = -vec(o.Sigma - v * z * z.transpose());
    U += F.transpose() * H * s;
  }
  return U;
}

// Observed information from T, B and E with residuals z_i.
inline Mat information(const Problem& pr, const Vec& th, const std::vector<Vec>& zs) {
  const int p = pr.p();
  Mat J = Mat::Zero(p, p);
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th);
    const int q = static_cast<int>(o.mu.size());
    const Vec& z = zs[i];
    const Mat Si = o.Sigma.inverse();
    const Real u = z.dot(Si * z);
    const Real v = v_of(pr.family, u, q);
    const Real vd = vdot_of(pr.family, u, q);
    std::vector<Mat> A(p);
    for (int r = 0; r < p; ++r) A[r] = -Si * o.C[r] * Si;
    for (int r = 0; r < p; ++r) {
      const Real zAz = z.dot(A[r] * z);
      const Real dSz = o.d[r].dot(Si * z);
      const RowVec Tt = -vd * zAz * z.transpose() + 2 * vd * dSz * z.transpose() +
                                    v * o.d[r].transpose() + v * z.transpose() * Si * o.C[r];
      const Mat B = -vd * dSz * z * z.transpose() + 0.5 * vd * zAz * z * z.transpose() -
                    v * z * o.d[r].transpose() - 0.5 * o.C[r];
      for (int s = 0; s < p; ++s) {
        const Mat Asr = -2 * A[r] * o.C[s] * Si - Si * o.C2[s][r] * Si;
        const Real E = -0.5 * (Asr * (o.Sigma - v * z * z.transpose())).trace() - v * z.dot(Si * o.d2[s][r]);
        J(r, s) += (Tt * Si * o.d[s])(0) + (B * A[s]).trace() + E;
      }
    }
  }
  return J;
}

inline std::vector<Vec> residuals(const Problem& pr, const Vec& th) {
  std::vector<Vec> zs;
  for (std::size_t i = 0; i < pr.y.size(); ++i) zs.push_back(pr.y[i] - pr.obs(i, th).mu);
  return zs;
}

struct Ancillary {
  std::vector<Vec> a;
  std::vector<Mat> P_hat;
  std::vector<Vec> mu_hat;
  std::vector<std::vector<Mat>> dP_hat;  // [i][r]
  std::vector<std::vector<Vec>> d_hat;   // [i][r]
};

inline Ancillary ancillary(const Problem& pr, const Vec& th_hat) {
  Ancillary an;
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th_hat);
    const Mat P = cholesky(o.Sigma);
    an.P_hat.push_back(P);
    an.mu_hat.push_back(o.mu);
    an.a.push_back(P.inverse() * (pr.y[i] - o.mu));
    std::vector<Mat> dP;
    for (int r = 0; r < pr.p(); ++r) dP.push_back(cholesky_derivative(P, o.C[r]));
    an.dP_hat.push_back(dP);
    an.d_hat.push_back(o.d);
  }
  return an;
}

// l'_r = sum (a' P_hat(r)' + d_hat(r)') Sigma^-1 (-v z)
inline Vec ell_prime(const Problem& pr, const Ancillary& an, const Vec& th) {
  const int p = pr.p();
  Vec l = Vec::Zero(p);
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th);
    const int q = static_cast<int>(o.mu.size());
    const Mat Si = o.Sigma.inverse();
    const Vec z = an.P_hat[i] * an.a[i] + an.mu_hat[i] - o.mu;
    const Real v = v_of(pr.family, z.dot(Si * z), q);
    for (int r = 0; r < p; ++r) {
      const Vec R = an.dP_hat[i][r] * an.a[i] + an.d_hat[i][r];
      l(r) += R.dot(Si * (-v * z));
    }
  }
  return l;
}

// U'_rs = sum (a' P_hat(s)' + d_hat(s)') Sigma^-1 Q_r
inline Mat u_prime(const Problem& pr, const Ancillary& an, const Vec& th) {
  const int p = pr.p();
  Mat Up = Mat::Zero(p, p);
  for (std::size_t i = 0; i < pr.y.size(); ++i) {
    const Obs o = pr.obs(i, th);
    const int q = static_cast<int>(o.mu.size());
    const Mat Si = o.Sigma.inverse();
    const Vec z = an.P_hat[i] * an.a[i] + an.mu_hat[i] - o.mu;
    const Real u = z.dot(Si * z);
    const Real v = v_of(pr.family, u, q);
    const Real vd = vdot_of(pr.family, u, q);
    for (int r = 0; r < p; ++r) {
      const Mat A = -Si * o.C[r] * Si;
      const Vec Q = 2 * vd * z * o.d[r].dot(Si * z) + v * o.d[r] - vd * z * z.dot(A * z) + v * o.C[r] * Si * z;
      for (int s = 0; s < p; ++s) {
        const Vec R = an.dP_hat[i][s] * an.a[i] + an.d_hat[i][s];
        Up(r, s) += R.dot(Si * Q);
      }
    }
  }
  return Up;
}

// Observed information at theta_tilde with residuals P_tilde a.
inline Mat j_doubletilde(const Problem& pr, const Ancillary& an, const Vec& th_tilde) {
  std::vector<Vec> zs;
  for (std::size_t i = 0; i < pr.y.size(); ++i) zs.push_back(cholesky(pr.obs(i, th_tilde).Sigma) * an.a[i]);
  return information(pr, th_tilde, zs);
}

inline Mat sub(const Mat& M, const std::vector<int>& idx) {
  Mat S(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) S(a, b) = M(idx[a], idx[b]);
  return S;
}

inline Real det_abs(const Mat& M) { return M.size() == 0 ? Real(1) : std::abs(M.determinant()); }

struct Result {
  double LR, r, gamma, rho, r_star, LR_star, LR_star2, LR_star_inner;
};

struct ResultL {
  Real LR, r, gamma, rho, r_star, LR_star, LR_star2, LR_star_inner;
};

/// interest: indices of psi; theta_hat, theta_tilde: the two maximizers.
inline ResultL statistics(const Problem& pr, const Vec& th_hat, const Vec& th_tilde, const std::vector<int>& interest) {
  const int p = pr.p();
  const int q = static_cast<int>(interest.size());
  std::vector<int> nuis;
  for (int k = 0; k < p; ++k)
    if (std::find(interest.begin(), interest.end(), k) == interest.end()) nuis.push_back(k);

  ResultL res{};
  res.LR = 2 * (loglik(pr, th_hat) - loglik(pr, th_tilde));
  if (q == 1) res.r = (th_hat(interest[0]) - th_tilde(interest[0]) >= 0 ? 1 : -1) * std::sqrt(std::max(res.LR, Real(0)));

  const Mat J_hat = information(pr, th_hat, residuals(pr, th_hat));
  const Mat J_tilde = information(pr, th_tilde, residuals(pr, th_tilde));
  const Ancillary an = ancillary(pr, th_hat);
  const Vec l_hat = ell_prime(pr, an, th_hat);
  const Vec l_tilde = ell_prime(pr, an, th_tilde);
  const Mat Up = u_prime(pr, an, th_tilde);
  const Mat JJ = j_doubletilde(pr, an, th_tilde);
  const Vec U = score_fhs(pr, th_tilde);

  const RowVec row = (l_hat - l_tilde).transpose() * Up.inverse();
  const Real common = std::sqrt(det_abs(J_hat)) / det_abs(Up) * std::sqrt(det_abs(sub(J_tilde, nuis)));
  if (q == 1) {
    res.gamma = common * std::abs(res.r / row(interest[0]));
    res.r_star = res.r - std::log(res.gamma) / res.r;
  }
  // Exponent q/2 on the quadratic form: with p/2 the factor would not be
  // dimensionless and Gaussian linear models would not give rho = 1.
  const Real quad = U.dot(JJ.inverse() * U);
  res.rho = common / std::sqrt(det_abs(sub(JJ, nuis))) * std::sqrt(det_abs(JJ)) * std::pow(std::abs(quad), Real(q) / 2) /
            (std::pow(res.LR, Real(q) / 2 - 1) * std::abs(row.dot(U)));
  res.LR_star_inner = 1 - std::log(res.rho) / res.LR;
  res.LR_star = res.LR * res.LR_star_inner * res.LR_star_inner;
  res.LR_star2 = res.LR - 2 * std::log(res.rho);
  return res;
}

// double entry points

inline Vec widen(const Eigen::VectorXd& v) { return v.cast<Real>(); }

inline double loglik(const Problem& pr, const Eigen::VectorXd& th) { return static_cast<double>(loglik(pr, widen(th))); }

inline Eigen::VectorXd score_fhs(const Problem& pr, const Eigen::VectorXd& th) {
  return score_fhs(pr, widen(th)).cast<double>();
}

inline std::vector<Vec> residuals(const Problem& pr, const Eigen::VectorXd& th) { return residuals(pr, widen(th)); }

inline Eigen::MatrixXd information(const Problem& pr, const Eigen::VectorXd& th, const std::vector<Vec>& zs) {
  return information(pr, widen(th), zs).cast<double>();
}

inline Eigen::MatrixXd cholesky(const Eigen::MatrixXd& S) { return cholesky(Mat(S.cast<Real>())).cast<double>(); }

inline Eigen::MatrixXd cholesky_derivative(const Eigen::MatrixXd& L, const Eigen::MatrixXd& dS) {
  return cholesky_derivative(Mat(L.cast<Real>()), Mat(dS.cast<Real>())).cast<double>();
}

inline Ancillary ancillary(const Problem& pr, const Eigen::VectorXd& th_hat) { return ancillary(pr, widen(th_hat)); }

inline Eigen::VectorXd ell_prime(const Problem& pr, const Ancillary& an, const Eigen::VectorXd& th) {
  return ell_prime(pr, an, widen(th)).cast<double>();
}

inline Eigen::MatrixXd u_prime(const Problem& pr, const Ancillary& an, const Eigen::VectorXd& th) {
  return u_prime(pr, an, widen(th)).cast<double>();
}

inline Eigen::MatrixXd j_doubletilde(const Problem& pr, const Ancillary& an, const Eigen::VectorXd& th_tilde) {
  return j_doubletilde(pr, an, widen(th_tilde)).cast<double>();
}

inline Result statistics(const Problem& pr, const Eigen::VectorXd& th_hat, const Eigen::VectorXd& th_tilde,
                         const std::vector<int>& interest) {
  const ResultL r = statistics(pr, widen(th_hat), widen(th_tilde), interest);
  return {static_cast<double>(r.LR),      static_cast<double>(r.r),        static_cast<double>(r.gamma),
          static_cast<double>(r.rho),     static_cast<double>(r.r_star),   static_cast<double>(r.LR_star),
          static_cast<double>(r.LR_star2), static_cast<double>(r.LR_star_inner)};
}

}  // namespace oracle

#endif
