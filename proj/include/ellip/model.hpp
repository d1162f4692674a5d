#ifndef ELLIP_MODEL_HPP
#define ELLIP_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ellip/errors.hpp"
#include "ellip/linalg.hpp"

namespace ellip {

/// One response vector Y_i (length q_i) with its covariate rows (q_i x k).
struct Observation {
  VectorXd y;
  MatrixXd x;
  std::string unit_id;

  Index dim() const { return y.size(); }
};

struct Dataset {
  std::vector<std::string> covariate_names;
  std::vector<Observation> observations;

  std::size_t size() const { return observations.size(); }
  std::size_t total_rows() const {
    std::size_t rows = 0;
    for (const auto& o : observations) rows += static_cast<std::size_t>(o.dim());
    return rows;
  }
};

/// Mean, scatter and their parameter derivatives for a single observation.
///
/// d2 and C2 are stored flat with index s * p + r. An empty d2 (or C2) means
/// the mean (or scatter) is linear in theta and every second derivative is 0.
struct ObsEval {
  VectorXd mu;
  MatrixXd D;                 // q x p, column r = d mu / d theta_r
  std::vector<VectorXd> d2;   // p*p entries, or empty
  MatrixXd Sigma;
  MatrixXd P;                 // lower Cholesky factor of Sigma
  std::vector<MatrixXd> C;    // p entries, d Sigma / d theta_r
  std::vector<MatrixXd> C2;   // p*p entries, or empty

  Index dim() const { return mu.size(); }
  Index num_params() const { return D.cols(); }

  VectorXd d2_at(Index s, Index r) const {
    if (d2.empty()) return VectorXd::Zero(dim());
    return d2[static_cast<std::size_t>(s * num_params() + r)];
  }
  MatrixXd C2_at(Index s, Index r) const {
    if (C2.empty()) return MatrixXd::Zero(dim(), dim());
    return C2[static_cast<std::size_t>(s * num_params() + r)];
  }
};

struct ModelEval {
  VectorXd theta;
  std::vector<ObsEval> obs;

  std::size_t size() const { return obs.size(); }
};

/// The model contract: per-observation mu_i(theta) and Sigma_i(theta).
///
/// Subclasses that can differentiate analytically override
/// analytic_derivatives() and fill_derivatives(); everything else falls back
/// to finite differences. Instances are immutable after construction.
class ModelSpec {
 public:
  virtual ~ModelSpec() = default;

  virtual std::string name() const = 0;
  virtual std::vector<std::string> param_names() const = 0;
  /// Covariate columns expected in Observation::x, in order.
  virtual std::vector<std::string> covariate_names() const = 0;

  virtual VectorXd mean(const Observation& obs, const VectorXd& theta) const = 0;
  virtual MatrixXd scatter(const Observation& obs, const VectorXd& theta) const = 0;

  /// Parameters that must stay positive; the optimizer works on their log.
  virtual std::vector<bool> positive_params() const {
    return std::vector<bool>(num_params(), false);
  }

  virtual bool analytic_derivatives() const { return false; }
  virtual void fill_derivatives(const Observation&, const VectorXd&, ObsEval&) const {}

  virtual VectorXd start_values(const Dataset& data) const {
    VectorXd start = VectorXd::Zero(static_cast<Index>(num_params()));
    const auto pos = positive_params();
    for (std::size_t k = 0; k < pos.size(); ++k)
      if (pos[k]) start(static_cast<Index>(k)) = 1.0;
    (void)data;
    return start;
  }

  virtual void check_domain(const VectorXd& theta) const {
    const auto pos = positive_params();
    const auto names = param_names();
    for (std::size_t k = 0; k < pos.size(); ++k) {
      if (pos[k] && !(theta(static_cast<Index>(k)) > 0.0))
        throw ParameterDomainError(names[k] + " must be positive");
    }
  }

  /// Rejects datasets the model cannot describe (wrong covariate count, response dimension).
  virtual void check_data(const Dataset& data) const {
    const auto cov = covariate_names();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Observation& o = data.observations[i];
      if (o.dim() < 1) throw std::invalid_argument("observation " + std::to_string(i) + " has no responses");
      if (o.x.rows() != o.dim() || o.x.cols() != static_cast<Index>(cov.size()))
        throw std::invalid_argument("observation " + std::to_string(i) + " needs a " + std::to_string(o.dim()) +
                                    " x " + std::to_string(cov.size()) + " covariate matrix");
    }
  }

  std::size_t num_params() const { return param_names().size(); }

  std::optional<std::size_t> param_index(const std::string& name) const {
    const auto names = param_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }
};

namespace detail {

// Power of two nearest to x, so that theta +- h is exact for ordinary theta.
inline double pow2_step(double x) { return std::exp2(std::round(std::log2(x))); }

inline void check_finite(const ObsEval& e, std::size_t i) {
  if (!e.mu.allFinite() || !e.Sigma.allFinite())
    throw EvaluationError("non-finite mean or scatter at observation " + std::to_string(i));
}

inline void fill_fd_derivatives(const ModelSpec& model, const Observation& obs, const VectorXd& theta,
                                ObsEval& e) {
  const Index p = theta.size();
  const Index q = obs.dim();
  e.D.resize(q, p);
  e.C.assign(static_cast<std::size_t>(p), MatrixXd::Zero(q, q));
  e.d2.assign(static_cast<std::size_t>(p * p), VectorXd::Zero(q));
  e.C2.assign(static_cast<std::size_t>(p * p), MatrixXd::Zero(q, q));

  auto shifted = [&](Index a, double ha, Index b, double hb) {
    VectorXd t = theta;
    t(a) += ha;
    if (b >= 0) t(b) += hb;
    return t;
  };

  std::vector<double> h2(static_cast<std::size_t>(p));
  for (Index r = 0; r < p; ++r) {
    const double h = pow2_step(1e-6 * std::max(1.0, std::abs(theta(r))));
    const VectorXd tp = shifted(r, h, -1, 0.0);
    const VectorXd tm = shifted(r, -h, -1, 0.0);
    e.D.col(r) = (model.mean(obs, tp) - model.mean(obs, tm)) / (2.0 * h);
    e.C[static_cast<std::size_t>(r)] = (model.scatter(obs, tp) - model.scatter(obs, tm)) / (2.0 * h);
    h2[static_cast<std::size_t>(r)] = pow2_step(1e-4 * std::max(1.0, std::abs(theta(r))));
  }

  const VectorXd mu0 = model.mean(obs, theta);
  const MatrixXd S0 = model.scatter(obs, theta);
  for (Index s = 0; s < p; ++s) {
    const double hs = h2[static_cast<std::size_t>(s)];
    for (Index r = s; r < p; ++r) {
      const double hr = h2[static_cast<std::size_t>(r)];
      VectorXd dm;
      MatrixXd dS;
      if (r == s) {
        const VectorXd tp = shifted(s, hs, -1, 0.0);
        const VectorXd tm = shifted(s, -hs, -1, 0.0);
        dm = (model.mean(obs, tp) - 2.0 * mu0 + model.mean(obs, tm)) / (hs * hs);
        dS = (model.scatter(obs, tp) - 2.0 * S0 + model.scatter(obs, tm)) / (hs * hs);
      } else {
        const VectorXd tpp = shifted(s, hs, r, hr), tpm = shifted(s, hs, r, -hr);
        const VectorXd tmp = shifted(s, -hs, r, hr), tmm = shifted(s, -hs, r, -hr);
        const double denom = 4.0 * hs * hr;
        dm = (model.mean(obs, tpp) - model.mean(obs, tpm) - model.mean(obs, tmp) + model.mean(obs, tmm)) / denom;
        dS = (model.scatter(obs, tpp) - model.scatter(obs, tpm) - model.scatter(obs, tmp) +
              model.scatter(obs, tmm)) /
             denom;
      }
      dS = (0.5 * (dS + dS.transpose())).eval();
      e.d2[static_cast<std::size_t>(s * p + r)] = dm;
      e.d2[static_cast<std::size_t>(r * p + s)] = dm;
      e.C2[static_cast<std::size_t>(s * p + r)] = dS;
      e.C2[static_cast<std::size_t>(r * p + s)] = dS;
    }
  }
  for (auto& c : e.C) c = (0.5 * (c + c.transpose())).eval();
}

inline ModelEval evaluate_impl(const ModelSpec& model, const VectorXd& theta, const Dataset& data,
                               bool force_fd) {
  if (static_cast<std::size_t>(theta.size()) != model.num_params())
    throw std::invalid_argument("theta has length " + std::to_string(theta.size()) + ", model " +
                                model.name() + " expects " + std::to_string(model.num_params()));
  model.check_domain(theta);
  ModelEval out;
  out.theta = theta;
  out.obs.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Observation& o = data.observations[i];
    ObsEval& e = out.obs[i];
    e.mu = model.mean(o, theta);
    e.Sigma = model.scatter(o, theta);
    if (e.mu.size() != o.dim() || e.Sigma.rows() != o.dim() || e.Sigma.cols() != o.dim())
      throw std::invalid_argument("model " + model.name() + " returned the wrong dimension for observation " +
                                  std::to_string(i));
    check_finite(e, i);
    try {
      e.P = cholesky_lower(e.Sigma);
    } catch (const CholeskyError&) {
      throw NotPositiveDefiniteError(i, "scatter matrix is not positive definite");
    }
    if (!force_fd && model.analytic_derivatives())
      model.fill_derivatives(o, theta, e);
    else
      fill_fd_derivatives(model, o, theta, e);
  }
  return out;
}

}  // namespace detail

/// All per-observation quantities at theta; analytic derivatives when the model has them.
inline ModelEval evaluate(const ModelSpec& model, const VectorXd& theta, const Dataset& data) {
  return detail::evaluate_impl(model, theta, data, false);
}

/// Same as evaluate() but derivatives always by central differences.
inline ModelEval fd_derivatives(const ModelSpec& model, const VectorXd& theta, const Dataset& data) {
  return detail::evaluate_impl(model, theta, data, true);
}

namespace detail {

inline VectorXd least_squares(const MatrixXd& X, const VectorXd& y) {
  return X.colPivHouseholderQr().solve(y);
}

inline double robust_scale2(std::vector<double> resid) {
  if (resid.empty()) return 1.0;
  for (double& r : resid) r = std::abs(r);
  std::nth_element(resid.begin(), resid.begin() + static_cast<std::ptrdiff_t>(resid.size() / 2), resid.end());
  const double mad = resid[resid.size() / 2];
  const double s = 1.4826 * mad;
  return std::max(s * s, 1e-10);
}

}  // namespace detail

/// mu_i = 1 / (1 + b0 + b1 x1 + b2 x2 + b3 x2^2), Sigma_i = sigma2 (q_i = 1).
class NonlinearModel1 final : public ModelSpec {
 public:
  std::string name() const override { return "model1"; }
  std::vector<std::string> param_names() const override {
    return {"beta0", "beta1", "beta2", "beta3", "sigma2"};
  }
  std::vector<std::string> covariate_names() const override { return {"x1", "x2"}; }
  std::vector<bool> positive_params() const override { return {false, false, false, false, true}; }

  void check_data(const Dataset& data) const override {
    ModelSpec::check_data(data);
    for (const auto& o : data.observations)
      if (o.dim() != 1)
        throw std::invalid_argument("model1 is univariate: unit '" + o.unit_id + "' has " +
                                    std::to_string(o.dim()) + " responses");
  }

  static Eigen::Vector4d gradient_eta(const Observation& o) {
    const double x1 = o.x(0, 0), x2 = o.x(0, 1);
    return {1.0, x1, x2, x2 * x2};
  }

  VectorXd mean(const Observation& o, const VectorXd& theta) const override {
    const double eta = 1.0 + theta.head<4>().dot(gradient_eta(o));
    return VectorXd::Constant(1, 1.0 / eta);
  }
  MatrixXd scatter(const Observation&, const VectorXd& theta) const override {
    return MatrixXd::Constant(1, 1, theta(4));
  }

  bool analytic_derivatives() const override { return true; }
  void fill_derivatives(const Observation& o, const VectorXd& theta, ObsEval& e) const override {
    constexpr Index p = 5;
    const Eigen::Vector4d g = gradient_eta(o);
    const double mu = e.mu(0);
    e.D = MatrixXd::Zero(1, p);
    e.D.row(0).head<4>() = -mu * mu * g.transpose();
    e.d2.assign(p * p, VectorXd::Zero(1));
    for (Index s = 0; s < 4; ++s)
      for (Index r = 0; r < 4; ++r) e.d2[static_cast<std::size_t>(s * p + r)](0) = 2.0 * mu * mu * mu * g(s) * g(r);
    e.C.assign(p, MatrixXd::Zero(1, 1));
    e.C[4](0, 0) = 1.0;
    e.C2.clear();
    (void)theta;
  }

  VectorXd start_values(const Dataset& data) const override {
    // 1/y - 1 is linear in beta; regress it on the rows where y is safely positive.
    std::vector<Index> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.observations[i].y(0) > 0.05) rows.push_back(static_cast<Index>(i));
    VectorXd theta = VectorXd::Zero(5);
    double ybar = 0.0;
    for (const auto& o : data.observations) ybar += o.y(0);
    ybar /= static_cast<double>(std::max<std::size_t>(data.size(), 1));
    theta(0) = ybar > 0.05 ? 1.0 / ybar - 1.0 : 0.0;
    if (rows.size() >= 6) {
      MatrixXd X(static_cast<Index>(rows.size()), 4);
      VectorXd t(static_cast<Index>(rows.size()));
      for (Index k = 0; k < X.rows(); ++k) {
        const auto& o = data.observations[static_cast<std::size_t>(rows[static_cast<std::size_t>(k)])];
        X.row(k) = gradient_eta(o).transpose();
        t(k) = 1.0 / o.y(0) - 1.0;
      }
      const VectorXd b = detail::least_squares(X, t);
      if (b.allFinite()) theta.head<4>() = b;
    }
    std::vector<double> resid;
    for (const auto& o : data.observations) {
      const double eta = 1.0 + theta.head<4>().dot(gradient_eta(o));
      resid.push_back(o.y(0) - 1.0 / eta);
    }
    theta(4) = detail::robust_scale2(resid);
    return theta;
  }
};

/// Linear mixed model: mu_i = X_i beta, Sigma_i = Z_i Delta(gamma) Z_i^T + sigma2 I.
///
/// Covariate columns are (x1, x2, x3, x4); X_i = [1 x1 x2 x3 x4], Z_i = [1 x1].
/// theta = (beta0..beta4, gamma1, gamma2, gamma3, sigma2).
class MixedModel2 final : public ModelSpec {
 public:
  std::string name() const override { return "model2"; }
  std::vector<std::string> param_names() const override {
    return {"beta0", "beta1", "beta2", "beta3", "beta4", "gamma1", "gamma2", "gamma3", "sigma2"};
  }
  std::vector<std::string> covariate_names() const override { return {"x1", "x2", "x3", "x4"}; }
  std::vector<bool> positive_params() const override {
    return {false, false, false, false, false, true, false, true, true};
  }

  static MatrixXd design_X(const Observation& o) {
    MatrixXd X(o.dim(), 5);
    X.col(0).setOnes();
    X.rightCols(4) = o.x.leftCols(4);
    return X;
  }
  static MatrixXd design_Z(const Observation& o) {
    MatrixXd Z(o.dim(), 2);
    Z.col(0).setOnes();
    Z.col(1) = o.x.col(0);
    return Z;
  }

  VectorXd mean(const Observation& o, const VectorXd& theta) const override {
    return design_X(o) * theta.head<5>();
  }
  MatrixXd scatter(const Observation& o, const VectorXd& theta) const override {
    const MatrixXd Z = design_Z(o);
    Eigen::Matrix2d delta;
    delta << theta(5), theta(6), theta(6), theta(7);
    MatrixXd S = Z * delta * Z.transpose();
    S.diagonal().array() += theta(8);
    return S;
  }

  bool analytic_derivatives() const override { return true; }
  void fill_derivatives(const Observation& o, const VectorXd&, ObsEval& e) const override {
    constexpr Index p = 9;
    const Index q = o.dim();
    const MatrixXd Z = design_Z(o);
    e.D = MatrixXd::Zero(q, p);
    e.D.leftCols(5) = design_X(o);
    e.d2.clear();
    e.C.assign(p, MatrixXd::Zero(q, q));
    const VectorXd z1 = Z.col(0), z2 = Z.col(1);
    e.C[5] = z1 * z1.transpose();
    e.C[6] = z1 * z2.transpose() + z2 * z1.transpose();
    e.C[7] = z2 * z2.transpose();
    e.C[8] = MatrixXd::Identity(q, q);
    e.C2.clear();
  }

  VectorXd start_values(const Dataset& data) const override {
    const Index rows = static_cast<Index>(data.total_rows());
    MatrixXd X(rows, 5);
    VectorXd y(rows), t(rows);
    Index k = 0;
    for (const auto& o : data.observations) {
      const MatrixXd Xi = design_X(o);
      for (Index j = 0; j < o.dim(); ++j, ++k) {
        X.row(k) = Xi.row(j);
        y(k) = o.y(j);
        t(k) = o.x(j, 0);
      }
    }
    VectorXd theta = VectorXd::Zero(9);
    theta.head<5>() = detail::least_squares(X, y);
    const VectorXd resid = y - X * theta.head<5>();
    // Moment fit of E[r^2] = (gamma1 + sigma2) + gamma3 t^2.
    MatrixXd M(rows, 2);
    M.col(0).setOnes();
    M.col(1) = t.array().square();
    const VectorXd c = detail::least_squares(M, resid.array().square().matrix());
    const double total0 = std::max(c(0), 1e-3 * resid.squaredNorm() / static_cast<double>(rows) + 1e-8);
    theta(5) = 0.5 * total0;
    theta(6) = 0.0;
    theta(7) = std::max(c(1), 1e-6);
    theta(8) = 0.5 * total0;
    if (!theta.allFinite()) {
      theta.setZero();
      theta(5) = theta(7) = theta(8) = 1.0;
    }
    return theta;
  }
};

/// mu_i = mu * 1, Sigma_i = sigma2 * I; sigma2 may be fixed and known.
class LocationScaleModel final : public ModelSpec {
 public:
  explicit LocationScaleModel(std::optional<double> known_sigma2 = std::nullopt) : known_(known_sigma2) {
    if (known_ && !(*known_ > 0.0)) throw ParameterDomainError("known sigma2 must be positive");
  }

  std::string name() const override { return "iid"; }
  std::vector<std::string> param_names() const override {
    if (known_) return {"mu"};
    return {"mu", "sigma2"};
  }
  std::vector<std::string> covariate_names() const override { return {}; }
  std::vector<bool> positive_params() const override {
    if (known_) return {false};
    return {false, true};
  }
  std::optional<double> known_sigma2() const { return known_; }

  VectorXd mean(const Observation& o, const VectorXd& theta) const override {
    return VectorXd::Constant(o.dim(), theta(0));
  }
  MatrixXd scatter(const Observation& o, const VectorXd& theta) const override {
    const double s2 = known_ ? *known_ : theta(1);
    return s2 * MatrixXd::Identity(o.dim(), o.dim());
  }

  bool analytic_derivatives() const override { return true; }
  void fill_derivatives(const Observation& o, const VectorXd&, ObsEval& e) const override {
    const Index q = o.dim();
    const Index p = static_cast<Index>(num_params());
    e.D = MatrixXd::Zero(q, p);
    e.D.col(0).setOnes();
    e.d2.clear();
    e.C.assign(static_cast<std::size_t>(p), MatrixXd::Zero(q, q));
    if (!known_) e.C[1] = MatrixXd::Identity(q, q);
    e.C2.clear();
  }

  VectorXd start_values(const Dataset& data) const override {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& o : data.observations) {
      sum += o.y.sum();
      count += static_cast<std::size_t>(o.dim());
    }
    const double mean = sum / static_cast<double>(std::max<std::size_t>(count, 1));
    for (const auto& o : data.observations) sq += (o.y.array() - mean).square().sum();
    VectorXd theta(static_cast<Index>(num_params()));
    theta(0) = mean;
    if (!known_) theta(1) = std::max(sq / static_cast<double>(std::max<std::size_t>(count, 1)), 1e-8);
    return theta;
  }

 private:
  std::optional<double> known_;
};

/// mu_i = X_i beta with X_i = [1 x...] (or [x...] without intercept), Sigma_i = sigma2 I.
class LinearModel final : public ModelSpec {
 public:
  LinearModel(std::vector<std::string> covariates, bool intercept = true,
              std::optional<double> known_sigma2 = std::nullopt)
      : covariates_(std::move(covariates)), intercept_(intercept), known_(known_sigma2) {
    if (known_ && !(*known_ > 0.0)) throw ParameterDomainError("known sigma2 must be positive");
    if (!intercept_ && covariates_.empty()) throw std::invalid_argument("linear model needs at least one column");
  }

  std::string name() const override { return "linear"; }
  std::vector<std::string> param_names() const override {
    std::vector<std::string> names;
    const std::size_t k = num_beta();
    for (std::size_t j = 0; j < k; ++j) names.push_back("beta" + std::to_string(j));
    if (!known_) names.push_back("sigma2");
    return names;
  }
  std::vector<std::string> covariate_names() const override { return covariates_; }
  std::vector<bool> positive_params() const override {
    std::vector<bool> pos(num_beta(), false);
    if (!known_) pos.push_back(true);
    return pos;
  }

  std::size_t num_beta() const { return covariates_.size() + (intercept_ ? 1 : 0); }

  MatrixXd design(const Observation& o) const {
    MatrixXd X(o.dim(), static_cast<Index>(num_beta()));
    Index c = 0;
    if (intercept_) X.col(c++).setOnes();
    X.rightCols(static_cast<Index>(covariates_.size())) = o.x;
    return X;
  }

  VectorXd mean(const Observation& o, const VectorXd& theta) const override {
    return design(o) * theta.head(static_cast<Index>(num_beta()));
  }
  MatrixXd scatter(const Observation& o, const VectorXd& theta) const override {
    const double s2 = known_ ? *known_ : theta(static_cast<Index>(num_beta()));
    return s2 * MatrixXd::Identity(o.dim(), o.dim());
  }

  bool analytic_derivatives() const override { return true; }
  void fill_derivatives(const Observation& o, const VectorXd&, ObsEval& e) const override {
    const Index q = o.dim();
    const Index p = static_cast<Index>(num_params());
    const Index k = static_cast<Index>(num_beta());
    e.D = MatrixXd::Zero(q, p);
    e.D.leftCols(k) = design(o);
    e.d2.clear();
    e.C.assign(static_cast<std::size_t>(p), MatrixXd::Zero(q, q));
    if (!known_) e.C[static_cast<std::size_t>(k)] = MatrixXd::Identity(q, q);
    e.C2.clear();
  }

  VectorXd start_values(const Dataset& data) const override {
    const Index rows = static_cast<Index>(data.total_rows());
    const Index k = static_cast<Index>(num_beta());
    MatrixXd X(rows, k);
    VectorXd y(rows);
    Index r = 0;
    for (const auto& o : data.observations) {
      X.middleRows(r, o.dim()) = design(o);
      y.segment(r, o.dim()) = o.y;
      r += o.dim();
    }
    VectorXd theta(static_cast<Index>(num_params()));
    theta.head(k) = detail::least_squares(X, y);
    if (!known_) theta(k) = std::max((y - X * theta.head(k)).squaredNorm() / static_cast<double>(rows), 1e-8);
    return theta;
  }

 private:
  std::vector<std::string> covariates_;
  bool intercept_;
  std::optional<double> known_;
};

}  // namespace ellip

#endif
