#include <cmath>

#include <gtest/gtest.h>

#include "ellip/ellip.hpp"
#include "fixtures.hpp"

using namespace ellip;

namespace {

Observation model1_obs(double x1, double x2) {
  Observation o;
  o.y = VectorXd::Zero(1);
  o.x.resize(1, 2);
  o.x << x1, x2;
  return o;
}

Dataset single(Observation o) {
  Dataset d;
  d.observations.push_back(std::move(o));
  return d;
}

double max_rel(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// A user model with no analytic derivatives: mu_i = exp(theta0) x, Sigma_i = theta1 + theta1^2.
class ExpModel final : public ModelSpec {
 public:
  std::string name() const override { return "exp"; }
  std::vector<std::string> param_names() const override { return {"a", "s"}; }
  std::vector<std::string> covariate_names() const override { return {"x"}; }
  VectorXd mean(const Observation& o, const VectorXd& th) const override { return std::exp(th(0)) * o.x.col(0); }
  MatrixXd scatter(const Observation& o, const VectorXd& th) const override {
    return (th(1) + th(1) * th(1)) * MatrixXd::Identity(o.dim(), o.dim());
  }
};

class ConstantModel final : public ModelSpec {
 public:
  std::string name() const override { return "constant"; }
  std::vector<std::string> param_names() const override { return {"unused"}; }
  std::vector<std::string> covariate_names() const override { return {}; }
  VectorXd mean(const Observation& o, const VectorXd&) const override { return VectorXd::Constant(o.dim(), 2.5); }
  MatrixXd scatter(const Observation& o, const VectorXd&) const override {
    return MatrixXd::Identity(o.dim(), o.dim());
  }
};

}  // namespace

TEST(Model1, MeanAtKnownPoints) {
  const NonlinearModel1 m;
  VectorXd th(5);
  th << 0.5, 0.2, 0.0, 0.0, 0.3;
  const ModelEval e0 = evaluate(m, th, single(model1_obs(0, 0)));
  EXPECT_NEAR(e0.obs[0].mu(0), 1 / 1.5, 1e-15);
  EXPECT_NEAR(e0.obs[0].Sigma(0, 0), 0.3, 1e-15);

  const ModelEval e1 = evaluate(m, th, single(model1_obs(1, 1)));
  const double mu = e1.obs[0].mu(0);
  EXPECT_NEAR(mu, 1 / 1.7, 1e-15);
  EXPECT_NEAR(mu, 0.5882, 1e-4);
  EXPECT_NEAR(e1.obs[0].D(0, 0), -mu * mu, 1e-15);
  EXPECT_NEAR(e1.obs[0].D(0, 0), -0.3460, 1e-4);
  EXPECT_NEAR(e1.obs[0].d2_at(0, 0)(0), 2 * mu * mu * mu, 1e-15);
  EXPECT_NEAR(e1.obs[0].d2_at(0, 0)(0), 0.4071, 1e-4);
}

TEST(Model1, SecondDerivativeMatchesSecondDifference) {
  const NonlinearModel1 m;
  VectorXd th(5);
  th << 0.5, 0.2, 0.0, 0.0, 0.3;
  const Dataset d = single(model1_obs(1, 1));
  const double h = 1e-5;
  auto mu_at = [&](double b0) {
    VectorXd t = th;
    t(0) = b0;
    return m.mean(d.observations[0], t)(0);
  };
  const double fd = (mu_at(0.5 + h) - 2 * mu_at(0.5) + mu_at(0.5 - h)) / (h * h);
  EXPECT_NEAR(evaluate(m, th, d).obs[0].d2_at(0, 0)(0), fd, 1e-5);
}

TEST(Model1, NonPositiveVarianceIsDomainError) {
  const NonlinearModel1 m;
  VectorXd th(5);
  th << 0.5, 0.2, 0.0, 0.0, 0.0;
  EXPECT_THROW(evaluate(m, th, single(model1_obs(0, 0))), ParameterDomainError);
  th(4) = -1.0;
  EXPECT_THROW(evaluate(m, th, single(model1_obs(0, 0))), ParameterDomainError);
}

TEST(Model1, RejectsMultivariateResponses) {
  const NonlinearModel1 m;
  Observation o;
  o.y = VectorXd::Zero(2);
  o.x = MatrixXd::Zero(2, 2);
  o.unit_id = "u7";
  try {
    m.check_data(single(o));
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("u7"), std::string::npos);
  }
}

TEST(Model2, ScatterHandExpansion) {
  const MixedModel2 m;
  Observation o;
  o.y = VectorXd::Zero(1);
  o.x = MatrixXd::Zero(1, 4);
  o.x(0, 0) = 5.0;  // Z_i = [1 5]
  const ModelEval e = evaluate(m, default_true_theta(BuiltinModel::model2), single(o));
  EXPECT_NEAR(e.obs[0].Sigma(0, 0), 500 + 2 * 2 * 5 + 200 * 25 + 5, 1e-10);
  EXPECT_NEAR(e.obs[0].Sigma(0, 0), 5525, 1e-10);
  EXPECT_NEAR(e.obs[0].C[6](0, 0), 10.0, 1e-15);
  EXPECT_NEAR(e.obs[0].C[5](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(e.obs[0].C[7](0, 0), 25.0, 1e-15);
  EXPECT_NEAR(e.obs[0].C[8](0, 0), 1.0, 1e-15);
}

TEST(Model2, NonSpdScatterCarriesIndex) {
  const MixedModel2 m;
  const Dataset d = fixtures::simulated(BuiltinModel::model2, EllipticalFamily::normal(), 8, 2);
  VectorXd th = default_true_theta(BuiltinModel::model2);
  th(6) = -1e4;  // Delta indefinite, Sigma_i negative at t = 5
  th(8) = 1e-6;
  try {
    evaluate(m, th, d);
    FAIL() << "expected a non positive definite scatter";
  } catch (const NotPositiveDefiniteError& e) {
    EXPECT_LT(e.index(), d.size());
  }
}

TEST(Models, AnalyticDerivativesMatchFiniteDifferences) {
  for (auto which : {BuiltinModel::model1, BuiltinModel::model2}) {
    const auto m = make_builtin(which);
    const Dataset d = fixtures::simulated(which, EllipticalFamily::normal(), 10, 3);
    const VectorXd th = default_true_theta(which);
    const ModelEval a = evaluate(*m, th, d);
    const ModelEval f = fd_derivatives(*m, th, d);
    const Index p = th.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_LT(max_rel(a.obs[i].D, f.obs[i].D), 1e-6) << to_string(which) << " obs " << i;
      for (Index r = 0; r < p; ++r) {
        EXPECT_LT(max_rel(a.obs[i].C[r], f.obs[i].C[r]), 1e-6);
        for (Index s = 0; s < p; ++s) {
          EXPECT_LT(max_rel(a.obs[i].d2_at(s, r), f.obs[i].d2_at(s, r)), 1e-4);
          EXPECT_LT(max_rel(a.obs[i].C2_at(s, r), f.obs[i].C2_at(s, r)), 1e-4);
        }
      }
    }
  }
}

TEST(FdDerivatives, UserModelWithoutAnalyticForm) {
  const ExpModel m;
  Observation o;
  o.y = VectorXd::Zero(2);
  o.x = MatrixXd(2, 1);
  o.x << 1.5, -2.0;
  const Dataset d = single(o);
  const Eigen::Vector2d th(0.3, 0.7);
  const ModelEval e = evaluate(m, th, d);
  const double ea = std::exp(0.3);
  EXPECT_NEAR(e.obs[0].D(0, 0), ea * 1.5, 1e-8);
  EXPECT_NEAR(e.obs[0].D(1, 0), ea * -2.0, 1e-8);
  EXPECT_NEAR(e.obs[0].d2_at(0, 0)(0), ea * 1.5, 1e-5);
  EXPECT_NEAR(e.obs[0].C[1](0, 0), 1 + 2 * 0.7, 1e-8);
  EXPECT_NEAR(e.obs[0].C2_at(1, 1)(0, 0), 2.0, 1e-5);
  EXPECT_EQ(e.obs[0].C2_at(0, 1)(0, 0), e.obs[0].C2_at(1, 0)(0, 0));
}

TEST(FdDerivatives, LinearScatterHasExactZeroSecondDerivative) {
  const LinearModel m({"x1"});
  Observation o;
  o.y = VectorXd::Zero(1);
  o.x = MatrixXd::Constant(1, 1, 0.4);
  const ModelEval e = fd_derivatives(m, Eigen::Vector3d(0.1, 0.2, 0.9), single(o));
  EXPECT_EQ(e.obs[0].C2_at(2, 2)(0, 0), 0.0);
}

TEST(FdDerivatives, ConstantModelHasZeroDerivatives) {
  const ConstantModel m;
  Observation o;
  o.y = VectorXd::Zero(3);
  o.x = MatrixXd(3, 0);
  const ModelEval e = fd_derivatives(m, VectorXd::Constant(1, 0.4), single(o));
  EXPECT_EQ(e.obs[0].D.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.obs[0].C[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.obs[0].d2_at(0, 0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.obs[0].C2_at(0, 0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Evaluate, RejectsWrongParameterLength) {
  const NonlinearModel1 m;
  EXPECT_THROW(evaluate(m, VectorXd::Zero(3), single(model1_obs(0, 0))), std::invalid_argument);
}

TEST(CheckData, RejectsWrongCovariateCount) {
  const MixedModel2 m;
  Observation o;
  o.y = VectorXd::Zero(2);
  o.x = MatrixXd::Zero(2, 3);
  EXPECT_THROW(m.check_data(single(o)), std::invalid_argument);
}

TEST(Model, ParameterNamesAndIndices) {
  const MixedModel2 m;
  EXPECT_EQ(m.num_params(), 9u);
  EXPECT_EQ(m.param_index("gamma2"), 6u);
  EXPECT_FALSE(m.param_index("delta"));
  const LocationScaleModel known(2.0);
  EXPECT_EQ(known.num_params(), 1u);
  EXPECT_THROW(LocationScaleModel(-1.0), ParameterDomainError);
}
