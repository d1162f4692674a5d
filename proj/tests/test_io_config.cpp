#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "ellip/ellip.hpp"
#include "fixtures.hpp"

using namespace ellip;

namespace {

std::string input_error(const std::string& csv, const std::vector<std::string>& cov, bool time_group = false) {
  std::istringstream in(csv);
  try {
    read_dataset_csv(in, cov, time_group);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in);
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST(Csv, GroupsRowsIntoUnits) {
  std::istringstream in(
      "unit_id,row_index,y,x1\n"
      "a,2,1.5,20\n"
      "b,1,-2e-1,5\n"
      "a,1,0.5,10\n");
  const Dataset d = read_dataset_csv(in, {"x1"});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.observations[0].unit_id, "a");
  EXPECT_EQ(d.observations[0].y, Eigen::Vector2d(0.5, 1.5));
  EXPECT_EQ(d.observations[0].x(1, 0), 20.0);
  EXPECT_EQ(d.observations[1].y(0), -0.2);
}

TEST(Csv, RowsWithoutUnitsAreUnivariate) {
  std::istringstream in("y\n1\n2\n3.5\n");
  const Dataset d = read_dataset_csv(in, {});
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.observations[2].y(0), 3.5);
}

TEST(Csv, ErrorsNameTheProblem) {
  EXPECT_TRUE(contains(input_error("y,x1\n1,2\n", {"x1", "x2"}), "'x2'"));
  EXPECT_TRUE(contains(input_error("x1\n1\n", {"x1"}), "'y'"));
  const std::string bad = input_error("y,x1\n1,2\n3,abc\n", {"x1"});
  EXPECT_TRUE(contains(bad, "line 3")) << bad;
  EXPECT_TRUE(contains(bad, "'x1'")) << bad;
  EXPECT_TRUE(contains(input_error("y,x1\n1,2,3\n", {"x1"}), "line 2"));
  EXPECT_TRUE(contains(input_error("y,x1\n1,1,000\n", {"x1"}), "expected 2 fields"));
  EXPECT_TRUE(contains(input_error("unit_id,row_index,y\na,1,1\na,1,2\n", {}), "duplicate row_index"));
  EXPECT_FALSE(input_error("y\n", {}).empty());
  EXPECT_FALSE(input_error("", {}).empty());
  EXPECT_FALSE(input_error("y,y\n1,2\n", {}).empty());
}

TEST(Csv, DerivesMixedModelColumnsFromTimeAndGroup) {
  std::istringstream in(
      "unit_id,time,group,y\n"
      "u1,5,1,10\n"
      "u1,10,1,11\n"
      "u2,5,3,12\n");
  const Dataset d = read_dataset_csv(in, {"x1", "x2", "x3", "x4"}, true);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.observations[0].x.row(1), Eigen::RowVector4d(10, 0, 0, 0));
  EXPECT_EQ(d.observations[1].x.row(0), Eigen::RowVector4d(5, 0, 1, 0));
  EXPECT_TRUE(contains(input_error("unit_id,time,group,y\nu,5,7,1\n", {"x1", "x2", "x3", "x4"}, true), "'group'"));
}

TEST(Csv, RoundTripsThroughWriter) {
  const Dataset d = fixtures::simulated(BuiltinModel::model2, EllipticalFamily::student_t(3), 10, 4);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  const Dataset back = read_dataset_csv(buf, d.covariate_names);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.observations[i].y, d.observations[i].y);
    EXPECT_EQ(back.observations[i].x, d.observations[i].x);
  }
}

TEST(Numbers, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678, 0.0})
    EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(std::nan("")), "NA");
}

TEST(Json, FitRoundTrip) {
  const NonlinearModel1 m;
  const Dataset d = fixtures::simulated(BuiltinModel::model1, EllipticalFamily::normal(), 20, 2);
  const FitResult f = fit(m, EllipticalFamily::normal(), d);
  const nlohmann::json j = fit_to_json(f, m.param_names());
  const FitResult back = fit_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.theta, f.theta);
  EXPECT_EQ(back.info, f.info);
  EXPECT_EQ(back.std_errors, f.std_errors);
  EXPECT_EQ(back.loglik, f.loglik);
  EXPECT_EQ(back.converged, f.converged);
  EXPECT_EQ(back.iterations, f.iterations);
  EXPECT_EQ(j.at("parameters")[4], "sigma2");
}

TEST(Json, ReportRoundTripAndSchema) {
  const NonlinearModel1 m;
  const Dataset d = fixtures::simulated(BuiltinModel::model1, EllipticalFamily::student_t(3), 15, 3);
  for (bool one_sided : {true, false}) {
    const TestReport rep = run_test(m, EllipticalFamily::student_t(3), d, default_hypothesis(BuiltinModel::model1, one_sided));
    const nlohmann::json j = report_to_json(rep, m.param_names());
    const TestReport back = report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(report_to_json(back, m.param_names()), j);
    EXPECT_EQ(back.LR_star2, rep.LR_star2);
    EXPECT_EQ(back.flags, rep.flags);
    EXPECT_EQ(back.hypothesis.interest, rep.hypothesis.interest);
    for (const char* key : {"r", "r_star", "gamma", "p_r", "p_r_star"}) EXPECT_EQ(j.contains(key), one_sided) << key;
    EXPECT_EQ(j.at("hypothesis").at("interest")[0], one_sided ? "beta3" : "beta2");
  }
}

TEST(SimulationCsv, HeadersAndPValueRoundTrip) {
  SimulationConfig cfg;
  cfg.replications = 5;
  cfg.true_theta = default_true_theta(cfg.model);
  cfg.hypothesis = default_hypothesis(cfg.model);
  const SimulationSummary s = run_simulation(cfg);

  std::stringstream summary;
  write_summary_csv(summary, s);
  std::string header;
  std::getline(summary, header);
  EXPECT_EQ(header, "statistic,alpha,rejections,reps,rate,stderr");

  std::stringstream pv;
  write_pvalues_csv(pv, s);
  EXPECT_EQ(pv.str().substr(0, pv.str().find('\n')), "replication,LR,LR_star,LR_star2");
  const auto back = read_pvalues_csv(pv, "LR**");
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(back[k], s.pvalues.at("LR**")[k]);

  std::stringstream disc;
  write_discrepancy_csv(disc, pvalue_discrepancy(back));
  std::getline(disc, header);
  EXPECT_EQ(header, "asymptotic_p,relative_discrepancy");

  std::istringstream missing("replication,LR\n1,0.5\n");
  EXPECT_THROW(read_pvalues_csv(missing, "LR*"), InputError);
}

TEST(Config, ParsesScalarsArraysAndComments) {
  const Config c = parse(
      "# simulation\n"
      "model = \"model1\"   # trailing comment\n"
      "family = \"student_t\"\n"
      "nu = 3\n"
      "replications = 2_000\n"
      "alpha_levels = [0.01, 0.05, 0.10]\n"
      "interest = [\"beta3\"]\n"
      "label = \"a # not a comment\"\n"
      "verbose = true\n");
  EXPECT_EQ(c.get_string("model"), "model1");
  EXPECT_EQ(c.get_double("nu"), 3.0);
  EXPECT_EQ(c.get_int("replications"), 2000);
  EXPECT_EQ(c.get_doubles("alpha_levels"), (std::vector<double>{0.01, 0.05, 0.10}));
  EXPECT_EQ(c.get_strings("interest"), (std::vector<std::string>{"beta3"}));
  EXPECT_EQ(c.get_string("label"), "a # not a comment");
  EXPECT_EQ(c.get_bool("verbose"), true);
  EXPECT_FALSE(c.get_string("absent"));
}

TEST(Config, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse(text).get_int("n");
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_TRUE(contains(message("a = 1\nnot a pair\n"), "line 2"));
  EXPECT_TRUE(contains(message("n = 1\nn = 2\n"), "duplicate"));
  EXPECT_TRUE(contains(message("n = 1.5\n"), "integer"));
  EXPECT_TRUE(contains(message("n = \"x\"\n"), "number"));
  EXPECT_TRUE(contains(message("n = [1, 2\n"), "unterminated"));
}

TEST(Config, BuildsSimulationConfig) {
  const SimulationConfig sim = simulation_config_from(parse(
      "model = \"model1\"\nfamily = \"student_t\"\nnu = 3\nsided = \"lower\"\ninterest = [\"beta3\"]\n"
      "replications = 50\nseed = 7\n"));
  EXPECT_EQ(sim.family, EllipticalFamily::student_t(3));
  EXPECT_EQ(sim.hypothesis.interest, std::vector<std::size_t>{3});
  EXPECT_EQ(sim.hypothesis.sided, Sided::lower);
  EXPECT_EQ(sim.replications, 50u);
  EXPECT_EQ(sim.seed, 7u);
  EXPECT_EQ(sim.n, 15u);

  const SimulationConfig m2 = simulation_config_from(parse("model = \"model2\"\n"));
  EXPECT_EQ(m2.n, 16u);
  EXPECT_EQ(m2.hypothesis.interest, (std::vector<std::size_t>{2, 3, 4}));

  EXPECT_THROW(simulation_config_from(parse("family = \"student_t\"\n")), InputError);
  EXPECT_THROW(simulation_config_from(parse("interest = [\"beta3\", \"beta2\"]\nsided = \"lower\"\n")), InputError);
  EXPECT_THROW(simulation_config_from(parse("interest = [\"delta\"]\n")), InputError);
  EXPECT_THROW(simulation_config_from(parse("model = \"model3\"\n")), InputError);
}

TEST(Config, InterestByNameOrIndex) {
  const MixedModel2 m;
  EXPECT_EQ(resolve_interest(m, {"beta2", "3", "gamma3"}), (std::vector<std::size_t>{2, 3, 7}));
  EXPECT_THROW(resolve_interest(m, {"9"}), InputError);
  EXPECT_THROW(resolve_interest(m, {"1.5"}), InputError);
}
