// Command-line front end: fit, test, simulate, discrepancy.
//
// Exit codes: 0 success, 1 input error, 2 numerical failure.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11/CLI11.hpp>

#include "ellip/ellip.hpp"

namespace {

using namespace ellip;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNumericalError = 2;

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelOptions {
  std::string config;
  std::string model;
  std::string family;
  std::optional<double> nu, lambda, sigma2;
  std::string data;
  std::vector<std::string> covariates;
  std::string out;
  std::optional<int> max_iterations;
  std::optional<double> score_tol;
};

struct TestOptionsCli {
  std::vector<std::string> interest;
  std::vector<double> psi0;
  std::string sided;
};

struct SimulateOptions {
  std::string config;
  std::string model, family, sided;
  std::optional<double> nu, lambda;
  std::optional<std::size_t> reps, n;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_summary, out_pvalues, emit_one;
};

struct DiscrepancyOptions {
  std::string in, stat, out;
};

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

std::string pick(const std::string& flag, const Config& cfg, const char* key, const std::string& fallback) {
  if (!flag.empty()) return flag;
  return cfg.get_string(key).value_or(fallback);
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Header of a CSV file, used to infer linear-model covariates.
std::vector<std::string> csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("dataset is empty (no header line)");
  return detail::split_csv_line(line);
}

EllipticalFamily resolve_family(const std::string& flag, std::optional<double> nu, std::optional<double> lambda,
                                const Config& cfg) {
  const std::string name = pick(flag, cfg, "family", "normal");
  if (!nu) nu = cfg.get_double("nu");
  if (!lambda) lambda = cfg.get_double("lambda");
  try {
    return EllipticalFamily::from_name(name, nu, lambda);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

struct Problem {
  std::unique_ptr<ModelSpec> model;
  EllipticalFamily family = EllipticalFamily::normal();
  Dataset data;
  FitOptions fit;
};

Problem load_problem(const ModelOptions& o, const Config& cfg) {
  Problem pb;
  const std::string model = pick(o.model, cfg, "model", "");
  if (model.empty()) throw InputError("no model given (use --model model1|model2|iid|linear)");
  const std::string data = pick(o.data, cfg, "data", "");
  if (data.empty()) throw InputError("no data file given (use --data)");
  std::optional<double> sigma2 = o.sigma2 ? o.sigma2 : cfg.get_double("sigma2");
  if (sigma2 && !(*sigma2 > 0.0)) throw InputError("--sigma2 must be positive");

  bool time_group = false;
  if (model == "model1" || model == "model2") {
    if (sigma2) throw InputError("--sigma2 applies only to the iid and linear models");
    pb.model = model == "model1" ? std::unique_ptr<ModelSpec>(std::make_unique<NonlinearModel1>())
                                 : std::unique_ptr<ModelSpec>(std::make_unique<MixedModel2>());
    time_group = model == "model2";
  } else if (model == "iid") {
    pb.model = std::make_unique<LocationScaleModel>(sigma2);
  } else if (model == "linear") {
    std::vector<std::string> cov = split_list(o.covariates);
    if (cov.empty()) cov = cfg.get_strings("covariates").value_or(std::vector<std::string>{});
    if (cov.empty()) {
      for (const auto& c : csv_header(data))
        if (c != "unit_id" && c != "row_index" && c != "y") cov.push_back(c);
    }
    pb.model = std::make_unique<LinearModel>(cov, cfg.get_bool("intercept").value_or(true), sigma2);
  } else {
    throw InputError("unknown model '" + model + "' (expected model1, model2, iid or linear)");
  }
  pb.family = resolve_family(o.family, o.nu, o.lambda, cfg);
  pb.data = read_dataset_csv(data, pb.model->covariate_names(), time_group);
  try {
    pb.model->check_data(pb.data);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  if (o.max_iterations) {
    pb.fit.max_iterations = *o.max_iterations;
  } else if (const auto it = cfg.get_int("max_iterations")) {
    pb.fit.max_iterations = static_cast<int>(*it);
  }
  if (const auto tol = o.score_tol ? o.score_tol : cfg.get_double("score_tol")) pb.fit.score_tol = *tol;
  return pb;
}

void emit_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

template <class Writer>
void write_file(const std::string& path, Writer&& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  w(out);
}

int cmd_fit(const ModelOptions& o) {
  const Config cfg = load_config(o.config);
  Problem pb = load_problem(o, cfg);
  FitResult f;
  try {
    f = fit(*pb.model, pb.family, pb.data, std::nullopt, std::nullopt, pb.fit);
  } catch (const FitError& e) {
    throw NumericalFailure(e.what());
  }
  nlohmann::json j = fit_to_json(f, pb.model->param_names());
  j["model"] = pb.model->name();
  j["family"] = pb.family.name();
  emit_json(j, o.out);
  if (!f.converged) {
    std::cerr << "fit did not converge (score norm " << f.score_norm << ")\n";
    return kNumericalError;
  }
  return kOk;
}

int cmd_test(const ModelOptions& o, const TestOptionsCli& t) {
  const Config cfg = load_config(o.config);
  Problem pb = load_problem(o, cfg);
  std::vector<std::string> interest = split_list(t.interest);
  if (interest.empty()) interest = cfg.get_strings("interest").value_or(std::vector<std::string>{});
  if (interest.empty()) throw InputError("no interest parameter given (use --interest)");

  Hypothesis h;
  h.interest = resolve_interest(*pb.model, interest);
  std::vector<double> psi0 = t.psi0;
  if (psi0.empty()) psi0 = cfg.get_doubles("psi0").value_or(std::vector<double>(interest.size(), 0.0));
  if (psi0.size() != interest.size())
    throw InputError("--psi0 needs " + std::to_string(interest.size()) + " values");
  h.psi0 = Eigen::Map<const VectorXd>(psi0.data(), static_cast<Index>(psi0.size()));
  h.sided = parse_sided(pick(t.sided, cfg, "sided", "two"));
  try {
    h.validate(pb.model->num_params());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  TestReport rep;
  try {
    rep = run_test(*pb.model, pb.family, pb.data, h, TestOptions{pb.fit});
  } catch (const StageError& e) {
    throw NumericalFailure(e.what());
  }
  nlohmann::json j = report_to_json(rep, pb.model->param_names());
  j["model"] = pb.model->name();
  j["family"] = pb.family.name();
  emit_json(j, o.out);
  return kOk;
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("ELLIP_LRT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw InputError("ELLIP_LRT_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_simulate(const SimulateOptions& o) {
  Config cfg = load_config(o.config);
  SimulationConfig sim = simulation_config_from(cfg);
  // Command-line settings override the config file.
  if (!o.model.empty()) {
    sim.model = parse_builtin_model(o.model);
    sim.true_theta = default_true_theta(sim.model);
    sim.hypothesis = default_hypothesis(sim.model, sim.hypothesis.sided != Sided::two);
    if (!cfg.has("n")) sim.n = sim.model == BuiltinModel::model1 ? 15 : 16;
  }
  if (!o.family.empty() || o.nu || o.lambda) sim.family = resolve_family(o.family, o.nu, o.lambda, cfg);
  if (!o.sided.empty()) {
    const Sided s = parse_sided(o.sided);
    if ((s == Sided::two) != (sim.hypothesis.sided == Sided::two) && !cfg.has("interest"))
      sim.hypothesis = default_hypothesis(sim.model, s != Sided::two);
    sim.hypothesis.sided = s;
  }
  if (o.reps) sim.replications = *o.reps;
  if (o.n) sim.n = *o.n;
  if (o.seed) sim.seed = *o.seed;
  try {
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  if (!o.emit_one.empty()) {
    const auto model = make_builtin(sim.model);
    Dataset d = make_design(sim);
    RandomStream rng = RandomStream::substream(sim.seed, 0);
    draw_responses(*model, sim.family, sim.true_theta, d, rng);
    write_file(o.emit_one, [&](std::ostream& out) { write_dataset_csv(out, d); });
    return kOk;
  }

  const unsigned threads = resolve_threads(o.threads);
  SimulationSummary s;
  int code = kOk;
  try {
    s = run_simulation(sim, threads);
  } catch (const SimulationFailure& e) {
    std::cerr << e.what() << '\n';
    s = e.summary();
    code = kNumericalError;
  }
  if (!o.out_summary.empty()) write_file(o.out_summary, [&](std::ostream& out) { write_summary_csv(out, s); });
  if (!o.out_pvalues.empty()) write_file(o.out_pvalues, [&](std::ostream& out) { write_pvalues_csv(out, s); });

  std::cout << to_string(sim.model) << ", " << sim.family.name() << ", n = " << sim.n << ", "
            << s.successful << " of " << s.replications << " replications\n";
  std::cout << std::left << std::setw(8) << "stat";
  for (double a : sim.alpha_levels) std::cout << std::setw(18) << ("alpha=" + format_double(a));
  std::cout << '\n';
  for (const auto& stat : s.statistics) {
    std::cout << std::setw(8) << stat;
    for (double a : sim.alpha_levels) {
      const auto& r = s.rate(stat, a);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << 100 * r.rate << " (" << 100 * r.stderr_rate << ")";
      std::cout << std::setw(18) << cell.str();
    }
    std::cout << '\n';
  }
  std::cerr << "failures: " << s.failure_count << ", error redraws: " << s.redraw_count << ", wall time: "
            << std::fixed << std::setprecision(2) << s.wall_seconds << " s, threads: " << threads << '\n';
  for (const auto& [flag, count] : s.flag_counts) std::cerr << "  flag " << flag << ": " << count << '\n';
  return code;
}

int cmd_discrepancy(const DiscrepancyOptions& o) {
  std::ifstream in(o.in);
  if (!in) throw InputError("cannot open p-value file '" + o.in + "'");
  std::vector<double> pv;
  try {
    pv = read_pvalues_csv(in, o.stat);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::vector<DiscrepancyPoint> pts;
  try {
    pts = pvalue_discrepancy(pv);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (o.out.empty()) {
    write_discrepancy_csv(std::cout, pts);
  } else {
    write_file(o.out, [&](std::ostream& out) { write_discrepancy_csv(out, pts); });
  }
  return kOk;
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--model", o.model, "model1, model2, iid or linear");
  cmd->add_option("--family", o.family, "normal, student_t or power_exponential");
  cmd->add_option("--nu", o.nu, "Student-t degrees of freedom");
  cmd->add_option("--lambda", o.lambda, "power exponential shape");
  cmd->add_option("--data", o.data, "long-format dataset CSV");
  cmd->add_option("--covariates", o.covariates, "linear model columns (default: all but unit_id, row_index, y)");
  cmd->add_option("--sigma2", o.sigma2, "known scatter scale for the iid and linear models");
  cmd->add_option("--max-iter", o.max_iterations, "optimizer iteration limit");
  cmd->add_option("--score-tol", o.score_tol, "optimizer score tolerance");
  cmd->add_option("--out", o.out, "output JSON (default: stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood ratio tests with higher-order adjustments for elliptical regression models"};
  app.require_subcommand(1);

  ModelOptions fit_opt, test_opt;
  TestOptionsCli test_h;
  SimulateOptions sim_opt;
  DiscrepancyOptions disc_opt;

  auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit, written as JSON");
  add_model_options(fit_cmd, fit_opt);

  auto* test_cmd = app.add_subcommand("test", "LR, r, r*, LR* and LR** for a hypothesis on the parameters");
  add_model_options(test_cmd, test_opt);
  test_cmd->add_option("--interest", test_h.interest, "parameters under test, by name or zero-based index");
  test_cmd->add_option("--psi0", test_h.psi0, "null values (default 0)")->delimiter(',');
  test_cmd->add_option("--sided", test_h.sided, "two, lower (H1: psi < psi0) or upper (H1: psi > psi0)");

  auto* sim_cmd = app.add_subcommand("simulate", "null rejection rates by Monte Carlo");
  sim_cmd->add_option("--config", sim_opt.config, "key = value configuration file");
  sim_cmd->add_option("--model", sim_opt.model, "model1 or model2");
  sim_cmd->add_option("--family", sim_opt.family, "normal, student_t or power_exponential");
  sim_cmd->add_option("--nu", sim_opt.nu, "Student-t degrees of freedom");
  sim_cmd->add_option("--lambda", sim_opt.lambda, "power exponential shape");
  sim_cmd->add_option("--sided", sim_opt.sided, "two, lower or upper");
  sim_cmd->add_option("--n", sim_opt.n, "sample size");
  sim_cmd->add_option("--reps", sim_opt.reps, "replications");
  sim_cmd->add_option("--seed", sim_opt.seed, "random seed (default 42)");
  sim_cmd->add_option("--threads", sim_opt.threads, "worker threads (default: ELLIP_LRT_THREADS or all cores)");
  sim_cmd->add_option("--out-summary", sim_opt.out_summary, "rejection-rate CSV");
  sim_cmd->add_option("--out-pvalues", sim_opt.out_pvalues, "per-replication p-value CSV");
  sim_cmd->add_option("--emit-one", sim_opt.emit_one, "write one simulated dataset CSV and exit");

  auto* disc_cmd = app.add_subcommand("discrepancy", "relative p-value discrepancy curve");
  disc_cmd->add_option("--in", disc_opt.in, "p-value CSV from simulate")->required();
  disc_cmd->add_option("--stat", disc_opt.stat, "r, r*, LR, LR* or LR**")->required();
  disc_cmd->add_option("--out", disc_opt.out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_opt);
    if (*test_cmd) return cmd_test(test_opt, test_h);
    if (*sim_cmd) return cmd_simulate(sim_opt);
    if (*disc_cmd) return cmd_discrepancy(disc_opt);
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kOk;
}
