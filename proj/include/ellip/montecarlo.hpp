#ifndef ELLIP_MONTECARLO_HPP
#define ELLIP_MONTECARLO_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ellip/families.hpp"
#include "ellip/inference.hpp"
#include "ellip/model.hpp"
#include "ellip/random.hpp"

namespace ellip {

enum class BuiltinModel { model1, model2 };

inline std::string to_string(BuiltinModel m) { return m == BuiltinModel::model1 ? "model1" : "model2"; }

inline BuiltinModel parse_builtin_model(std::string_view s) {
  if (s == "model1") return BuiltinModel::model1;
  if (s == "model2") return BuiltinModel::model2;
  throw std::invalid_argument("simulation model must be model1 or model2 (got '" + std::string(s) + "')");
}

inline std::unique_ptr<ModelSpec> make_builtin(BuiltinModel m) {
  if (m == BuiltinModel::model1) return std::make_unique<NonlinearModel1>();
  return std::make_unique<MixedModel2>();
}

/// True parameter settings of the two simulation designs.
inline VectorXd default_true_theta(BuiltinModel m) {
  if (m == BuiltinModel::model1) {
    VectorXd t(5);
    t << 0.5, 0.2, 0.0, 0.0, 0.005;
    return t;
  }
  VectorXd t(9);
  t << 0.7, 0.5, 0.0, 0.0, 0.0, 500.0, 2.0, 200.0, 5.0;
  return t;
}

struct SimulationConfig {
  BuiltinModel model = BuiltinModel::model1;
  EllipticalFamily family = EllipticalFamily::normal();
  std::size_t n = 15;
  std::size_t replications = 2000;
  std::vector<double> alpha_levels{0.01, 0.05, 0.10};
  Hypothesis hypothesis;
  VectorXd true_theta;
  std::uint64_t seed = 42;
  int max_refit_attempts = 10;
  double max_failure_fraction = 0.02;

  void validate() const {
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (!std::is_sorted(alpha_levels.begin(), alpha_levels.end()))
      throw std::invalid_argument("alpha levels must be sorted ascending");
    for (double a : alpha_levels)
      if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha levels must lie in (0, 1)");
    const std::size_t p = make_builtin(model)->num_params();
    if (static_cast<std::size_t>(true_theta.size()) != p) throw std::invalid_argument("true_theta has the wrong length");
    hypothesis.validate(p);
    for (std::size_t k = 0; k < hypothesis.dim(); ++k) {
      if (true_theta(static_cast<Index>(hypothesis.interest[k])) != hypothesis.psi0(static_cast<Index>(k)))
        throw std::invalid_argument("true_theta does not satisfy the null hypothesis");
    }
  }
};

/// Null hypotheses of the two designs: (beta2, beta3) = 0 / beta3 >= 0 for
/// model 1, (beta2, beta3, beta4) = 0 for model 2.
inline Hypothesis default_hypothesis(BuiltinModel m, bool one_sided = false) {
  if (m == BuiltinModel::model1) {
    if (one_sided) return Hypothesis{{3}, VectorXd::Zero(1), Sided::lower};
    return Hypothesis{{2, 3}, VectorXd::Zero(2), Sided::two};
  }
  return Hypothesis{{2, 3, 4}, VectorXd::Zero(3), Sided::two};
}

inline constexpr std::uint64_t kDesignStream = 0xde5195eedULL;

/// Fixed design drawn once per run from the seed; responses are left at zero.
inline Dataset make_design(const SimulationConfig& cfg) {
  RandomStream rng = RandomStream::substream(cfg.seed, kDesignStream);
  Dataset d;
  if (cfg.model == BuiltinModel::model1) {
    d.covariate_names = {"x1", "x2"};
    for (std::size_t i = 0; i < cfg.n; ++i) {
      Observation o;
      o.unit_id = std::to_string(i + 1);
      o.x.resize(1, 2);
      o.x(0, 0) = rng.uniform();
      o.x(0, 1) = rng.uniform();
      o.y = VectorXd::Zero(1);
      d.observations.push_back(std::move(o));
    }
    return d;
  }
  static constexpr double kTimes[5] = {5.0, 10.0, 15.0, 30.0, 60.0};
  d.covariate_names = {"x1", "x2", "x3", "x4"};
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const int q = rng.uniform_int(1, 5);
    const std::size_t group = i % 4;  // 0 is the reference group
    Observation o;
    o.unit_id = std::to_string(i + 1);
    o.x = MatrixXd::Zero(q, 4);
    for (int j = 0; j < q; ++j) {
      o.x(j, 0) = kTimes[j];
      if (group > 0) o.x(j, static_cast<Index>(group)) = 1.0;
    }
    o.y = VectorXd::Zero(q);
    d.observations.push_back(std::move(o));
  }
  return d;
}

/// Y_i = mu_i + P_i s_i with s_i spherical: an El(mu_i, Sigma_i) draw.
inline void draw_responses(const ModelSpec& model, const EllipticalFamily& family, const VectorXd& theta,
                           Dataset& data, RandomStream& rng) {
  for (auto& o : data.observations) {
    const VectorXd mu = model.mean(o, theta);
    const MatrixXd P = cholesky_lower(model.scatter(o, theta));
    o.y = mu + P * sample_spherical(family, static_cast<int>(o.dim()), rng);
  }
}

/// Statistic names in output order for a hypothesis of dimension q.
inline std::vector<std::string> statistic_names(std::size_t q) {
  if (q == 1) return {"r", "r*", "LR", "LR*", "LR**"};
  return {"LR", "LR*", "LR**"};
}

/// Column name used in CSV headers for a statistic.
inline std::string statistic_column(const std::string& stat) {
  if (stat == "r*") return "r_star";
  if (stat == "LR*") return "LR_star";
  if (stat == "LR**") return "LR_star2";
  return stat;
}

/// Accepts either the display name (LR**) or the column name (LR_star2).
inline std::string canonical_statistic(std::string_view s) {
  for (const char* name : {"r", "r*", "LR", "LR*", "LR**"}) {
    if (s == name || s == statistic_column(name)) return name;
  }
  throw std::invalid_argument("unknown statistic '" + std::string(s) + "'");
}

inline double report_pvalue(const TestReport& rep, const std::string& stat) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (stat == "r") return rep.p_r.value_or(nan);
  if (stat == "r*") return rep.p_r_star.value_or(nan);
  if (stat == "LR") return rep.p_LR;
  if (stat == "LR*") return rep.p_LR_star;
  if (stat == "LR**") return rep.p_LR_star2;
  throw std::invalid_argument("unknown statistic '" + stat + "'");
}

struct RejectionRate {
  std::string statistic;
  double alpha;
  std::size_t rejections;
  std::size_t reps;
  double rate;
  double stderr_rate;  // sqrt(rate (1 - rate) / reps)
};

struct SimulationSummary {
  std::vector<std::string> statistics;
  std::vector<RejectionRate> rates;
  /// p-values per statistic in replication order; NaN marks a failed replication.
  std::map<std::string, std::vector<double>> pvalues;
  std::size_t replications = 0;
  std::size_t successful = 0;
  std::size_t failure_count = 0;
  std::size_t redraw_count = 0;
  std::map<std::string, std::size_t> flag_counts;
  double wall_seconds = 0.0;

  const RejectionRate& rate(const std::string& stat, double alpha) const {
    for (const auto& r : rates)
      if (r.statistic == stat && std::abs(r.alpha - alpha) < 1e-12) return r;
    throw std::out_of_range("no rejection rate for " + stat + " at alpha " + std::to_string(alpha));
  }

  /// Successful p-values of one statistic, sorted ascending.
  std::vector<double> sorted_pvalues(const std::string& stat) const {
    std::vector<double> out;
    for (double v : pvalues.at(stat))
      if (!std::isnan(v)) out.push_back(v);
    std::sort(out.begin(), out.end());
    return out;
  }
};

class SimulationFailure : public std::runtime_error {
 public:
  SimulationFailure(const std::string& what, SimulationSummary summary)
      : std::runtime_error(what), summary_(std::move(summary)) {}
  const SimulationSummary& summary() const noexcept { return summary_; }

 private:
  SimulationSummary summary_;
};

namespace detail {

struct ReplicationOutcome {
  bool ok = false;
  int redraws = 0;
  std::vector<double> p;
  FlagSet flags;
};

inline ReplicationOutcome run_replication(const SimulationConfig& cfg, const ModelSpec& model, const Dataset& design,
                                          const std::vector<std::string>& stats, std::size_t index) {
  ReplicationOutcome out;
  RandomStream rng = RandomStream::substream(cfg.seed, index);
  Dataset data = design;
  for (int attempt = 0; attempt <= cfg.max_refit_attempts; ++attempt) {
    draw_responses(model, cfg.family, cfg.true_theta, data, rng);
    try {
      const TestReport rep = run_test(model, cfg.family, data, cfg.hypothesis);
      out.ok = true;
      out.flags = rep.flags;
      for (const auto& s : stats) out.p.push_back(report_pvalue(rep, s));
      return out;
    } catch (const std::exception&) {
      ++out.redraws;
    }
  }
  return out;
}

}  // namespace detail

/// Null rejection rates of every statistic at every alpha.
///
/// Replication k draws from substream (seed, k) and writes only slot k, so
/// the summary is identical for any number of threads.
inline SimulationSummary run_simulation(const SimulationConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = make_builtin(cfg.model);
  const Dataset design = make_design(cfg);
  const auto stats = statistic_names(cfg.hypothesis.dim());

  std::vector<detail::ReplicationOutcome> outcomes(cfg.replications);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cfg.replications) return;
      try {
        outcomes[k] = detail::run_replication(cfg, *model, design, stats, k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  SimulationSummary sum;
  sum.statistics = stats;
  sum.replications = cfg.replications;
  for (const auto& s : stats)
    sum.pvalues[s].assign(cfg.replications, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < cfg.replications; ++k) {
    const auto& o = outcomes[k];
    sum.redraw_count += static_cast<std::size_t>(o.redraws);
    if (!o.ok) {
      ++sum.failure_count;
      continue;
    }
    ++sum.successful;
    for (std::size_t j = 0; j < stats.size(); ++j) sum.pvalues[stats[j]][k] = o.p[j];
    for (Flag f : o.flags) ++sum.flag_counts[to_string(f)];
  }
  for (const auto& s : stats) {
    const auto& pv = sum.pvalues[s];
    for (double alpha : cfg.alpha_levels) {
      std::size_t rej = 0;
      for (double v : pv)
        if (!std::isnan(v) && v < alpha) ++rej;
      const double R = static_cast<double>(sum.successful);
      const double rate = sum.successful ? static_cast<double>(rej) / R : 0.0;
      const double se = sum.successful ? std::sqrt(rate * (1.0 - rate) / R) : 0.0;
      sum.rates.push_back({s, alpha, rej, sum.successful, rate, se});
    }
  }
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (static_cast<double>(sum.failure_count) > cfg.max_failure_fraction * static_cast<double>(cfg.replications))
    throw SimulationFailure("simulation failed: " + std::to_string(sum.failure_count) + " of " +
                                std::to_string(cfg.replications) + " replications could not be fitted",
                            std::move(sum));
  return sum;
}

struct DiscrepancyPoint {
  double asymptotic_p;
  double relative_discrepancy;  // (ECDF(p) - p) / p
};

/// Relative p-value discrepancy on the grid 0.01, 0.02, ..., 0.25.
inline std::vector<DiscrepancyPoint> pvalue_discrepancy(std::vector<double> pvalues) {
  std::erase_if(pvalues, [](double v) { return std::isnan(v); });
  if (pvalues.empty()) throw std::invalid_argument("pvalue_discrepancy: empty p-value sample");
  std::sort(pvalues.begin(), pvalues.end());
  const double R = static_cast<double>(pvalues.size());
  std::vector<DiscrepancyPoint> out;
  for (int k = 1; k <= 25; ++k) {
    const double p = k / 100.0;
    const auto count = std::upper_bound(pvalues.begin(), pvalues.end(), p) - pvalues.begin();
    out.push_back({p, (static_cast<double>(count) / R - p) / p});
  }
  return out;
}

inline std::vector<DiscrepancyPoint> pvalue_discrepancy(const SimulationSummary& summary, const std::string& stat) {
  return pvalue_discrepancy(summary.pvalues.at(canonical_statistic(stat)));
}

}  // namespace ellip

#endif
