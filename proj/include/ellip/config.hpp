#ifndef ELLIP_CONFIG_HPP
#define ELLIP_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ellip/errors.hpp"
#include "ellip/io.hpp"

namespace ellip {

/// Flat `key = value` configuration, a small subset of TOML:
///
///   # comment
///   model = "model1"
///   family = "student_t"
///   nu = 3
///   alpha_levels = [0.01, 0.05, 0.10]
///   interest = ["beta3"]
///
/// Values are quoted strings, numbers, booleans or one-level arrays of those.
class Config {
 public:
  using Scalar = std::variant<std::string, double, bool>;
  struct Value {
    std::vector<Scalar> items;
    bool is_array = false;
    std::size_t line = 0;
  };

  static Config parse(std::istream& in) {
    Config cfg;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = strip_comment(raw);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw InputError(at(line_no) + "expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) throw InputError(at(line_no) + "missing key before '='");
      if (cfg.values_.count(key)) throw InputError(at(line_no) + "duplicate key '" + key + "'");
      Value v = parse_value(detail::trim(line.substr(eq + 1)), line_no);
      v.line = line_no;
      cfg.values_.emplace(key, std::move(v));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& kv : values_) out.push_back(kv.first);
    return out;
  }

  std::optional<std::string> get_string(const std::string& key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    return as<std::string>(scalar(*v, key), key, "a string");
  }

  std::optional<double> get_double(const std::string& key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    return as<double>(scalar(*v, key), key, "a number");
  }

  std::optional<std::int64_t> get_int(const std::string& key) const {
    const auto d = get_double(key);
    if (!d) return std::nullopt;
    if (*d != static_cast<double>(static_cast<std::int64_t>(*d)))
      throw InputError(at(values_.at(key).line) + "'" + key + "' must be an integer");
    return static_cast<std::int64_t>(*d);
  }

  std::optional<bool> get_bool(const std::string& key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    return as<bool>(scalar(*v, key), key, "true or false");
  }

  std::optional<std::vector<double>> get_doubles(const std::string& key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    for (const auto& s : v->items) out.push_back(as<double>(s, key, "a number or array of numbers"));
    return out;
  }

  /// Array items as text; numbers are rendered so that "interest = [2, 3]"
  /// and "interest = ["beta2", "beta3"]" read the same way.
  std::optional<std::vector<std::string>> get_strings(const std::string& key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& s : v->items) {
      if (const auto* str = std::get_if<std::string>(&s)) {
        out.push_back(*str);
      } else if (const auto* d = std::get_if<double>(&s)) {
        out.push_back(format_double(*d));
      } else {
        throw InputError(at(v->line) + "'" + key + "' must contain strings or numbers");
      }
    }
    return out;
  }

 private:
  std::map<std::string, Value> values_;

  static std::string at(std::size_t line) { return "config line " + std::to_string(line) + ": "; }

  // '#' starts a comment unless it sits inside a quoted string.
  static std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static Scalar parse_scalar(std::string_view s, std::size_t line) {
    s = detail::trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return std::string(s.substr(1, s.size() - 2));
    if (s == "true") return true;
    if (s == "false") return false;
    double d = 0.0;
    std::string cleaned(s);
    std::erase(cleaned, '_');  // TOML digit separators
    if (detail::parse_number(cleaned, d)) return d;
    throw InputError(at(line) + "cannot parse value '" + std::string(s) + "'");
  }

  static Value parse_value(std::string_view s, std::size_t line) {
    Value v;
    if (s.empty()) throw InputError(at(line) + "missing value");
    if (s.front() != '[') {
      v.items.push_back(parse_scalar(s, line));
      return v;
    }
    if (s.back() != ']') throw InputError(at(line) + "unterminated array");
    v.is_array = true;
    std::string_view body = detail::trim(s.substr(1, s.size() - 2));
    while (!body.empty()) {
      std::size_t end = 0;
      bool quoted = false;
      while (end < body.size() && (quoted || body[end] != ',')) {
        if (body[end] == '"') quoted = !quoted;
        ++end;
      }
      const std::string_view item = detail::trim(body.substr(0, end));
      if (!item.empty()) v.items.push_back(parse_scalar(item, line));
      body = end < body.size() ? detail::trim(body.substr(end + 1)) : std::string_view{};
    }
    return v;
  }

  const Value* find(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  const Scalar& scalar(const Value& v, const std::string& key) const {
    if (v.is_array || v.items.size() != 1) throw InputError(at(v.line) + "'" + key + "' must be a single value");
    return v.items.front();
  }

  template <class T>
  T as(const Scalar& s, const std::string& key, const char* expected) const {
    if (const auto* p = std::get_if<T>(&s)) return *p;
    throw InputError(at(values_.at(key).line) + "'" + key + "' must be " + expected);
  }
};

/// Interest parameters given by name ("beta3") or zero-based index ("3").
inline std::vector<std::size_t> resolve_interest(const ModelSpec& model, const std::vector<std::string>& items) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    if (const auto idx = model.param_index(s)) {
      out.push_back(*idx);
      continue;
    }
    double d = 0.0;
    if (detail::parse_number(s, d) && d >= 0 && d == static_cast<double>(static_cast<std::size_t>(d)) &&
        static_cast<std::size_t>(d) < model.num_params()) {
      out.push_back(static_cast<std::size_t>(d));
      continue;
    }
    std::string names;
    for (const auto& n : model.param_names()) names += (names.empty() ? "" : ", ") + n;
    throw InputError("unknown interest parameter '" + s + "' (model parameters: " + names + ")");
  }
  return out;
}

inline EllipticalFamily family_from_config(const Config& cfg) {
  const std::string name = cfg.get_string("family").value_or("normal");
  try {
    return EllipticalFamily::from_name(name, cfg.get_double("nu"), cfg.get_double("lambda"));
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

/// Simulation settings from a config file; unspecified keys take the
/// defaults of the chosen design (true parameters, null hypothesis).
inline SimulationConfig simulation_config_from(const Config& cfg) {
  SimulationConfig sim;
  try {
    sim.model = parse_builtin_model(cfg.get_string("model").value_or("model1"));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  sim.family = family_from_config(cfg);
  sim.n = static_cast<std::size_t>(cfg.get_int("n").value_or(sim.model == BuiltinModel::model1 ? 15 : 16));
  if (const auto r = cfg.get_int("replications")) {
    if (*r < 1) throw InputError("replications must be >= 1");
    sim.replications = static_cast<std::size_t>(*r);
  }
  if (const auto a = cfg.get_doubles("alpha_levels")) sim.alpha_levels = *a;
  if (const auto s = cfg.get_int("seed")) sim.seed = static_cast<std::uint64_t>(*s);
  if (const auto m = cfg.get_int("max_refit_attempts")) sim.max_refit_attempts = static_cast<int>(*m);

  const auto model = make_builtin(sim.model);
  sim.true_theta = default_true_theta(sim.model);
  if (const auto t = cfg.get_doubles("true_theta")) {
    if (t->size() != model->num_params())
      throw InputError("true_theta needs " + std::to_string(model->num_params()) + " values");
    sim.true_theta = Eigen::Map<const VectorXd>(t->data(), static_cast<Index>(t->size()));
  }
  const Sided sided = parse_sided(cfg.get_string("sided").value_or("two"));
  sim.hypothesis = default_hypothesis(sim.model, sided != Sided::two);
  if (const auto interest = cfg.get_strings("interest")) {
    sim.hypothesis.interest = resolve_interest(*model, *interest);
    sim.hypothesis.psi0 = VectorXd::Zero(static_cast<Index>(interest->size()));
  }
  sim.hypothesis.sided = sided;
  if (const auto psi0 = cfg.get_doubles("psi0")) {
    if (psi0->size() != sim.hypothesis.dim()) throw InputError("psi0 length does not match interest");
    sim.hypothesis.psi0 = Eigen::Map<const VectorXd>(psi0->data(), static_cast<Index>(psi0->size()));
  }
  try {
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return sim;
}

}  // namespace ellip

#endif
