#ifndef ELLIP_TESTS_FIXTURES_HPP
#define ELLIP_TESTS_FIXTURES_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "ellip/ellip.hpp"
#include "literal_oracle.hpp"

namespace fixtures {

inline std::vector<ellip::EllipticalFamily> all_families() {
  return {ellip::EllipticalFamily::normal(), ellip::EllipticalFamily::student_t(3),
          ellip::EllipticalFamily::power_exponential(0.9)};
}

/// The true parameters of a built-in model moved by a random relative amount:
/// multiplicatively for positive parameters, additively for the rest.
inline Eigen::VectorXd jittered_truth(ellip::BuiltinModel m, double scale, ellip::RandomStream& rng) {
  Eigen::VectorXd th = ellip::default_true_theta(m);
  const auto pos = ellip::make_builtin(m)->positive_params();
  for (Eigen::Index k = 0; k < th.size(); ++k) {
    const double z = scale * rng.normal();
    th(k) = pos[static_cast<std::size_t>(k)] ? th(k) * std::exp(z) : th(k) + z * (1.0 + std::abs(th(k)));
  }
  return th;
}

/// One simulated dataset from a built-in design at its true parameters.
inline ellip::Dataset simulated(ellip::BuiltinModel m, const ellip::EllipticalFamily& family, std::size_t n,
                                std::uint64_t seed) {
  ellip::SimulationConfig cfg;
  cfg.model = m;
  cfg.family = family;
  cfg.n = n;
  cfg.seed = seed;
  ellip::Dataset d = ellip::make_design(cfg);
  ellip::RandomStream rng = ellip::RandomStream::substream(seed, 7);
  ellip::draw_responses(*ellip::make_builtin(m), family, ellip::default_true_theta(m), d, rng);
  return d;
}

inline oracle::Family to_oracle(const ellip::EllipticalFamily& f) {
  switch (f.kind()) {
    case ellip::FamilyKind::normal:
      return {oracle::Dist::normal, 0.0, 1.0};
    case ellip::FamilyKind::student_t:
      return {oracle::Dist::t, *f.nu(), 1.0};
    case ellip::FamilyKind::power_exponential:
      return {oracle::Dist::pe, 0.0, *f.lambda()};
  }
  return {};
}

inline oracle::Problem to_oracle(ellip::BuiltinModel m, const ellip::EllipticalFamily& f, const ellip::Dataset& d) {
  oracle::Problem pr;
  pr.model = m == ellip::BuiltinModel::model1 ? 1 : 2;
  pr.family = to_oracle(f);
  for (const auto& o : d.observations) {
    pr.y.push_back(o.y.cast<oracle::Real>());
    pr.x.push_back(o.x.cast<oracle::Real>());
  }
  return pr;
}

}  // namespace fixtures

#endif
