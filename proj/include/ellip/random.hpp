#ifndef ELLIP_RANDOM_HPP
#define ELLIP_RANDOM_HPP

#include <cstdint>
#include <random>

namespace ellip {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Explicit random state. Never global; pass by reference to whatever draws.
///
/// Substreams are keyed by (seed, index) through splitmix64, so replication k
/// of a simulation sees the same numbers no matter which worker runs it.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static RandomStream substream(std::uint64_t seed, std::uint64_t index) {
    return RandomStream(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }

  std::mt19937_64& engine() noexcept { return engine_; }

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(engine_);
  }
  double chi_square(double dof) { return gamma(0.5 * dof, 2.0); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ellip

#endif
