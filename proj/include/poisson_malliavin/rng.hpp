#ifndef POISSON_MALLIAVIN_RNG_HPP
#define POISSON_MALLIAVIN_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace detail

/// Seeded random stream. Substreams are derived deterministically from a
/// master seed and a path of indices, so a worker that owns item i always
/// sees the same numbers no matter how items are distributed.
class Rng {
public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  /// Independent child stream keyed by `path`.
  [[nodiscard]] Rng substream(std::initializer_list<std::uint64_t> path) const {
    std::uint64_t h = detail::splitmix64(seed_ ^ 0x5851f42d4c957f2dULL);
    for (auto p : path) {
      h = detail::splitmix64(h ^ detail::splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return Rng(h);
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t poisson(double mean) {
    if (!(mean > 0.0)) {
      return 0;
    }
    return std::poisson_distribution<std::uint64_t>(mean)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  engine_type& engine() { return engine_; }

private:
  std::uint64_t seed_;
  engine_type engine_;
};

} // namespace pm

#endif
