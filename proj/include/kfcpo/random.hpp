#ifndef KFCPO_RANDOM_HPP_
#define KFCPO_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace kfcpo {

// Seeded generator whose outputs are identical on every conforming platform.
// std::mt19937_64 is fully specified by the standard; the distribution
// adaptors in <random> are not, so the conversions live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    // rejection sampling keeps the result unbiased
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Textual state, restorable with set_state.
  std::string state() const {
    std::ostringstream out;
    out << engine_ << ' ' << has_spare_ << ' ';
    out.precision(17);
    out << std::hexfloat << spare_;
    return out.str();
  }

  void set_state(const std::string& text) {
    std::istringstream in(text);
    in >> engine_ >> has_spare_;
    std::string spare;
    in >> spare;
    spare_ = std::strtod(spare.c_str(), nullptr);
  }

  // Derives an independent stream, e.g. one per rollout worker.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kfcpo

#endif  // KFCPO_RANDOM_HPP_
