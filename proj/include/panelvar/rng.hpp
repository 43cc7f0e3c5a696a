#pragma once

#include <cstdint>
#include <random>

namespace panelvar {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seedable RNG with cheap derivation of independent substreams, so chains
// and per-country simulation streams do not depend on scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(seed) ^ splitmix64(~stream_id * 0x9e3779b97f4a7c15ULL + 1));
  }

  double uniform() { return unif_(gen_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unif_(gen_); }
  double normal() { return norm_(gen_); }
  std::uint64_t integer(std::uint64_t n) {  // uniform on [0, n)
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace panelvar
