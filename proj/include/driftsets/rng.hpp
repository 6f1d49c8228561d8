#pragma once

#include <cstdint>
#include <random>

namespace driftsets {

struct Seed {
  std::uint64_t value = 0;
};

/// splitmix64 finalizer; used to derive independent streams from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded random stream. Every randomized operation in the library takes one
/// of these by reference, so results are a pure function of (inputs, seed).
class Rng {
 public:
  explicit Rng(Seed seed) : origin_(seed.value), engine_(origin_) {}
  Rng(Seed seed, std::uint64_t stream)
      : origin_(mix_seed(seed.value, stream)), engine_(origin_) {}

  double uniform() { return unit_(engine_); }
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; does not advance this stream.
  Rng fork(std::uint64_t stream) const { return Rng(Seed{origin_}, stream); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t origin_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace driftsets
