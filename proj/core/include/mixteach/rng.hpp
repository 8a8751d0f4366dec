#pragma once

#include <cstdint>
#include <random>

namespace mixteach {

// SplitMix64 finaliser.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed of stream `index` under `master`.
constexpr std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t index) {
  return Mix64(Mix64(master) ^ Mix64(index + 0x632be59bd9b4e019ULL));
}

// Random source with platform-independent draws: the engine sequence is fixed
// by the standard and the mapping to ranges is done here rather than by the
// library's distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi]; returns lo when lo == hi.
  double UniformReal(double lo, double hi) { return lo == hi ? lo : lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi] by rejection sampling.
  std::int64_t UniformInt(std::int64_t lo, std::int64_t hi);

  bool Bernoulli(double p) { return Uniform() < p; }

  // Standard normal via Box-Muller (one value per call).
  double Normal(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
};

inline std::int64_t Rng::UniformInt(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1ULL;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return lo + static_cast<std::int64_t>(x % span);
}

}  // namespace mixteach
