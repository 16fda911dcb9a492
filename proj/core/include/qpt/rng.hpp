#pragma once

#include <cstdint>
#include <random>

namespace qpt {

// Seeded random source. The engine is std::mt19937_64; the distributions are
// spelled out here because the standard library's are implementation-defined,
// and simulator output has to be byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from (seed, stream, index) by splitmix64 mixing.
  static Rng for_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double exponential(double mean);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace qpt
