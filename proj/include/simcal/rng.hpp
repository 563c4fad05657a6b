#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace simcal {

// Every random stream in a run is keyed by (master_seed, stream, counter)
// through a SplitMix64 finalizer. Sub-seeds never depend on evaluation order
// or worker count, which is what makes artifacts byte-identical across runs
// and parallelism levels.
namespace seed_stream {
inline constexpr std::uint64_t kErrorSampling = 1;
inline constexpr std::uint64_t kStagePhases = 2;       // counter = stage index
inline constexpr std::uint64_t kStageNoise = 3;        // counter = stage index
inline constexpr std::uint64_t kSweepRun = 4;          // counter = point << 20 | seed
inline constexpr std::uint64_t kMonitorPhases = 5;     // counter = stream slot
inline constexpr std::uint64_t kMonitorNoise = 6;      // counter = stream slot
inline constexpr std::uint64_t kMonitorCalibration = 7;  // counter = trigger index
inline constexpr std::uint64_t kDriftErrors = 8;
inline constexpr std::uint64_t kScheduleSlot = 9;      // counter = slot index
inline constexpr std::uint64_t kNoiseSlot = 10;        // counter = slot index
}  // namespace seed_stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t counter = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(stream)) ^ counter);
}

// mt19937_64 with explicit bit-to-double conversions so draws are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform on [-bound, +bound].
  double symmetric(double bound) { return bound * (2.0 * uniform01() - 1.0); }

  // Uniform phase on [0, 2*pi).
  double phase() { return 2.0 * std::numbers::pi * uniform01(); }

  // Circularly-symmetric complex Gaussian with E|z|^2 = 1 (Box-Muller in
  // polar form).
  std::complex<double> cgauss() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-std::log1p(-u1));
    return std::polar(r, 2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace simcal
