#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace levyub {

// splitmix64 finalizer; used to turn (key, index) pairs into well-separated
// engine seeds so that parallel tasks get independent, reproducible streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Hierarchical stream key: child(i) is a deterministic function of (key, i),
// so a task tree keyed by (master seed, replicate, task) yields the same
// draws regardless of scheduling or worker count.
struct StreamKey {
  std::uint64_t value = 0;

  StreamKey child(std::uint64_t index) const {
    return StreamKey{mix64(value ^ mix64(index + 0x632BE59BD9B4E019ULL))};
  }
};

// Deterministic random stream. Distributions are implemented here rather
// than with std::*_distribution so that sequences are stable across standard
// library versions (frozen test values depend on this).
class RngStream {
 public:
  explicit RngStream(StreamKey key) : engine_(key.value) {}
  explicit RngStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Inter-arrival convention: -log(1 - V) / rate with V ~ U[0,1), which
  // never evaluates log at zero.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Box-Muller with caching; 1 - U keeps the log argument in (0, 1].
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace levyub
