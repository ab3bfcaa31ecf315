#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace srd {

// Seeded generator with platform-independent derived distributions.
// The standard distributions are implementation-defined (and normal_distribution
// caches a second draw), so uniform/normal/integer sampling is done here to keep
// the full state serializable through the engine alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Box-Muller, one output per call.
  double normal();

  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent generator for a named sub-stream.
  Rng fork(std::uint64_t stream) const;

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace srd
