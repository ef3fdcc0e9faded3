#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>

namespace rewrite_lab {

// Mixes a base seed with stream coordinates (epoch, example index, ...).
std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// Seeded 64-bit Mersenne Twister with platform-independent conversions.
// std::uniform_*_distribution is implementation defined, so the helpers here
// work on the raw 64-bit draws instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t NextU64() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n); n > 0. Rejection sampling keeps it unbiased.
  std::uint64_t Below(std::uint64_t n);

  double UniformIn(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  std::uint64_t draws() const { return draws_; }

  void Save(std::ostream& out) const;
  void Load(std::istream& in);

  bool operator==(const Rng& other) const {
    return engine_ == other.engine_ && draws_ == other.draws_;
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace rewrite_lab
