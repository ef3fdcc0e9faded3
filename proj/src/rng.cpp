#include "rewrite_lab/rng.hpp"

#include <istream>
#include <limits>
#include <ostream>

namespace rewrite_lab {
namespace {

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return SplitMix(SplitMix(SplitMix(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

std::uint64_t Rng::Below(std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % n;
}

void Rng::Save(std::ostream& out) const { out << draws_ << ' ' << engine_; }

void Rng::Load(std::istream& in) { in >> draws_ >> engine_; }

}  // namespace rewrite_lab
