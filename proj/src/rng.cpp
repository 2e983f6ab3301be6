#include "cinpp/rng.hpp"

namespace cinpp {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix(seed + kGolden)) {}

Rng Rng::split(std::string_view purpose) const {
  Rng r;
  r.key_ = mix(key_ ^ mix(fnv1a(purpose)));
  return r;
}

Rng Rng::split(std::uint64_t index) const {
  Rng r;
  r.key_ = mix(key_ + mix(index * kGolden + 1));
  return r;
}

std::uint64_t Rng::next() { return mix(key_ + (++counter_) * kGolden); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

}  // namespace cinpp
