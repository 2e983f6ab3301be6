#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace cinpp {

// Counter-based generator. A stream is identified by a key derived from the
// seed and a chain of split() labels, so draws for one purpose never depend on
// how many numbers another purpose consumed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view purpose) const;
  Rng split(std::uint64_t index) const;

  result_type operator()() { return next(); }
  result_type next();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cinpp
