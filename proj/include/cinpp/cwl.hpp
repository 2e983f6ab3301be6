#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cinpp/complex.hpp"
#include "cinpp/features.hpp"

namespace cinpp {

using ColorId = std::uint32_t;

// Assigns dense ids to signatures. Two signatures receive the same id iff they
// are equal, so interning is injective by construction.
class SignatureInterner {
 public:
  ColorId intern(const std::vector<std::uint64_t>& signature);
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::vector<std::uint64_t>, ColorId> table_;
};

// One color per cell, indexed by cell id.
struct Coloring {
  std::vector<ColorId> colors;

  std::size_t size() const { return colors.size(); }
  std::size_t num_colors() const;
  friend bool operator==(const Coloring&, const Coloring&) = default;
};

enum class Scheme {
  Cin,    // boundary + upper
  CinPP,  // boundary + upper + lower
};

enum class InitMode { UniformPerDim, FromFeatures };

Coloring initial_coloring(const CellComplex& complex, InitMode mode,
                          const CochainFeatures* features = nullptr);
Coloring initial_coloring(const CellComplex& complex, InitMode mode, const CochainFeatures* features,
                          SignatureInterner& interner);

// One refinement round. The signature of a cell is its old color, the sorted
// multiset of boundary colors, the sorted multiset of (neighbour, witness)
// color pairs over the upper neighbourhood and, for CIN++, the same over the
// lower neighbourhood.
Coloring refine_step(const CellComplex& complex, const Coloring& coloring, Scheme scheme);
Coloring refine_step(const CellComplex& complex, const Coloring& coloring, Scheme scheme,
                     SignatureInterner& interner);

struct RefinementResult {
  Coloring coloring;
  std::size_t iterations = 0;  // refinement rounds that changed the partition
  // First iteration whose partition of dim-k cells equals the final one.
  std::array<std::size_t, kNumDims> stabilized_at{};
  std::vector<Coloring> history;  // history[t] = coloring after t rounds
};

RefinementResult refine_to_stable(const CellComplex& complex, const Coloring& initial, Scheme scheme,
                                  std::size_t max_iters);

// WL-style one-sided test: true proves the complexes non-isomorphic, false is
// inconclusive.
bool distinguishable(const CellComplex& a, const CellComplex& b, Scheme scheme,
                     InitMode mode = InitMode::UniformPerDim, const CochainFeatures* features_a = nullptr,
                     const CochainFeatures* features_b = nullptr);

// c ⊑ d: equal colors under `a` imply equal colors under `b`.
bool refines(const Coloring& a, const Coloring& b);
bool coloring_equivalent(const Coloring& a, const Coloring& b);

// Same partition restricted to the given cells.
bool same_partition(const Coloring& a, const Coloring& b, std::span<const CellId> cells);

}  // namespace cinpp
