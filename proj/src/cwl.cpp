#include "cinpp/cwl.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <unordered_map>

#include "cinpp/error.hpp"

namespace cinpp {

ColorId SignatureInterner::intern(const std::vector<std::uint64_t>& signature) {
  auto [it, inserted] = table_.try_emplace(signature, static_cast<ColorId>(table_.size()));
  return it->second;
}

std::size_t Coloring::num_colors() const {
  std::vector<ColorId> c = colors;
  std::sort(c.begin(), c.end());
  return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
}

namespace {

std::uint64_t pack(ColorId a, ColorId b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x == 0.0 ? 0.0 : x); }

}  // namespace

Coloring initial_coloring(const CellComplex& complex, InitMode mode, const CochainFeatures* features,
                          SignatureInterner& interner) {
  Coloring out;
  out.colors.resize(complex.size());
  if (mode == InitMode::UniformPerDim) {
    for (const Cell& c : complex.cells()) {
      out.colors[c.id] = interner.intern({static_cast<std::uint64_t>(c.dim)});
    }
    return out;
  }
  if (features == nullptr) {
    throw Error(ErrorCode::MissingFeatures, "from-features initialisation needs cochain features");
  }
  check_features(complex, *features);
  std::vector<std::uint64_t> sig;
  for (int k = 0; k < kNumDims; ++k) {
    const Matrix& m = (*features)[k];
    for (std::size_t i = 0; i < m.rows; ++i) {
      sig.assign({static_cast<std::uint64_t>(k), m.cols});
      for (double x : m.row(i)) sig.push_back(bits(x));
      out.colors[complex.offset(k) + i] = interner.intern(sig);
    }
  }
  return out;
}

Coloring initial_coloring(const CellComplex& complex, InitMode mode, const CochainFeatures* features) {
  SignatureInterner interner;
  return initial_coloring(complex, mode, features, interner);
}

Coloring refine_step(const CellComplex& complex, const Coloring& coloring, Scheme scheme,
                     SignatureInterner& interner) {
  if (coloring.size() != complex.size()) {
    throw Error(ErrorCode::DomainMismatch, "coloring does not cover the complex");
  }
  const auto& c = coloring.colors;
  Coloring next;
  next.colors.resize(c.size());
  std::vector<std::uint64_t> sig;
  std::vector<std::uint64_t> part;
  auto append_sorted = [&]() {
    std::sort(part.begin(), part.end());
    sig.push_back(part.size());
    sig.insert(sig.end(), part.begin(), part.end());
    part.clear();
  };
  for (CellId id = 0; id < complex.size(); ++id) {
    sig.assign({c[id]});
    for (CellId b : complex.boundary(id)) part.push_back(c[b]);
    append_sorted();
    for (const Incidence& u : complex.upper_neighbors(id)) part.push_back(pack(c[u.cell], c[u.witness]));
    append_sorted();
    if (scheme == Scheme::CinPP) {
      for (const Incidence& l : complex.lower_neighbors(id)) part.push_back(pack(c[l.cell], c[l.witness]));
      append_sorted();
    }
    next.colors[id] = interner.intern(sig);
  }
  return next;
}

Coloring refine_step(const CellComplex& complex, const Coloring& coloring, Scheme scheme) {
  SignatureInterner interner;
  return refine_step(complex, coloring, scheme, interner);
}

bool same_partition(const Coloring& a, const Coloring& b, std::span<const CellId> cells) {
  std::unordered_map<ColorId, ColorId> ab;
  std::unordered_map<ColorId, ColorId> ba;
  for (CellId id : cells) {
    auto [i, fresh_a] = ab.try_emplace(a.colors[id], b.colors[id]);
    if (i->second != b.colors[id]) return false;
    auto [j, fresh_b] = ba.try_emplace(b.colors[id], a.colors[id]);
    if (j->second != a.colors[id]) return false;
  }
  return true;
}

RefinementResult refine_to_stable(const CellComplex& complex, const Coloring& initial, Scheme scheme,
                                  std::size_t max_iters) {
  if (max_iters < 1) throw Error(ErrorCode::BadParams, "max_iters must be at least 1");
  if (initial.size() != complex.size()) {
    throw Error(ErrorCode::DomainMismatch, "coloring does not cover the complex");
  }
  std::vector<CellId> all(complex.size());
  std::iota(all.begin(), all.end(), CellId{0});

  RefinementResult result;
  result.history.push_back(initial);
  bool stable = false;
  for (std::size_t t = 0; t < max_iters; ++t) {
    Coloring next = refine_step(complex, result.history.back(), scheme);
    if (same_partition(next, result.history.back(), all)) {
      stable = true;
      break;
    }
    result.history.push_back(std::move(next));
  }
  if (!stable) {
    throw Error(ErrorCode::NotConverged,
                "partition still changing after " + std::to_string(max_iters) + " iterations");
  }
  result.iterations = result.history.size() - 1;
  result.coloring = result.history.back();

  for (int k = 0; k < kNumDims; ++k) {
    std::vector<CellId> cells(complex.num_cells(k));
    std::iota(cells.begin(), cells.end(), complex.offset(k));
    std::size_t t = 0;
    while (!same_partition(result.history[t], result.coloring, cells)) ++t;
    result.stabilized_at[k] = t;
  }
  return result;
}

namespace {

CochainFeatures stack_features(const CochainFeatures& a, const CochainFeatures& b) {
  CochainFeatures out;
  for (int k = 0; k < kNumDims; ++k) {
    if (a[k].cols != b[k].cols) {
      throw Error(ErrorCode::FeatureShapeMismatch, "feature widths differ between the complexes");
    }
    out[k] = Matrix(a[k].rows + b[k].rows, a[k].cols);
    std::copy(a[k].data.begin(), a[k].data.end(), out[k].data.begin());
    std::copy(b[k].data.begin(), b[k].data.end(), out[k].data.begin() + static_cast<std::ptrdiff_t>(a[k].data.size()));
  }
  return out;
}

}  // namespace

bool distinguishable(const CellComplex& a, const CellComplex& b, Scheme scheme, InitMode mode,
                     const CochainFeatures* features_a, const CochainFeatures* features_b) {
  for (int k = 0; k < kNumDims; ++k) {
    if (a.num_cells(k) != b.num_cells(k)) return true;
  }
  const UnionResult joint = disjoint_union(a, b);
  std::optional<CochainFeatures> stacked;
  if (mode == InitMode::FromFeatures) {
    if (features_a == nullptr || features_b == nullptr) {
      throw Error(ErrorCode::MissingFeatures, "from-features initialisation needs cochain features");
    }
    stacked = stack_features(*features_a, *features_b);
  }
  const Coloring init = initial_coloring(joint.complex, mode, stacked ? &*stacked : nullptr);
  const auto stable = refine_to_stable(joint.complex, init, scheme, joint.complex.size() + 1);

  for (int k = 0; k < kNumDims; ++k) {
    std::map<ColorId, std::ptrdiff_t> balance;
    for (std::size_t i = 0; i < a.num_cells(k); ++i) {
      ++balance[stable.coloring.colors[joint.from_a[a.offset(k) + i]]];
    }
    for (std::size_t i = 0; i < b.num_cells(k); ++i) {
      --balance[stable.coloring.colors[joint.from_b[b.offset(k) + i]]];
    }
    for (const auto& [color, count] : balance) {
      if (count != 0) return true;
    }
  }
  return false;
}

bool refines(const Coloring& a, const Coloring& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DomainMismatch, "colorings cover " + std::to_string(a.size()) + " and " +
                                               std::to_string(b.size()) + " cells");
  }
  std::unordered_map<ColorId, ColorId> image;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it, fresh] = image.try_emplace(a.colors[i], b.colors[i]);
    if (it->second != b.colors[i]) return false;
  }
  return true;
}

bool coloring_equivalent(const Coloring& a, const Coloring& b) { return refines(a, b) && refines(b, a); }

}  // namespace cinpp
