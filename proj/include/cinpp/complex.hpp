#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cinpp/matrix.hpp"

namespace cinpp {

using NodeId = std::uint32_t;
using CellId = std::uint32_t;

inline constexpr int kMaxDim = 2;
inline constexpr int kNumDims = kMaxDim + 1;

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  auto operator<=>(const Edge&) const = default;
};

// Simple undirected graph. Edges are stored with u < v in lexicographic order;
// edge feature rows follow that order.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  std::optional<Matrix> node_features;
  std::optional<Matrix> edge_features;
  std::vector<double> target;  // empty when unlabeled
};

// Validates and canonicalises an edge list. Endpoints are signed so that
// negative ids coming from untrusted input are reported instead of wrapped.
// Edge feature rows are given in input order and are permuted along with the
// edges.
Graph build_graph(std::size_t num_nodes, std::span<const std::pair<std::int64_t, std::int64_t>> edges,
                  std::optional<Matrix> node_features = std::nullopt,
                  std::optional<Matrix> edge_features = std::nullopt);

// Returns the graph with node i renamed to perm[i].
Graph relabel_nodes(const Graph& graph, std::span<const NodeId> perm);

using Cycle = std::vector<NodeId>;

// All chordless cycles with 3..max_size vertices, each rotated to start at its
// minimum vertex and oriented so that the second vertex is the smaller of the
// two neighbours of the first. The result is sorted lexicographically.
std::vector<Cycle> enumerate_induced_cycles(const Graph& graph, std::size_t max_size);

struct Cell {
  CellId id = 0;
  int dim = 0;
  std::vector<CellId> boundary;  // ring boundaries are listed in cycle order
};

// One entry of an upper or lower neighbourhood: the adjacent cell and the
// cell through which the adjacency is witnessed.
struct Incidence {
  CellId cell = 0;
  CellId witness = 0;
  auto operator<=>(const Incidence&) const = default;
};

// Two-dimensional regular cell complex stored as its face poset. Cell ids are
// contiguous and grouped by dimension (all 0-cells, then 1-cells, then
// 2-cells). Immutable after construction.
class CellComplex {
 public:
  struct Tables {
    std::vector<std::vector<CellId>> coboundary;
    std::vector<std::vector<Incidence>> upper;
    std::vector<std::vector<Incidence>> lower;
  };

  CellComplex() = default;

  // Derives co-boundary, upper and lower tables from the boundary lists.
  static CellComplex from_cells(std::vector<Cell> cells, std::size_t max_ring_size = 0);

  // Adopts the given tables verbatim. Used for deserialisation and for feeding
  // deliberately broken complexes to validate().
  CellComplex(std::vector<Cell> cells, Tables tables, std::size_t max_ring_size = 0);

  std::size_t size() const { return cells_.size(); }
  std::size_t num_cells(int dim) const;
  CellId offset(int dim) const;

  std::span<const Cell> cells() const { return cells_; }
  const Cell& cell(CellId id) const;
  int dim(CellId id) const { return cell(id).dim; }

  std::span<const CellId> boundary(CellId id) const;
  std::span<const CellId> coboundary(CellId id) const;
  std::span<const Incidence> upper_neighbors(CellId id) const;
  std::span<const Incidence> lower_neighbors(CellId id) const;

  const Tables& tables() const { return tables_; }
  std::size_t max_ring_size() const { return max_ring_size_; }

  friend bool operator==(const CellComplex& a, const CellComplex& b);

 private:
  void check(CellId id) const;
  void index_dimensions();

  std::vector<Cell> cells_;
  Tables tables_;
  std::size_t max_ring_size_ = 0;
  std::array<std::size_t, kNumDims + 1> dim_begin_{};
};

bool operator==(const Cell& a, const Cell& b);

// Vertices -> 0-cells (by node id), edges -> 1-cells (canonical edge order),
// induced cycles up to max_ring_size -> 2-cells (canonical cycle order).
CellComplex lift(const Graph& graph, std::size_t max_ring_size);

// Vertex sequence traced by a ring's boundary edges, or nullopt when the
// boundary is not a single simple closed cycle.
std::optional<Cycle> ring_vertices(const CellComplex& complex, CellId ring);

enum class ViolationKind {
  BadBoundary,
  EdgeBoundary,
  RingNotCycle,
  Duality,
  UpperAdjacency,
  LowerAdjacency,
  Truncation,
  Layout,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  CellId cell;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

ValidationReport validate(const CellComplex& complex);

// Disjoint union; cells of `a` precede cells of `b` within each dimension.
struct UnionResult {
  CellComplex complex;
  std::vector<CellId> from_a;  // old id in a -> id in union
  std::vector<CellId> from_b;
};
UnionResult disjoint_union(const CellComplex& a, const CellComplex& b);

}  // namespace cinpp
