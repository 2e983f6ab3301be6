#include "cinpp/complex.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "cinpp/error.hpp"

namespace cinpp {

Graph build_graph(std::size_t num_nodes, std::span<const std::pair<std::int64_t, std::int64_t>> edges,
                  std::optional<Matrix> node_features, std::optional<Matrix> edge_features) {
  if (node_features && node_features->rows != num_nodes) {
    throw Error(ErrorCode::FeatureShapeMismatch,
                "node_features has " + std::to_string(node_features->rows) + " rows for " +
                    std::to_string(num_nodes) + " nodes");
  }
  if (edge_features && edge_features->rows != edges.size()) {
    throw Error(ErrorCode::FeatureShapeMismatch,
                "edge_features has " + std::to_string(edge_features->rows) + " rows for " +
                    std::to_string(edges.size()) + " edges");
  }

  std::vector<std::pair<Edge, std::size_t>> keyed;
  keyed.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto [a, b] = edges[i];
    auto in_range = [&](std::int64_t x) {
      return x >= 0 && static_cast<std::uint64_t>(x) < num_nodes;
    };
    if (!in_range(a) || !in_range(b)) {
      throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(i) + " = (" +
                                                  std::to_string(a) + ", " + std::to_string(b) +
                                                  ") with " + std::to_string(num_nodes) + " nodes");
    }
    if (a == b) {
      throw Error(ErrorCode::SelfLoop, "edge " + std::to_string(i) + " at node " + std::to_string(a));
    }
    Edge e{static_cast<NodeId>(std::min(a, b)), static_cast<NodeId>(std::max(a, b))};
    keyed.emplace_back(e, i);
  }
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 1; i < keyed.size(); ++i) {
    if (keyed[i].first == keyed[i - 1].first) {
      throw Error(ErrorCode::DuplicateEdge, "edge (" + std::to_string(keyed[i].first.u) + ", " +
                                                std::to_string(keyed[i].first.v) + ") appears twice");
    }
  }

  Graph g;
  g.num_nodes = num_nodes;
  g.node_features = std::move(node_features);
  g.edges.reserve(keyed.size());
  for (const auto& [e, _] : keyed) g.edges.push_back(e);
  if (edge_features) {
    Matrix sorted(edge_features->rows, edge_features->cols);
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      std::copy_n(edge_features->row(keyed[i].second).begin(), edge_features->cols,
                  sorted.row(i).begin());
    }
    g.edge_features = std::move(sorted);
  }
  return g;
}

Graph relabel_nodes(const Graph& graph, std::span<const NodeId> perm) {
  if (perm.size() != graph.num_nodes) {
    throw Error(ErrorCode::BadParams, "permutation size does not match node count");
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  edges.reserve(graph.edges.size());
  for (const auto& e : graph.edges) edges.emplace_back(perm[e.u], perm[e.v]);

  std::optional<Matrix> nodes;
  if (graph.node_features) {
    nodes = Matrix(graph.num_nodes, graph.node_features->cols);
    for (std::size_t i = 0; i < graph.num_nodes; ++i) {
      std::copy_n(graph.node_features->row(i).begin(), nodes->cols, nodes->row(perm[i]).begin());
    }
  }
  Graph out = build_graph(graph.num_nodes, edges, std::move(nodes), graph.edge_features);
  out.target = graph.target;
  return out;
}

namespace {

std::vector<std::vector<NodeId>> adjacency_lists(const Graph& graph) {
  std::vector<std::vector<NodeId>> adj(graph.num_nodes);
  for (const auto& e : graph.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

// Depth-first extension of chordless paths rooted at their minimum vertex.
class InducedCycleSearch {
 public:
  InducedCycleSearch(const Graph& graph, std::size_t max_size)
      : adj_(adjacency_lists(graph)), on_path_(graph.num_nodes, false), max_size_(max_size) {}

  std::vector<Cycle> run() {
    for (NodeId s = 0; s < adj_.size(); ++s) {
      path_.assign(1, s);
      on_path_[s] = true;
      for (NodeId p1 : adj_[s]) {
        if (p1 < s) continue;
        push(p1);
        extend();
        pop();
      }
      on_path_[s] = false;
    }
    std::sort(found_.begin(), found_.end());
    return std::move(found_);
  }

 private:
  bool adjacent(NodeId a, NodeId b) const {
    return std::binary_search(adj_[a].begin(), adj_[a].end(), b);
  }
  void push(NodeId v) {
    path_.push_back(v);
    on_path_[v] = true;
  }
  void pop() {
    on_path_[path_.back()] = false;
    path_.pop_back();
  }

  void extend() {
    const NodeId start = path_.front();
    const NodeId last = path_.back();
    for (NodeId w : adj_[last]) {
      if (w <= start || on_path_[w]) continue;
      // w may only touch the path at `last` (and at `start` when it closes it).
      bool chord = false;
      for (std::size_t i = 1; i + 1 < path_.size(); ++i) {
        if (adjacent(path_[i], w)) {
          chord = true;
          break;
        }
      }
      if (chord) continue;
      if (adjacent(start, w)) {
        if (path_[1] < w) {
          Cycle c = path_;
          c.push_back(w);
          found_.push_back(std::move(c));
        }
        continue;
      }
      if (path_.size() + 1 < max_size_) {
        push(w);
        extend();
        pop();
      }
    }
  }

  std::vector<std::vector<NodeId>> adj_;
  std::vector<bool> on_path_;
  std::size_t max_size_;
  Cycle path_;
  std::vector<Cycle> found_;
};

}  // namespace

std::vector<Cycle> enumerate_induced_cycles(const Graph& graph, std::size_t max_size) {
  if (max_size < 3) throw Error(ErrorCode::BadParams, "max ring size must be at least 3");
  return InducedCycleSearch(graph, max_size).run();
}

// ---------------------------------------------------------------------------
// CellComplex

bool operator==(const Cell& a, const Cell& b) {
  return a.id == b.id && a.dim == b.dim && a.boundary == b.boundary;
}

bool operator==(const CellComplex& a, const CellComplex& b) {
  return a.cells_ == b.cells_ && a.tables_.coboundary == b.tables_.coboundary &&
         a.tables_.upper == b.tables_.upper && a.tables_.lower == b.tables_.lower &&
         a.max_ring_size_ == b.max_ring_size_;
}

CellComplex::CellComplex(std::vector<Cell> cells, Tables tables, std::size_t max_ring_size)
    : cells_(std::move(cells)), tables_(std::move(tables)), max_ring_size_(max_ring_size) {
  const std::size_t n = cells_.size();
  if (tables_.coboundary.size() != n || tables_.upper.size() != n || tables_.lower.size() != n) {
    throw Error(ErrorCode::Malformed, "adjacency tables do not cover every cell");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cells_[i].id != i) throw Error(ErrorCode::Malformed, "cell ids must equal their position");
    if (cells_[i].dim < 0 || cells_[i].dim > kMaxDim) {
      throw Error(ErrorCode::Malformed, "cell " + std::to_string(i) + " has dimension outside 0..2");
    }
    if (i > 0 && cells_[i].dim < cells_[i - 1].dim) {
      throw Error(ErrorCode::Malformed, "cells must be grouped by increasing dimension");
    }
  }
  index_dimensions();
}

void CellComplex::index_dimensions() {
  dim_begin_.fill(cells_.size());
  dim_begin_[0] = 0;
  for (int k = 1; k <= kNumDims; ++k) {
    auto it = std::find_if(cells_.begin(), cells_.end(), [k](const Cell& c) { return c.dim >= k; });
    dim_begin_[k] = static_cast<std::size_t>(it - cells_.begin());
  }
}

CellComplex CellComplex::from_cells(std::vector<Cell> cells, std::size_t max_ring_size) {
  const std::size_t n = cells.size();
  Tables t;
  t.coboundary.resize(n);
  t.upper.resize(n);
  t.lower.resize(n);
  for (const Cell& c : cells) {
    for (CellId b : c.boundary) {
      if (b >= n) {
        throw Error(ErrorCode::UnknownCell, "cell " + std::to_string(c.id) + " has boundary cell " +
                                                std::to_string(b));
      }
      t.coboundary[b].push_back(c.id);
    }
  }
  for (auto& co : t.coboundary) std::sort(co.begin(), co.end());

  for (const Cell& c : cells) {
    auto& up = t.upper[c.id];
    for (CellId delta : t.coboundary[c.id]) {
      for (CellId tau : cells[delta].boundary) {
        if (tau != c.id) up.push_back({tau, delta});
      }
    }
    std::sort(up.begin(), up.end());
    auto& low = t.lower[c.id];
    for (CellId delta : c.boundary) {
      for (CellId tau : t.coboundary[delta]) {
        if (tau != c.id) low.push_back({tau, delta});
      }
    }
    std::sort(low.begin(), low.end());
  }
  return CellComplex(std::move(cells), std::move(t), max_ring_size);
}

std::size_t CellComplex::num_cells(int dim) const {
  if (dim < 0 || dim > kMaxDim) return 0;
  return dim_begin_[dim + 1] - dim_begin_[dim];
}

CellId CellComplex::offset(int dim) const {
  if (dim < 0 || dim > kMaxDim) throw Error(ErrorCode::BadParams, "dimension outside 0..2");
  return static_cast<CellId>(dim_begin_[dim]);
}

void CellComplex::check(CellId id) const {
  if (id >= cells_.size()) {
    throw Error(ErrorCode::UnknownCell, "cell " + std::to_string(id) + " not in complex of " +
                                            std::to_string(cells_.size()) + " cells");
  }
}

const Cell& CellComplex::cell(CellId id) const {
  check(id);
  return cells_[id];
}

std::span<const CellId> CellComplex::boundary(CellId id) const {
  check(id);
  return cells_[id].boundary;
}

std::span<const CellId> CellComplex::coboundary(CellId id) const {
  check(id);
  return tables_.coboundary[id];
}

std::span<const Incidence> CellComplex::upper_neighbors(CellId id) const {
  check(id);
  return tables_.upper[id];
}

std::span<const Incidence> CellComplex::lower_neighbors(CellId id) const {
  check(id);
  return tables_.lower[id];
}

CellComplex lift(const Graph& graph, std::size_t max_ring_size) {
  const auto cycles = enumerate_induced_cycles(graph, max_ring_size);
  const std::size_t n = graph.num_nodes;
  const std::size_t m = graph.edges.size();

  std::vector<Cell> cells;
  cells.reserve(n + m + cycles.size());
  for (std::size_t v = 0; v < n; ++v) cells.push_back({static_cast<CellId>(v), 0, {}});
  for (std::size_t i = 0; i < m; ++i) {
    const Edge& e = graph.edges[i];
    cells.push_back({static_cast<CellId>(n + i), 1, {e.u, e.v}});
  }
  auto edge_cell = [&](NodeId a, NodeId b) {
    Edge key{std::min(a, b), std::max(a, b)};
    auto it = std::lower_bound(graph.edges.begin(), graph.edges.end(), key);
    return static_cast<CellId>(n + static_cast<std::size_t>(it - graph.edges.begin()));
  };
  for (const Cycle& c : cycles) {
    Cell ring{static_cast<CellId>(cells.size()), 2, {}};
    for (std::size_t i = 0; i < c.size(); ++i) {
      ring.boundary.push_back(edge_cell(c[i], c[(i + 1) % c.size()]));
    }
    cells.push_back(std::move(ring));
  }
  return CellComplex::from_cells(std::move(cells), max_ring_size);
}

std::optional<Cycle> ring_vertices(const CellComplex& complex, CellId ring) {
  const Cell& r = complex.cell(ring);
  if (r.dim != 2 || r.boundary.size() < 3) return std::nullopt;
  auto ends = [&](CellId e) -> std::optional<std::pair<CellId, CellId>> {
    if (e >= complex.size()) return std::nullopt;
    const Cell& c = complex.cell(e);
    if (c.dim != 1 || c.boundary.size() != 2) return std::nullopt;
    return std::pair{c.boundary[0], c.boundary[1]};
  };
  const auto first = ends(r.boundary.front());
  const auto second = ends(r.boundary[1]);
  if (!first || !second) return std::nullopt;
  // Start at the endpoint of the first edge that is not shared with the second.
  CellId current;
  if (first->second == second->first || first->second == second->second) {
    current = first->first;
  } else if (first->first == second->first || first->first == second->second) {
    current = first->second;
  } else {
    return std::nullopt;
  }
  Cycle walk;
  for (CellId e : r.boundary) {
    const auto uv = ends(e);
    if (!uv) return std::nullopt;
    CellId next;
    if (uv->first == current) {
      next = uv->second;
    } else if (uv->second == current) {
      next = uv->first;
    } else {
      return std::nullopt;
    }
    walk.push_back(current);
    current = next;
  }
  if (current != walk.front()) return std::nullopt;
  std::vector<NodeId> sorted = walk;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return std::nullopt;
  return walk;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::BadBoundary: return "bad-boundary";
    case ViolationKind::EdgeBoundary: return "edge-boundary";
    case ViolationKind::RingNotCycle: return "ring-not-cycle";
    case ViolationKind::Duality: return "duality";
    case ViolationKind::UpperAdjacency: return "upper-adjacency";
    case ViolationKind::LowerAdjacency: return "lower-adjacency";
    case ViolationKind::Truncation: return "truncation";
    case ViolationKind::Layout: return "layout";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

ValidationReport validate(const CellComplex& complex) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, CellId cell, std::string detail) {
    report.violations.push_back({kind, cell, std::move(detail)});
  };
  const auto cells = complex.cells();
  const auto& t = complex.tables();
  const std::size_t n = cells.size();

  bool boundaries_ok = true;
  for (const Cell& c : cells) {
    for (CellId b : c.boundary) {
      if (b >= n) {
        add(ViolationKind::BadBoundary, c.id, "boundary cell " + std::to_string(b) + " does not exist");
        boundaries_ok = false;
      } else if (cells[b].dim != c.dim - 1) {
        add(ViolationKind::BadBoundary, c.id,
            "boundary cell " + std::to_string(b) + " has dimension " + std::to_string(cells[b].dim));
      }
    }
    if (c.dim == 0 && !c.boundary.empty()) {
      add(ViolationKind::BadBoundary, c.id, "vertex with non-empty boundary");
    }
    if (c.dim == 1) {
      if (c.boundary.size() != 2 || c.boundary[0] == c.boundary[1]) {
        add(ViolationKind::EdgeBoundary, c.id, "edge boundary must be two distinct vertices");
      }
    }
    if (c.dim == 2 && !ring_vertices(complex, c.id)) {
      add(ViolationKind::RingNotCycle, c.id, "ring boundary is not a simple closed cycle");
    }
  }
  if (!boundaries_ok) return report;

  // Recompute the derived tables from boundaries and compare.
  std::vector<Cell> copy(cells.begin(), cells.end());
  const CellComplex expected = CellComplex::from_cells(std::move(copy));
  const auto& e = expected.tables();
  for (CellId id = 0; id < n; ++id) {
    auto co = t.coboundary[id];
    std::sort(co.begin(), co.end());
    if (co != e.coboundary[id]) {
      add(ViolationKind::Duality, id, "co-boundary disagrees with boundary relation");
    }
    auto up = t.upper[id];
    std::sort(up.begin(), up.end());
    if (up != e.upper[id]) {
      add(ViolationKind::UpperAdjacency, id, "upper neighbourhood disagrees with co-boundaries");
    }
    auto low = t.lower[id];
    std::sort(low.begin(), low.end());
    if (low != e.lower[id]) {
      add(ViolationKind::LowerAdjacency, id, "lower neighbourhood disagrees with boundaries");
    }
    const int d = cells[id].dim;
    if (d == 0 && !t.lower[id].empty()) add(ViolationKind::Truncation, id, "vertex with lower neighbours");
    if (d == 2 && (!t.coboundary[id].empty() || !t.upper[id].empty())) {
      add(ViolationKind::Truncation, id, "ring with co-boundary or upper neighbours");
    }
  }
  return report;
}

UnionResult disjoint_union(const CellComplex& a, const CellComplex& b) {
  UnionResult out;
  out.from_a.resize(a.size());
  out.from_b.resize(b.size());
  CellId next = 0;
  for (int k = 0; k <= kMaxDim; ++k) {
    for (std::size_t i = 0; i < a.num_cells(k); ++i) out.from_a[a.offset(k) + i] = next++;
    for (std::size_t i = 0; i < b.num_cells(k); ++i) out.from_b[b.offset(k) + i] = next++;
  }
  std::vector<Cell> cells(a.size() + b.size());
  auto place = [&](const CellComplex& src, const std::vector<CellId>& map) {
    for (const Cell& c : src.cells()) {
      Cell& dst = cells[map[c.id]];
      dst.id = map[c.id];
      dst.dim = c.dim;
      dst.boundary.clear();
      for (CellId x : c.boundary) dst.boundary.push_back(map[x]);
    }
  };
  place(a, out.from_a);
  place(b, out.from_b);
  out.complex = CellComplex::from_cells(std::move(cells), std::max(a.max_ring_size(), b.max_ring_size()));
  return out;
}

}  // namespace cinpp
