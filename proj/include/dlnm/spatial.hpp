#pragma once

#include <Eigen/Cholesky>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "dlnm/common.hpp"

namespace dlnm {

// Jitter keeping the intrinsic CAR precision invertible.
inline constexpr double kIcarJitter = 1e-6;

struct AdjacencyGraph {
  int n_areas = 0;
  std::vector<std::pair<int, int>> edges;  // unordered pairs stored with first < second
  std::vector<int> neighbor_counts;
  int n_components = 0;

  static AdjacencyGraph from_edges(int n_areas, const std::vector<std::pair<int, int>>& raw) {
    if (n_areas < 1) throw std::invalid_argument("graph needs at least one area");
    std::set<std::pair<int, int>> unique;
    for (auto [a, b] : raw) {
      if (a < 0 || b < 0 || a >= n_areas || b >= n_areas)
        throw data_error("adjacency edge (" + std::to_string(a) + "," + std::to_string(b) +
                         ") references an unknown area");
      if (a == b) throw data_error("adjacency contains a self-loop at area " + std::to_string(a));
      unique.insert({std::min(a, b), std::max(a, b)});
    }
    AdjacencyGraph g;
    g.n_areas = n_areas;
    g.edges.assign(unique.begin(), unique.end());
    g.neighbor_counts.assign(n_areas, 0);
    for (auto [a, b] : g.edges) {
      ++g.neighbor_counts[a];
      ++g.neighbor_counts[b];
    }
    // Count connected components by breadth-first search.
    std::vector<std::vector<int>> adj(n_areas);
    for (auto [a, b] : g.edges) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<char> seen(n_areas, 0);
    for (int s = 0; s < n_areas; ++s) {
      if (seen[s]) continue;
      ++g.n_components;
      std::queue<int> q;
      q.push(s);
      seen[s] = 1;
      while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int w : adj[v])
          if (!seen[w]) {
            seen[w] = 1;
            q.push(w);
          }
      }
    }
    return g;
  }

  // Near-square planar grid, the default synthetic neighbourhood structure.
  static AdjacencyGraph lattice(int n_areas) {
    int rows = 1;
    while ((rows + 1) * (rows + 1) <= n_areas) ++rows;
    const int cols = (n_areas + rows - 1) / rows;
    auto id = [&](int r, int c) { return r * cols + c; };
    std::vector<std::pair<int, int>> edges;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const int v = id(r, c);
        if (v >= n_areas) continue;
        if (c + 1 < cols && id(r, c + 1) < n_areas) edges.push_back({v, id(r, c + 1)});
        if (r + 1 < rows && id(r + 1, c) < n_areas) edges.push_back({v, id(r + 1, c)});
      }
    return from_edges(n_areas, edges);
  }
};

enum class SpatialKind { IID, ICAR, Leroux };

struct SpatialSpec {
  SpatialKind kind = SpatialKind::IID;
  AdjacencyGraph graph;  // for IID only n_areas is used

  static SpatialSpec iid(int n_areas) {
    SpatialSpec s;
    s.kind = SpatialKind::IID;
    s.graph.n_areas = n_areas;
    return s;
  }
  static SpatialSpec icar(AdjacencyGraph g) {
    SpatialSpec s;
    s.kind = SpatialKind::ICAR;
    s.graph = std::move(g);
    return s;
  }
  static SpatialSpec leroux(AdjacencyGraph g) {
    SpatialSpec s;
    s.kind = SpatialKind::Leroux;
    s.graph = std::move(g);
    return s;
  }

  bool needs_graph() const { return kind != SpatialKind::IID; }
  bool has_correlation() const { return kind == SpatialKind::Leroux; }

  void validate(int n_areas) const {
    if (needs_graph() && graph.n_areas != n_areas)
      throw config_error("spatial prior graph has " + std::to_string(graph.n_areas) +
                         " areas, panel has " + std::to_string(n_areas));
  }
};

// Neighbourhood structure matrix: diagonal = neighbour counts, -1 for each
// neighbouring pair. Row sums are zero, so the matrix is PSD with the
// constant vector in its null space (per connected component).
inline Matrix structure_matrix(const AdjacencyGraph& graph) {
  Matrix r = Matrix::Zero(graph.n_areas, graph.n_areas);
  for (int i = 0; i < graph.n_areas; ++i) r(i, i) = graph.neighbor_counts[i];
  for (auto [a, b] : graph.edges) {
    r(a, b) = -1.0;
    r(b, a) = -1.0;
  }
  return r;
}

inline Matrix spatial_precision(const SpatialSpec& spec, double tau,
                                std::optional<double> rho = std::nullopt) {
  if (tau <= 0.0) throw std::invalid_argument("spatial precision requires tau > 0");
  switch (spec.kind) {
    case SpatialKind::IID: {
      if (rho.has_value())
        throw std::invalid_argument("correlation parameter is meaningless for an iid prior");
      if (spec.graph.n_areas < 1)
        throw config_error("iid spatial spec needs the number of areas in its graph field");
      return tau * Matrix::Identity(spec.graph.n_areas, spec.graph.n_areas);
    }
    case SpatialKind::ICAR: {
      if (rho.has_value())
        throw std::invalid_argument("correlation parameter is fixed for the ICAR prior");
      Matrix q = structure_matrix(spec.graph);
      q.diagonal().array() += kIcarJitter;
      return tau * q;
    }
    case SpatialKind::Leroux: {
      if (!rho.has_value()) throw std::invalid_argument("Leroux prior requires rho");
      const double r = *rho;
      if (r < 0.0 || r >= 1.0)
        throw std::invalid_argument("Leroux rho must lie in [0, 1), got " + std::to_string(r));
      Matrix q = r * structure_matrix(spec.graph);
      q.diagonal().array() += (1.0 - r);
      return tau * q;
    }
  }
  throw std::logic_error("unreachable");
}

// Draw from N(0, Q^-1) given the precision matrix Q: with Q = L L', solve
// L' u = z for standard normal z.
inline Vector sample_gmrf(const Matrix& precision_matrix, std::mt19937_64& rng) {
  Eigen::LLT<Matrix> llt(precision_matrix);
  if (llt.info() != Eigen::Success)
    throw numeric_error("gmrf sampling: precision matrix is not positive definite");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(precision_matrix.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return llt.matrixU().solve(z);
}

}  // namespace dlnm
