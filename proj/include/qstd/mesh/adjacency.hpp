// Vertex adjacency and k-ring / k-disk neighbourhoods.
#pragma once

#include "qstd/mesh/mesh.hpp"

#include <algorithm>
#include <vector>

namespace qstd::mesh {

/// Per-vertex sorted neighbour lists (symmetric, no self loops).
struct AdjacencyMap {
  std::vector<std::vector<int>> neighbors;

  int vertex_count() const { return static_cast<int>(neighbors.size()); }
  const std::vector<int>& of(int v) const { return neighbors[static_cast<std::size_t>(v)]; }
};

inline AdjacencyMap build_adjacency(const TriangleMesh& mesh) {
  validate(mesh);
  AdjacencyMap adj;
  adj.neighbors.resize(static_cast<std::size_t>(mesh.vertex_count()));
  for (const auto& f : mesh.faces) {
    for (int i = 0; i < 3; ++i) {
      int a = f[static_cast<std::size_t>(i)];
      int b = f[static_cast<std::size_t>((i + 1) % 3)];
      adj.neighbors[static_cast<std::size_t>(a)].push_back(b);
      adj.neighbors[static_cast<std::size_t>(b)].push_back(a);
    }
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

namespace detail {

inline void check_vertex(const AdjacencyMap& adj, int v) {
  if (v < 0 || v >= adj.vertex_count()) {
    throw MeshError("vertex " + std::to_string(v) + " out of range");
  }
}

}  // namespace detail

/// All rings 0..k of v, built with the recursion
///   ring(0) = {v},  ring(i+1) = NH(ring(i)) \ disk(i).
/// Each ring is sorted ascending. Rings past the connected component are empty.
inline std::vector<std::vector<int>> rings_up_to(const AdjacencyMap& adj, int v, int k) {
  detail::check_vertex(adj, v);
  std::vector<char> in_disk(static_cast<std::size_t>(adj.vertex_count()), 0);
  std::vector<std::vector<int>> rings;
  rings.push_back({v});
  in_disk[static_cast<std::size_t>(v)] = 1;
  for (int i = 0; i < k; ++i) {
    std::vector<int> next;
    for (int u : rings.back()) {
      for (int w : adj.of(u)) {
        if (!in_disk[static_cast<std::size_t>(w)]) {
          in_disk[static_cast<std::size_t>(w)] = 1;
          next.push_back(w);
        }
      }
    }
    std::sort(next.begin(), next.end());
    rings.push_back(std::move(next));
  }
  return rings;
}

inline std::vector<int> k_ring(const AdjacencyMap& adj, int v, int k) {
  if (k < 0) throw MeshError("k must be non-negative");
  return rings_up_to(adj, v, k).back();
}

/// Union of rings 0..k, sorted ascending.
inline std::vector<int> k_disk(const AdjacencyMap& adj, int v, int k) {
  if (k < 0) throw MeshError("k must be non-negative");
  std::vector<int> out;
  for (const auto& r : rings_up_to(adj, v, k)) out.insert(out.end(), r.begin(), r.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace qstd::mesh
