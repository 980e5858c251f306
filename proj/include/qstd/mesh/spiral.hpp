// Dilated spiral orderings used as the gather pattern of spiral convolution.
//
// Ring ordering: a ring whose induced subgraph is a single simple cycle is
// walked starting from its smallest vertex, heading first towards the smaller
// of that vertex's two ring neighbours. Any other ring (a path, a broken or
// branching patch) falls back to ascending index order. The result depends only
// on the adjacency, so face order never changes a spiral.
#pragma once

#include "qstd/binary_io.hpp"
#include "qstd/mesh/adjacency.hpp"

#include <algorithm>
#include <vector>

namespace qstd::mesh {

/// Marks a spiral slot past the end of the reachable disk; reads as a zero feature.
inline constexpr int kSpiralPad = -1;

struct SpiralIndexTable {
  int vertex_count = 0;
  int kernel_size = 0;
  int dilation = 1;
  std::vector<int> indices;  // vertex_count x kernel_size, row-major

  int at(int v, int slot) const {
    return indices[static_cast<std::size_t>(v) * static_cast<std::size_t>(kernel_size) +
                   static_cast<std::size_t>(slot)];
  }
  std::vector<int> row(int v) const {
    auto begin = indices.begin() + static_cast<std::ptrdiff_t>(v) * kernel_size;
    return {begin, begin + kernel_size};
  }
  bool operator==(const SpiralIndexTable&) const = default;
};

/// Orders one ring per the convention in the file header.
inline std::vector<int> order_ring(const AdjacencyMap& adj, const std::vector<int>& ring) {
  std::vector<int> sorted = ring;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() < 3) return sorted;

  auto in_ring = [&](int v) { return std::binary_search(sorted.begin(), sorted.end(), v); };
  std::vector<std::vector<int>> local(sorted.size());
  auto pos = [&](int v) {
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
  };
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (int w : adj.of(sorted[i])) {
      if (in_ring(w)) local[i].push_back(w);
    }
    if (local[i].size() != 2) return sorted;
  }

  std::vector<int> walk{sorted.front()};
  std::vector<char> seen(sorted.size(), 0);
  seen[0] = 1;
  int prev = sorted.front();
  int cur = std::min(local[0][0], local[0][1]);
  while (!seen[pos(cur)]) {
    seen[pos(cur)] = 1;
    walk.push_back(cur);
    const auto& nb = local[pos(cur)];
    int next = nb[0] == prev ? nb[1] : nb[0];
    prev = cur;
    cur = next;
  }
  // Two or more disjoint cycles: not a single ring walk.
  if (walk.size() != sorted.size()) return sorted;
  return walk;
}

/// One spiral row: the center, then every `dilation`-th vertex of the
/// concatenated ordered rings 1, 2, ..., padded with kSpiralPad to kernel_size.
inline std::vector<int> spiral_sequence(const AdjacencyMap& adj, const TriangleMesh& mesh, int v,
                                        int kernel_size, int dilation) {
  if (kernel_size < 1) throw MeshError("kernel_size must be >= 1");
  if (dilation < 1) throw MeshError("dilation must be >= 1");
  if (adj.vertex_count() != mesh.vertex_count()) throw MeshError("adjacency does not match mesh");
  detail::check_vertex(adj, v);

  const std::size_t needed =
      kernel_size > 1 ? static_cast<std::size_t>(kernel_size - 2) * static_cast<std::size_t>(dilation) + 1 : 0;
  std::vector<int> tail;
  std::vector<char> in_disk(static_cast<std::size_t>(adj.vertex_count()), 0);
  in_disk[static_cast<std::size_t>(v)] = 1;
  std::vector<int> ring{v};
  while (tail.size() < needed) {
    std::vector<int> next;
    for (int u : ring) {
      for (int w : adj.of(u)) {
        if (!in_disk[static_cast<std::size_t>(w)]) {
          in_disk[static_cast<std::size_t>(w)] = 1;
          next.push_back(w);
        }
      }
    }
    if (next.empty()) break;
    ring = order_ring(adj, next);
    tail.insert(tail.end(), ring.begin(), ring.end());
  }

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(kernel_size));
  out.push_back(v);
  for (std::size_t i = 0; out.size() < static_cast<std::size_t>(kernel_size); i += static_cast<std::size_t>(dilation)) {
    out.push_back(i < tail.size() ? tail[i] : kSpiralPad);
  }
  return out;
}

inline SpiralIndexTable build_spiral_table(const TriangleMesh& mesh, int kernel_size, int dilation) {
  auto adj = build_adjacency(mesh);
  SpiralIndexTable table;
  table.vertex_count = mesh.vertex_count();
  table.kernel_size = kernel_size;
  table.dilation = dilation;
  table.indices.reserve(static_cast<std::size_t>(table.vertex_count) * static_cast<std::size_t>(kernel_size));
  for (int v = 0; v < table.vertex_count; ++v) {
    auto row = spiral_sequence(adj, mesh, v, kernel_size, dilation);
    table.indices.insert(table.indices.end(), row.begin(), row.end());
  }
  return table;
}

// Container "QSTDSPRL" v1: header, i32 V, i32 kernel, i32 dilation, V*kernel i32.
inline constexpr char kSpiralMagic[9] = "QSTDSPRL";

inline void write_spiral_body(io::Writer& w, const SpiralIndexTable& t) {
  w.i32(t.vertex_count);
  w.i32(t.kernel_size);
  w.i32(t.dilation);
  for (int i : t.indices) w.i32(i);
}

inline SpiralIndexTable read_spiral_body(io::Reader& r) {
  SpiralIndexTable t;
  t.vertex_count = r.i32();
  t.kernel_size = r.i32();
  t.dilation = r.i32();
  if (t.vertex_count < 0 || t.kernel_size < 1 || t.dilation < 1) throw IoError(r.origin() + ": bad spiral table");
  t.indices.resize(static_cast<std::size_t>(t.vertex_count) * static_cast<std::size_t>(t.kernel_size));
  for (auto& i : t.indices) {
    i = r.i32();
    if (i != kSpiralPad && (i < 0 || i >= t.vertex_count)) throw IoError(r.origin() + ": spiral index out of range");
  }
  return t;
}

inline std::vector<char> serialize(const SpiralIndexTable& t) {
  io::Writer w;
  w.header(kSpiralMagic, 1);
  write_spiral_body(w, t);
  return w.bytes();
}

inline SpiralIndexTable deserialize_spiral(std::vector<char> bytes) {
  io::Reader r(std::move(bytes));
  r.header(kSpiralMagic, 1);
  auto t = read_spiral_body(r);
  if (!r.at_end()) throw IoError("trailing bytes after spiral table");
  return t;
}

}  // namespace qstd::mesh
