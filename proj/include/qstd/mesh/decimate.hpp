// Quadric-error-metric edge contraction and the pooling maps between levels.
//
// Contractions are restricted to the edge endpoints, so every coarse vertex is
// a fine vertex kept in place. Pooling copies the kept vertex; unpooling
// projects each fine vertex onto its closest coarse triangle and blends the
// three corners with barycentric weights.
#pragma once

#include "qstd/mesh/adjacency.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

namespace qstd::mesh {

struct WeightedSource {
  int index = 0;
  double weight = 0.0;
  bool operator==(const WeightedSource&) const = default;
};

/// Row i of the output is sum_j w_j * input[src_j], evaluated in the affine
/// form  x[s0] + sum_{j>0} w_j (x[sj] - x[s0])  so constant fields are
/// reproduced exactly.
using AffineRows = std::vector<std::vector<WeightedSource>>;

struct DownsampleMap {
  int fine_count = 0;
  int coarse_count = 0;
  AffineRows pool;    // coarse_count rows over fine indices
  AffineRows unpool;  // fine_count rows over coarse indices
  bool operator==(const DownsampleMap&) const = default;
};

inline Mat apply_affine_rows(const AffineRows& rows, const Mat& x) {
  Mat out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& src = rows[i];
    auto r = out.row(static_cast<Index>(i));
    r = x.row(src.front().index);
    for (std::size_t j = 1; j < src.size(); ++j) {
      r += src[j].weight * (x.row(src[j].index) - x.row(src.front().index));
    }
  }
  return out;
}

inline Mat pool(const DownsampleMap& map, const Mat& fine) {
  require_shape(fine.rows() == map.fine_count, "pool: expected " + std::to_string(map.fine_count) + " rows");
  return apply_affine_rows(map.pool, fine);
}

inline Mat unpool(const DownsampleMap& map, const Mat& coarse) {
  require_shape(coarse.rows() == map.coarse_count, "unpool: expected " + std::to_string(map.coarse_count) + " rows");
  return apply_affine_rows(map.unpool, coarse);
}

/// Throws MeshError when a map breaks its invariants.
inline void validate(const DownsampleMap& map) {
  auto check = [](const AffineRows& rows, int range, const char* what) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].empty()) throw MeshError(std::string(what) + " row " + std::to_string(i) + " has no source");
      double sum = 0.0;
      for (const auto& s : rows[i]) {
        if (s.weight < 0.0) throw MeshError(std::string(what) + " has a negative weight");
        if (s.index < 0 || s.index >= range) throw MeshError(std::string(what) + " index out of range");
        sum += s.weight;
      }
      if (std::abs(sum - 1.0) > 1e-6) throw MeshError(std::string(what) + " weights do not sum to 1");
    }
  };
  if (static_cast<int>(map.pool.size()) != map.coarse_count) throw MeshError("pool row count mismatch");
  if (static_cast<int>(map.unpool.size()) != map.fine_count) throw MeshError("unpool row count mismatch");
  check(map.pool, map.fine_count, "pool");
  check(map.unpool, map.coarse_count, "unpool");
}

namespace detail {

using Vec3 = Eigen::Vector3d;
using Quadric = Eigen::Matrix4d;

inline Vec3 pos(const Mat& v, int i) { return v.row(i).transpose(); }

inline Vec3 face_normal(const Vec3& a, const Vec3& b, const Vec3& c) { return (b - a).cross(c - a); }

inline double quadric_cost(const Quadric& q, const Vec3& p) {
  Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  return std::max(0.0, h.dot(q * h));
}

// Closest point on triangle abc to p, returned as barycentric weights.
inline Eigen::Vector3d closest_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

}  // namespace detail

/// Contracts edges of `mesh` until floor(V * keep_ratio) vertices remain.
inline std::pair<TriangleMesh, DownsampleMap> downsample_mesh(const TriangleMesh& mesh, double keep_ratio) {
  using namespace detail;
  validate(mesh);
  if (!(keep_ratio > 0.0 && keep_ratio < 1.0)) throw MeshError("keep_ratio must lie in (0, 1)");
  const int n = mesh.vertex_count();
  const int target = static_cast<int>(std::floor(n * keep_ratio));
  if (target < 4) throw MeshError("keep_ratio leaves " + std::to_string(target) + " vertices; at least 4 required");
  if (target >= n) throw MeshError("keep_ratio removes no vertices");

  const Mat& P = mesh.vertices;
  std::vector<Face> faces = mesh.faces;
  std::vector<char> face_alive(faces.size(), 1);
  std::vector<std::set<int>> vfaces(static_cast<std::size_t>(n));
  std::vector<Quadric> quadric(static_cast<std::size_t>(n), Quadric::Zero());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int i : t) vfaces[static_cast<std::size_t>(i)].insert(static_cast<int>(f));
    Vec3 nrm = face_normal(pos(P, t[0]), pos(P, t[1]), pos(P, t[2]));
    const double len = nrm.norm();
    if (len <= 0) continue;
    nrm /= len;
    Eigen::Vector4d plane(nrm.x(), nrm.y(), nrm.z(), -nrm.dot(pos(P, t[0])));
    Quadric k = plane * plane.transpose();
    for (int i : t) quadric[static_cast<std::size_t>(i)] += k;
  }

  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  std::vector<int> version(static_cast<std::size_t>(n), 0);

  auto neighbors = [&](int v) {
    std::set<int> out;
    for (int f : vfaces[static_cast<std::size_t>(v)]) {
      for (int i : faces[static_cast<std::size_t>(f)]) {
        if (i != v) out.insert(i);
      }
    }
    return out;
  };

  // (cost, removed, kept, version_removed, version_kept); smallest first.
  using Entry = std::tuple<double, int, int, int, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  auto push_edge = [&](int a, int b) {
    Quadric q = quadric[static_cast<std::size_t>(a)] + quadric[static_cast<std::size_t>(b)];
    const double keep_b = quadric_cost(q, pos(P, b));
    const double keep_a = quadric_cost(q, pos(P, a));
    if (keep_b < keep_a || (keep_b == keep_a && b < a)) {
      heap.emplace(keep_b, a, b, version[static_cast<std::size_t>(a)], version[static_cast<std::size_t>(b)]);
    } else {
      heap.emplace(keep_a, b, a, version[static_cast<std::size_t>(b)], version[static_cast<std::size_t>(a)]);
    }
  };
  auto push_all = [&]() {
    for (int a = 0; a < n; ++a) {
      if (!alive[static_cast<std::size_t>(a)]) continue;
      for (int b : neighbors(a)) {
        if (a < b) push_edge(a, b);
      }
    }
  };
  push_all();

  auto collapsible = [&](int r, int k) {
    auto nr = neighbors(r);
    if (!nr.count(k)) return false;
    auto nk = neighbors(k);
    int common = 0;
    for (int w : nr) common += static_cast<int>(nk.count(w));
    int shared = 0;
    for (int f : vfaces[static_cast<std::size_t>(r)]) {
      const auto& t = faces[static_cast<std::size_t>(f)];
      if (t[0] == k || t[1] == k || t[2] == k) ++shared;
    }
    if (common != shared) return false;
    for (int f : vfaces[static_cast<std::size_t>(r)]) {
      Face t = faces[static_cast<std::size_t>(f)];
      if (t[0] == k || t[1] == k || t[2] == k) continue;
      Vec3 before = face_normal(pos(P, t[0]), pos(P, t[1]), pos(P, t[2]));
      for (auto& i : t) {
        if (i == r) i = k;
      }
      Vec3 after = face_normal(pos(P, t[0]), pos(P, t[1]), pos(P, t[2]));
      if (after.norm() <= 1e-12 * std::max(1.0, before.norm())) return false;
      if (before.dot(after) <= 0.0) return false;
    }
    return true;
  };

  int remaining = n;
  int remaining_at_rebuild = -1;
  while (remaining > target) {
    if (heap.empty()) {
      // Rejected edges may have become valid since; retry once per stall.
      if (remaining_at_rebuild == remaining) {
        throw MeshError("decimation stalled at " + std::to_string(remaining) + " vertices (target " +
                        std::to_string(target) + ")");
      }
      remaining_at_rebuild = remaining;
      push_all();
      continue;
    }
    auto [cost, r, k, vr, vk] = heap.top();
    heap.pop();
    (void)cost;
    if (!alive[static_cast<std::size_t>(r)] || !alive[static_cast<std::size_t>(k)]) continue;
    if (version[static_cast<std::size_t>(r)] != vr || version[static_cast<std::size_t>(k)] != vk) continue;
    if (!collapsible(r, k)) continue;

    std::vector<int> incident(vfaces[static_cast<std::size_t>(r)].begin(), vfaces[static_cast<std::size_t>(r)].end());
    for (int f : incident) {
      auto& t = faces[static_cast<std::size_t>(f)];
      const bool has_k = t[0] == k || t[1] == k || t[2] == k;
      if (has_k) {
        face_alive[static_cast<std::size_t>(f)] = 0;
        for (int i : t) vfaces[static_cast<std::size_t>(i)].erase(f);
      } else {
        for (auto& i : t) {
          if (i == r) i = k;
        }
        vfaces[static_cast<std::size_t>(k)].insert(f);
      }
    }
    vfaces[static_cast<std::size_t>(r)].clear();
    alive[static_cast<std::size_t>(r)] = 0;
    quadric[static_cast<std::size_t>(k)] += quadric[static_cast<std::size_t>(r)];
    ++version[static_cast<std::size_t>(k)];
    --remaining;
    for (int w : neighbors(k)) push_edge(k, w);
  }

  std::vector<int> to_coarse(static_cast<std::size_t>(n), -1);
  std::vector<int> kept;
  for (int i = 0; i < n; ++i) {
    if (alive[static_cast<std::size_t>(i)]) {
      to_coarse[static_cast<std::size_t>(i)] = static_cast<int>(kept.size());
      kept.push_back(i);
    }
  }
  TriangleMesh coarse;
  coarse.vertices.resize(static_cast<Index>(kept.size()), 3);
  for (std::size_t c = 0; c < kept.size(); ++c) coarse.vertices.row(static_cast<Index>(c)) = P.row(kept[c]);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (!face_alive[f]) continue;
    const auto& t = faces[f];
    coarse.faces.push_back({to_coarse[static_cast<std::size_t>(t[0])], to_coarse[static_cast<std::size_t>(t[1])],
                            to_coarse[static_cast<std::size_t>(t[2])]});
  }
  validate(coarse);

  DownsampleMap map;
  map.fine_count = n;
  map.coarse_count = static_cast<int>(kept.size());
  for (int k : kept) map.pool.push_back({{k, 1.0}});
  map.unpool.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (alive[static_cast<std::size_t>(i)]) {
      map.unpool[static_cast<std::size_t>(i)] = {{to_coarse[static_cast<std::size_t>(i)], 1.0}};
      continue;
    }
    const Vec3 p = pos(P, i);
    double best = std::numeric_limits<double>::infinity();
    std::vector<WeightedSource> best_row;
    for (const auto& t : coarse.faces) {
      const Vec3 a = pos(coarse.vertices, t[0]), b = pos(coarse.vertices, t[1]), c = pos(coarse.vertices, t[2]);
      Eigen::Vector3d w = closest_barycentric(p, a, b, c);
      const double d = (w[0] * a + w[1] * b + w[2] * c - p).squaredNorm();
      if (d < best) {
        best = d;
        best_row.clear();
        for (int j = 0; j < 3; ++j) best_row.push_back({t[static_cast<std::size_t>(j)], std::max(0.0, w[j])});
      }
    }
    double sum = 0;
    for (const auto& s : best_row) sum += s.weight;
    for (auto& s : best_row) s.weight /= sum;
    // Lead with the heaviest corner so the affine form is anchored on it.
    std::stable_sort(best_row.begin(), best_row.end(),
                     [](const WeightedSource& x, const WeightedSource& y) { return x.weight > y.weight; });
    map.unpool[static_cast<std::size_t>(i)] = best_row;
  }
  return {std::move(coarse), std::move(map)};
}

}  // namespace qstd::mesh
