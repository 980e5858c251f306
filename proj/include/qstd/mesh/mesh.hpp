// Triangle meshes: validation, OBJ/OFF input, OBJ output, icospheres.
#pragma once

#include "qstd/common.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace qstd::mesh {

using Face = std::array<int, 3>;

/// Vertex positions (V x 3, millimetres) plus triangle index triplets.
struct TriangleMesh {
  Mat vertices;
  std::vector<Face> faces;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

/// Throws MeshError unless every face index is in range, no face repeats an
/// index and every vertex is referenced by at least one face.
inline void validate(const TriangleMesh& mesh) {
  if (mesh.vertices.cols() != 3) throw MeshError("vertex array must be V x 3");
  const int v = mesh.vertex_count();
  if (v == 0) throw MeshError("mesh has no vertices");
  if (!mesh.vertices.allFinite()) throw MeshError("mesh has non-finite vertex positions");
  std::vector<char> used(static_cast<std::size_t>(v), 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    for (int idx : tri) {
      if (idx < 0 || idx >= v) {
        throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                        " outside [0, " + std::to_string(v) + ")");
      }
      used[static_cast<std::size_t>(idx)] = 1;
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw MeshError("face " + std::to_string(f) + " repeats a vertex index");
    }
  }
  for (int i = 0; i < v; ++i) {
    if (!used[static_cast<std::size_t>(i)]) {
      throw MeshError("vertex " + std::to_string(i) + " is not referenced by any face");
    }
  }
}

/// Order-sensitive hash of the face topology and vertex count.
inline std::uint64_t topology_hash(const TriangleMesh& mesh) {
  Fnv1a h;
  h.value(static_cast<std::int64_t>(mesh.vertex_count()));
  for (const auto& f : mesh.faces) {
    for (int i : f) h.value(static_cast<std::int32_t>(i));
  }
  return h.digest();
}

namespace detail {

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

// OBJ face corner "12/4/7" -> 11 (1-based, negative = relative).
inline int obj_index(const std::string& tok, int vertex_count, const std::string& path) {
  auto slash = tok.find('/');
  int idx = 0;
  try {
    idx = std::stoi(tok.substr(0, slash));
  } catch (const std::exception&) {
    throw IoError(path + ": bad face index '" + tok + "'");
  }
  if (idx < 0) return vertex_count + idx;
  return idx - 1;
}

}  // namespace detail

/// Reads a triangulated OBJ. Polygons with more than three corners are rejected.
inline TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::array<double, 3>> pos;
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    auto t = detail::tokens(line);
    if (t.empty()) continue;
    if (t[0] == "v") {
      if (t.size() < 4) throw IoError(path + ": vertex line needs 3 coordinates");
      pos.push_back({std::stod(t[1]), std::stod(t[2]), std::stod(t[3])});
    } else if (t[0] == "f") {
      if (t.size() != 4) throw IoError(path + ": only triangle faces are supported");
      const int n = static_cast<int>(pos.size());
      mesh.faces.push_back({detail::obj_index(t[1], n, path), detail::obj_index(t[2], n, path),
                            detail::obj_index(t[3], n, path)});
    }
  }
  mesh.vertices.resize(static_cast<Index>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (int k = 0; k < 3; ++k) mesh.vertices(static_cast<Index>(i), k) = pos[i][static_cast<std::size_t>(k)];
  }
  validate(mesh);
  return mesh;
}

/// Reads only the vertex positions of an OBJ file (faces ignored).
inline Mat read_obj_positions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::array<double, 3>> pos;
  std::string line;
  while (std::getline(in, line)) {
    auto t = detail::tokens(line);
    if (t.size() >= 4 && t[0] == "v") pos.push_back({std::stod(t[1]), std::stod(t[2]), std::stod(t[3])});
  }
  Mat out(static_cast<Index>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (int k = 0; k < 3; ++k) out(static_cast<Index>(i), k) = pos[i][static_cast<std::size_t>(k)];
  }
  return out;
}

inline TriangleMesh read_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    for (auto& w : detail::tokens(line)) words.push_back(w);
  }
  std::size_t p = 0;
  auto next = [&]() -> const std::string& {
    if (p >= words.size()) throw IoError(path + ": truncated OFF file");
    return words[p++];
  };
  if (next() != "OFF") throw IoError(path + ": missing OFF header");
  const int nv = std::stoi(next());
  const int nf = std::stoi(next());
  (void)next();
  TriangleMesh mesh;
  mesh.vertices.resize(nv, 3);
  for (int i = 0; i < nv; ++i) {
    for (int k = 0; k < 3; ++k) mesh.vertices(i, k) = std::stod(next());
  }
  for (int f = 0; f < nf; ++f) {
    const int n = std::stoi(next());
    if (n != 3) throw IoError(path + ": only triangle faces are supported");
    Face tri{std::stoi(next()), std::stoi(next()), std::stoi(next())};
    mesh.faces.push_back(tri);
  }
  validate(mesh);
  return mesh;
}

/// Dispatches on extension (.obj / .off).
inline TriangleMesh read_mesh(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "obj") return read_obj(path);
  if (ext == "off") return read_off(path);
  throw IoError("unsupported mesh format: " + path);
}

inline void write_obj(const std::string& path, const Mat& vertices, const std::vector<Face>& faces) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.precision(17);
  for (Index i = 0; i < vertices.rows(); ++i) {
    out << "v " << vertices(i, 0) << ' ' << vertices(i, 1) << ' ' << vertices(i, 2) << '\n';
  }
  for (const auto& f : faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Subdivided icosahedron projected to a sphere: 12, 42, 162, 642, ... vertices.
inline TriangleMesh icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& p : v) p.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      int ab = midpoint(tri[0], tri[1]);
      int bc = midpoint(tri[1], tri[2]);
      int ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = radius * v[i].transpose();
  mesh.faces = std::move(f);
  return mesh;
}

}  // namespace qstd::mesh
