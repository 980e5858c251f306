// Multi-resolution mesh pyramid: decimated levels, their spiral tables and
// the pooling maps between consecutive levels.
#pragma once

#include "qstd/binary_io.hpp"
#include "qstd/mesh/decimate.hpp"
#include "qstd/mesh/spiral.hpp"

#include <vector>

namespace qstd::mesh {

struct PyramidLevel {
  TriangleMesh mesh;
  SpiralIndexTable spiral;
};

struct MeshPyramid {
  std::vector<PyramidLevel> levels;
  std::vector<DownsampleMap> maps;  // maps[i]: level i -> level i+1

  int level_count() const { return static_cast<int>(levels.size()); }
  int vertex_count(int level) const { return levels[static_cast<std::size_t>(level)].mesh.vertex_count(); }
};

struct PyramidSpec {
  int levels = 4;
  std::vector<double> keep_ratios{0.5, 0.5, 0.5};
  int kernel_size = 9;
  int dilation = 2;
};

inline MeshPyramid build_pyramid(const TriangleMesh& mesh, int level_count, const std::vector<double>& keep_ratios,
                                 int kernel_size, int dilation) {
  if (level_count < 2) throw MeshError("a pyramid needs at least 2 levels");
  if (static_cast<int>(keep_ratios.size()) != level_count - 1) {
    throw MeshError("expected " + std::to_string(level_count - 1) + " keep ratios, got " +
                    std::to_string(keep_ratios.size()));
  }
  MeshPyramid p;
  p.levels.push_back({mesh, build_spiral_table(mesh, kernel_size, dilation)});
  for (double ratio : keep_ratios) {
    auto [coarse, map] = downsample_mesh(p.levels.back().mesh, ratio);
    auto spiral = build_spiral_table(coarse, kernel_size, dilation);
    p.levels.push_back({std::move(coarse), std::move(spiral)});
    p.maps.push_back(std::move(map));
  }
  return p;
}

inline MeshPyramid build_pyramid(const TriangleMesh& mesh, const PyramidSpec& spec) {
  return build_pyramid(mesh, spec.levels, spec.keep_ratios, spec.kernel_size, spec.dilation);
}

/// Hash over every level's topology, spiral table and pooling map.
inline std::uint64_t pyramid_hash(const MeshPyramid& p) {
  Fnv1a h;
  for (const auto& level : p.levels) {
    h.value(topology_hash(level.mesh));
    h.value(static_cast<std::int32_t>(level.spiral.kernel_size));
    h.value(static_cast<std::int32_t>(level.spiral.dilation));
    for (int i : level.spiral.indices) h.value(static_cast<std::int32_t>(i));
  }
  for (const auto& m : p.maps) {
    for (const auto* rows : {&m.pool, &m.unpool}) {
      for (const auto& row : *rows) {
        h.value(static_cast<std::uint64_t>(row.size()));
        for (const auto& s : row) {
          h.value(static_cast<std::int32_t>(s.index));
          h.value(s.weight);
        }
      }
    }
  }
  return h.digest();
}

// Container "QSTDPYRM" v1:
//   header; u32 level count L
//   per level: i32 V, i32 F, V*3 f64 positions, F*3 i32 indices, spiral body
//   per map (L-1): i32 fine, i32 coarse, pool rows, unpool rows
//   each row: u32 n, then n * (i32 index, f64 weight)
inline constexpr char kPyramidMagic[9] = "QSTDPYRM";

inline std::vector<char> serialize(const MeshPyramid& p) {
  io::Writer w;
  w.header(kPyramidMagic, 1);
  w.u32(static_cast<std::uint32_t>(p.levels.size()));
  for (const auto& level : p.levels) {
    w.i32(level.mesh.vertex_count());
    w.i32(level.mesh.face_count());
    for (Index i = 0; i < level.mesh.vertices.size(); ++i) w.f64(level.mesh.vertices.data()[i]);
    for (const auto& f : level.mesh.faces) {
      for (int i : f) w.i32(i);
    }
    write_spiral_body(w, level.spiral);
  }
  auto rows = [&](const AffineRows& r) {
    for (const auto& row : r) {
      w.u32(static_cast<std::uint32_t>(row.size()));
      for (const auto& s : row) {
        w.i32(s.index);
        w.f64(s.weight);
      }
    }
  };
  for (const auto& m : p.maps) {
    w.i32(m.fine_count);
    w.i32(m.coarse_count);
    rows(m.pool);
    rows(m.unpool);
  }
  return w.bytes();
}

inline MeshPyramid deserialize_pyramid(io::Reader& r) {
  r.header(kPyramidMagic, 1);
  MeshPyramid p;
  const auto levels = r.u32();
  if (levels < 2 || levels > 64) throw IoError(r.origin() + ": bad level count");
  for (std::uint32_t l = 0; l < levels; ++l) {
    PyramidLevel level;
    const int nv = r.i32();
    const int nf = r.i32();
    if (nv < 1 || nf < 1) throw IoError(r.origin() + ": bad level size");
    level.mesh.vertices.resize(nv, 3);
    for (Index i = 0; i < level.mesh.vertices.size(); ++i) level.mesh.vertices.data()[i] = r.f64();
    level.mesh.faces.resize(static_cast<std::size_t>(nf));
    for (auto& f : level.mesh.faces) {
      for (auto& i : f) i = r.i32();
    }
    validate(level.mesh);
    level.spiral = read_spiral_body(r);
    if (level.spiral.vertex_count != nv) throw IoError(r.origin() + ": spiral table does not match level");
    p.levels.push_back(std::move(level));
  }
  auto rows = [&](int count) {
    AffineRows out(static_cast<std::size_t>(count));
    for (auto& row : out) {
      const auto n = r.u32();
      for (std::uint32_t j = 0; j < n; ++j) {
        WeightedSource s;
        s.index = r.i32();
        s.weight = r.f64();
        row.push_back(s);
      }
    }
    return out;
  };
  for (std::uint32_t l = 0; l + 1 < levels; ++l) {
    DownsampleMap m;
    m.fine_count = r.i32();
    m.coarse_count = r.i32();
    if (m.fine_count != p.vertex_count(static_cast<int>(l)) || m.coarse_count != p.vertex_count(static_cast<int>(l) + 1)) {
      throw IoError(r.origin() + ": pooling map does not match levels");
    }
    m.pool = rows(m.coarse_count);
    m.unpool = rows(m.fine_count);
    validate(m);
    p.maps.push_back(std::move(m));
  }
  if (!r.at_end()) throw IoError(r.origin() + ": trailing bytes after pyramid");
  return p;
}

inline void save_pyramid(const std::string& path, const MeshPyramid& p) {
  io::Writer w;
  auto bytes = serialize(p);
  w.raw(bytes.data(), bytes.size());
  w.save(path);
}

inline MeshPyramid load_pyramid(const std::string& path) {
  auto r = io::Reader::from_file(path);
  return deserialize_pyramid(r);
}

}  // namespace qstd::mesh
