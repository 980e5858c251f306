// Motion sequence container and OBJ-sequence importer.
//
// Motion file:
//   "QSTDMOTN" u32 version u32 reserved
//   u32 frames, u32 vertices, f64 frame_rate
//   frames*vertices*3 f32 (frame-major, x y z per vertex)
#pragma once

#include "qstd/binary_io.hpp"
#include "qstd/mesh/mesh.hpp"
#include "qstd/stage1/types.hpp"

#include <algorithm>
#include <filesystem>

namespace qstd::data {

using autoencoder::FaceTemplate;
using autoencoder::MotionSequence;

inline constexpr char kMotionMagic[9] = "QSTDMOTN";

inline void save_motion(const std::string& path, const MotionSequence& m) {
  io::Writer w;
  w.header(kMotionMagic, 1);
  w.u32(static_cast<std::uint32_t>(m.frames()));
  w.u32(static_cast<std::uint32_t>(m.vertices()));
  w.f64(m.frame_rate);
  for (Index i = 0; i < m.data.size(); ++i) w.f32(static_cast<float>(m.data.data()[i]));
  w.save(path);
}

inline MotionSequence load_motion(const std::string& path) {
  auto r = io::Reader::from_file(path);
  r.header(kMotionMagic, 1);
  const auto t = r.u32();
  const auto v = r.u32();
  MotionSequence m;
  m.frame_rate = r.f64();
  if (t == 0) throw IoError(path + ": motion has no frames");
  m.data.resize(t, static_cast<Index>(v) * 3);
  for (Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = static_cast<double>(r.f32());
  if (!r.at_end()) throw IoError(path + ": trailing bytes");
  return m;
}

/// Reads every *.obj in `dir` (sorted by file name) as one frame and
/// subtracts the template positions.
inline MotionSequence import_obj_sequence(const std::string& dir, const FaceTemplate& face, double frame_rate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".obj") frames.push_back(e.path());
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw IoError(dir + ": no .obj frames");
  MotionSequence m = MotionSequence::zeros(static_cast<Index>(frames.size()), face.vertices(), frame_rate);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    Mat pos = mesh::read_obj_positions(frames[t].string());
    if (pos.rows() != face.vertices()) {
      throw IoError(frames[t].string() + ": has " + std::to_string(pos.rows()) + " vertices, template has " +
                    std::to_string(face.vertices()));
    }
    m.set_frame(static_cast<Index>(t), pos - face.positions());
  }
  return m;
}

}  // namespace qstd::data
