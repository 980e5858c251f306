// Checkpoint container.
//
//   "QSTDCKPT" u32 version u32 reserved
//   str kind, u64 config_hash, u64 seed, u64 pyramid_hash, str meta (JSON)
//   tensor list (see write_tensors)
#pragma once

#include "qstd/json_util.hpp"
#include "qstd/nn/parameters.hpp"

#include <string>

namespace qstd::nn {

inline constexpr char kCheckpointMagic[9] = "QSTDCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::string kind;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t pyramid_hash = 0;
  Json meta = Json::object();
};

inline std::uint64_t config_hash(const Json& j) { return hash_string(j.dump()); }

inline void save_checkpoint(const std::string& path, const CheckpointHeader& h, const ParameterStore& params) {
  io::Writer w;
  w.header(kCheckpointMagic, kCheckpointVersion);
  w.str(h.kind);
  w.u64(h.config_hash);
  w.u64(h.seed);
  w.u64(h.pyramid_hash);
  w.str(h.meta.dump());
  write_tensors(w, params);
  w.save(path);
}

/// Reads only the header; `r` is left positioned at the tensor list.
inline CheckpointHeader read_checkpoint_header(io::Reader& r, const std::string& expected_kind) {
  r.header(kCheckpointMagic, kCheckpointVersion);
  CheckpointHeader h;
  h.kind = r.str();
  if (h.kind != expected_kind) {
    throw IoError(r.origin() + ": checkpoint kind '" + h.kind + "', expected '" + expected_kind + "'");
  }
  h.config_hash = r.u64();
  h.seed = r.u64();
  h.pyramid_hash = r.u64();
  try {
    h.meta = Json::parse(r.str());
  } catch (const Json::exception& e) {
    throw IoError(r.origin() + ": bad checkpoint metadata: " + e.what());
  }
  return h;
}

inline void finish_tensors(io::Reader& r, ParameterStore& params) {
  read_tensors(r, params);
  if (!r.at_end()) throw IoError(r.origin() + ": trailing bytes after tensors");
}

}  // namespace qstd::nn
