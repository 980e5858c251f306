// Run records: one JSON file per CLI invocation under <out>/records/.
#pragma once

#include "qstd/json_util.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#ifndef QSTD_SOURCE_REVISION
#define QSTD_SOURCE_REVISION "unknown"
#endif

namespace qstd::harness {

struct RunRecord {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string source_revision = QSTD_SOURCE_REVISION;
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<double>> curves;
  std::map<std::string, std::string> info;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> artifacts;  // relative to the output directory
};

inline Json to_json(const RunRecord& r) {
  return Json{{"command", r.command},
              {"config_hash", r.config_hash},
              {"seed", r.seed},
              {"source_revision", r.source_revision},
              {"metrics", r.metrics},
              {"curves", r.curves},
              {"info", r.info},
              {"wall_clock_seconds", r.wall_clock_seconds},
              {"artifacts", r.artifacts}};
}

inline RunRecord run_record_from_json(const Json& j) {
  RunRecord r;
  ObjectReader o(j, "record");
  o.opt("command", r.command);
  o.opt("config_hash", r.config_hash);
  o.opt("seed", r.seed);
  o.opt("source_revision", r.source_revision);
  o.opt("metrics", r.metrics);
  o.opt("curves", r.curves);
  o.opt("info", r.info);
  o.opt("wall_clock_seconds", r.wall_clock_seconds);
  o.opt("artifacts", r.artifacts);
  o.done();
  return r;
}

/// Writes <out>/records/<command>.json, or <command>-N.json when that name is
/// taken; existing records are never overwritten. Every artifact must exist.
inline std::string write_record(const RunRecord& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  for (const auto& a : r.artifacts) {
    if (!fs::exists(fs::path(out_dir) / a)) throw IoError("record artifact missing: " + a);
  }
  const fs::path dir = fs::path(out_dir) / "records";
  fs::create_directories(dir);
  fs::path path = dir / (r.command + ".json");
  for (int n = 1; fs::exists(path); ++n) path = dir / (r.command + "-" + std::to_string(n) + ".json");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
  return path.string();
}

inline RunRecord read_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open record " + path);
  try {
    return run_record_from_json(Json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace qstd::harness
