// Experiment configuration: one JSON document holding every stage's
// settings. Unknown keys are errors.
//
//   {
//     "seed": 0,                      required
//     "output_dir": "runs/toy",
//     "corpus": {...} | "corpus_manifest": "path/manifest.txt",
//     "pyramid": {"levels", "keep_ratios", "kernel_size", "dilation"},
//     "stage1": {...}, "stage2": {...},
//     "sampling": {"split", "samples_per_clip", "snap_to_codebook", "deterministic"}
//   }
#pragma once

#include "qstd/data/synth.hpp"
#include "qstd/mesh/pyramid.hpp"
#include "qstd/stage1/types.hpp"
#include "qstd/stage2/denoiser.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

namespace qstd::harness {

struct SamplingConfig {
  std::string split = "test";
  int samples_per_clip = 2;
  bool snap_to_codebook = false;
  bool deterministic = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::optional<data::CorpusSpec> corpus;
  std::string corpus_manifest;  // used when `corpus` is absent
  mesh::PyramidSpec pyramid;
  autoencoder::Stage1Config stage1;
  diffusion::Stage2Config stage2;
  SamplingConfig sampling;
};

inline void validate(const ExperimentConfig& c) {
  if (!c.corpus && c.corpus_manifest.empty()) throw ConfigError("config: give either 'corpus' or 'corpus_manifest'");
  if (c.corpus && !c.corpus_manifest.empty()) throw ConfigError("config: 'corpus' and 'corpus_manifest' are exclusive");
  if (!c.corpus_manifest.empty() && !std::filesystem::exists(c.corpus_manifest)) {
    throw ConfigError("config: corpus_manifest '" + c.corpus_manifest + "' does not exist");
  }
  if (c.output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
  const auto& p = c.pyramid;
  if (p.levels < 2) throw ConfigError("pyramid: levels must be at least 2");
  if (static_cast<int>(p.keep_ratios.size()) != p.levels - 1) throw ConfigError("pyramid: need levels-1 keep_ratios");
  for (double r : p.keep_ratios) {
    if (!(r > 0 && r <= 1)) throw ConfigError("pyramid: keep_ratios must lie in (0, 1]");
  }
  if (p.kernel_size < 1 || p.dilation < 1) throw ConfigError("pyramid: kernel_size and dilation must be positive");
  if (static_cast<int>(c.stage1.block_channels.size()) != p.levels - 1) {
    throw ConfigError("stage1: block_channels needs one entry per pyramid transition (" +
                      std::to_string(p.levels - 1) + ")");
  }
  autoencoder::validate(c.stage1);
  diffusion::validate(c.stage2);
  if (!data::valid_split(c.sampling.split)) throw ConfigError("sampling: split must be train, val or test");
  if (c.sampling.samples_per_clip < 1) throw ConfigError("sampling: samples_per_clip must be positive");
}

inline Json to_json(const mesh::PyramidSpec& p) {
  return Json{{"levels", p.levels}, {"keep_ratios", p.keep_ratios}, {"kernel_size", p.kernel_size}, {"dilation", p.dilation}};
}

inline mesh::PyramidSpec pyramid_spec_from_json(const Json& j) {
  mesh::PyramidSpec p;
  ObjectReader r(j, "pyramid");
  r.opt("levels", p.levels);
  r.opt("keep_ratios", p.keep_ratios);
  r.opt("kernel_size", p.kernel_size);
  r.opt("dilation", p.dilation);
  r.done();
  return p;
}

inline Json to_json(const SamplingConfig& s) {
  return Json{{"split", s.split},
              {"samples_per_clip", s.samples_per_clip},
              {"snap_to_codebook", s.snap_to_codebook},
              {"deterministic", s.deterministic}};
}

inline SamplingConfig sampling_config_from_json(const Json& j) {
  SamplingConfig s;
  ObjectReader r(j, "sampling");
  r.opt("split", s.split);
  r.opt("samples_per_clip", s.samples_per_clip);
  r.opt("snap_to_codebook", s.snap_to_codebook);
  r.opt("deterministic", s.deterministic);
  r.done();
  return s;
}

/// Everything but the seed and the output directory.
inline Json settings_json(const ExperimentConfig& c) {
  Json s1 = to_json(c.stage1), s2 = to_json(c.stage2);
  s1.erase("seed");
  s2.erase("seed");
  Json j{{"pyramid", to_json(c.pyramid)}, {"stage1", s1}, {"stage2", s2}, {"sampling", to_json(c.sampling)}};
  if (c.corpus) {
    j["corpus"] = data::to_json(*c.corpus);
  } else {
    j["corpus_manifest"] = c.corpus_manifest;
  }
  return j;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j = settings_json(c);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Runs that differ only in seed or output directory share this hash.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(hash_string(settings_json(c).dump())); }

inline ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "config");
  if (!r.has("seed")) throw ConfigError("config: 'seed' is required");
  r.opt("seed", c.seed);
  r.opt("output_dir", c.output_dir);
  r.opt("corpus_manifest", c.corpus_manifest);
  if (r.has("corpus")) c.corpus = data::corpus_spec_from_json(r.child("corpus"));
  if (r.has("pyramid")) c.pyramid = pyramid_spec_from_json(r.child("pyramid"));
  for (const char* stage : {"stage1", "stage2"}) {
    if (r.has(stage) && r.child(stage).contains("seed")) {
      throw ConfigError(std::string(stage) + ": set the top-level 'seed' instead");
    }
  }
  if (r.has("stage1")) c.stage1 = autoencoder::stage1_config_from_json(r.child("stage1"));
  if (r.has("stage2")) c.stage2 = diffusion::stage2_config_from_json(r.child("stage2"));
  if (r.has("sampling")) c.sampling = sampling_config_from_json(r.child("sampling"));
  r.done();
  c.stage1.seed = c.seed;
  c.stage2.seed = c.seed;
  validate(c);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace qstd::harness
