// Command-line driver. Every subcommand reads the experiment config, works
// inside the output directory and leaves a run record behind.
//
// Layout of <out>:
//   corpus/manifest.txt   synth-corpus
//   pyramid.qpyr          build-pyramid
//   stage1.ckpt           train-stage1
//   stage2.ckpt           train-stage2
//   samples/<clip>.<k>.qmot
//   metrics.txt           evaluate
//   heatmaps/             heatmap
//   report/               report
//   records/<command>.json
#pragma once

#include "qstd/eval/image.hpp"
#include "qstd/harness/config.hpp"
#include "qstd/harness/record.hpp"
#include "qstd/stage1/train.hpp"
#include "qstd/stage2/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>

namespace qstd::harness {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kBadConfig = 3, kDiverged = 4 };

struct CliOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> epochs;
  bool snap_codebook = false;
  bool squared_lve = false;
  bool deterministic_sampler = false;
  std::string pred;
  std::string motion;
  std::vector<std::string> inputs;
};

namespace detail {

struct Session {
  ExperimentConfig cfg;
  fs::path out;
  RunRecord record;
  std::ostream& log;

  std::string path(const std::string& rel) const { return (out / rel).string(); }
  void artifact(const std::string& rel) { record.artifacts.push_back(rel); }
};

inline std::string corpus_manifest(const Session& s) {
  if (!s.cfg.corpus_manifest.empty()) return s.cfg.corpus_manifest;
  const auto p = s.path("corpus/manifest.txt");
  if (!fs::exists(p)) throw IoError(p + " not found; run synth-corpus first");
  return p;
}

inline mesh::MeshPyramid load_pyramid_for(const Session& s, const data::Corpus& c) {
  const auto p = s.path("pyramid.qpyr");
  if (!fs::exists(p)) throw IoError(p + " not found; run build-pyramid first");
  auto pyr = mesh::load_pyramid(p);
  if (mesh::topology_hash(pyr.levels.front().mesh) != c.topology_hash()) {
    throw ConfigError(p + " was built for a different mesh; rerun build-pyramid");
  }
  return pyr;
}

inline autoencoder::MotionAutoencoder load_stage1_for(const Session& s, mesh::MeshPyramid pyr) {
  const auto p = s.path("stage1.ckpt");
  if (!fs::exists(p)) throw IoError(p + " not found; run train-stage1 first");
  return autoencoder::load_stage1(p, std::move(pyr));
}

inline diffusion::Stage2Model load_stage2_for(const Session& s, const data::Corpus& c) {
  const auto p = s.path("stage2.ckpt");
  if (!fs::exists(p)) throw IoError(p + " not found; run train-stage2 first");
  auto m = diffusion::load_stage2(p);
  if (m.subjects != c.subjects) throw ConfigError(p + " was trained on a different subject roster");
  return m;
}

inline std::vector<const data::Sample*> require_split(const data::Corpus& c, const std::string& label) {
  auto v = c.split(label);
  if (v.empty()) throw ConfigError("corpus has no '" + label + "' samples");
  return v;
}

inline std::vector<diffusion::Stage2Example> examples_for(const std::vector<const data::Sample*>& samples,
                                                          const data::Corpus& c,
                                                          const autoencoder::MotionAutoencoder& stage1) {
  std::vector<diffusion::Stage2Example> out;
  const int subjects = static_cast<int>(c.subjects.size());
  for (const auto* s : samples) {
    out.push_back(diffusion::make_example(stage1, s->motion, s->audio.data, diffusion::one_hot_style(s->subject, subjects)));
  }
  return out;
}

inline int report_every(int epochs) { return std::max(1, epochs / 10); }

/// Prediction files "<clip>.<k>.qmot" in `dir` grouped by clip name.
inline std::map<std::string, std::vector<std::string>> prediction_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("prediction directory " + dir + " not found");
  std::map<std::string, std::map<int, std::string>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".qmot") continue;
    const auto stem = e.path().stem().string();  // <clip>.<k>
    const auto dot = stem.rfind('.');
    if (dot == std::string::npos) continue;
    try {
      found[stem.substr(0, dot)][std::stoi(stem.substr(dot + 1))] = e.path().string();
    } catch (const std::exception&) {
      continue;
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (auto& [clip, files] : found) {
    for (auto& [k, path] : files) out[clip].push_back(path);
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline void save_loss_plot(Session& s, const std::string& rel, const std::vector<double>& curve) {
  eval::write_ppm(s.path(rel), eval::line_plot({curve}, true));
  s.artifact(rel);
}

// ---------------------------------------------------------------- commands

inline void synth_corpus(Session& s) {
  if (!s.cfg.corpus) throw ConfigError("synth-corpus needs a 'corpus' section in the config");
  Rng rng = named_stream(s.cfg.seed, "corpus");
  const auto c = data::synthesize_corpus(*s.cfg.corpus, rng);
  const auto dir = s.path("corpus");
  fs::remove_all(dir);
  data::write_corpus(c, dir);
  s.artifact("corpus/manifest.txt");
  const auto st = data::corpus_stats(c);
  s.record.metrics = {{"samples", st.samples},       {"train", st.train},
                      {"val", st.val},               {"test", st.test},
                      {"subjects", st.subjects},     {"mean_abs_motion", st.mean_abs_motion},
                      {"duration", st.duration},     {"vertices", static_cast<double>(c.mesh.vertex_count())}};
  s.log << "synth-corpus: " << st.samples << " samples, " << c.mesh.vertex_count() << " vertices -> " << dir << '\n';
}

inline void build_pyramid(Session& s) {
  const auto c = data::load_corpus(corpus_manifest(s));
  const auto pyr = mesh::build_pyramid(c.mesh, s.cfg.pyramid);
  mesh::save_pyramid(s.path("pyramid.qpyr"), pyr);
  s.artifact("pyramid.qpyr");
  for (int l = 0; l < pyr.level_count(); ++l) {
    s.record.metrics["level" + std::to_string(l) + "_vertices"] = pyr.vertex_count(l);
  }
  s.record.info["pyramid_hash"] = hex64(mesh::pyramid_hash(pyr));
  s.log << "build-pyramid:";
  for (int l = 0; l < pyr.level_count(); ++l) s.log << ' ' << pyr.vertex_count(l);
  s.log << " vertices\n";
}

inline void train_stage1(Session& s, const CliOptions& o) {
  const auto c = data::load_corpus(corpus_manifest(s));
  auto cfg = s.cfg.stage1;
  if (o.epochs) cfg.epochs = *o.epochs;
  autoencoder::validate(cfg);
  std::vector<autoencoder::MotionSequence> train;
  for (const auto* smp : require_split(c, "train")) train.push_back(smp->motion);

  std::vector<double> curve;
  auto result = autoencoder::train_stage1(train, load_pyramid_for(s, c), cfg, [&](const autoencoder::Stage1EpochStats& e) {
    curve.push_back(e.total);
    if ((e.epoch + 1) % report_every(cfg.epochs) == 0) {
      s.log << "train-stage1: epoch " << e.epoch + 1 << "/" << cfg.epochs << " loss " << e.total << " rec "
            << e.reconstruction << " codes " << e.codes_used << '\n';
    }
  });
  const auto& model = result.model;
  autoencoder::save_stage1(s.path("stage1.ckpt"), model);
  s.artifact("stage1.ckpt");

  std::vector<double> l1, lve, amp;
  double abs_motion = 0.0;
  for (const auto* smp : c.split("train")) {
    const auto recon = model.decode(model.quantize(model.encode(smp->motion)), smp->motion.frame_rate);
    l1.push_back((recon.data - smp->motion.data).cwiseAbs().mean());
    abs_motion += smp->motion.data.cwiseAbs().mean();
    lve.push_back(eval::lip_vertex_error(recon, smp->motion, c.lip));
  }
  abs_motion /= static_cast<double>(l1.size());
  auto& m = s.record.metrics;
  m["epochs"] = cfg.epochs;
  m["recon_l1"] = mean(l1);
  m["recon_l1_ratio"] = abs_motion > 0 ? mean(l1) / abs_motion : 0.0;
  m["recon_lve"] = mean(lve);
  if (!result.curve.empty()) {
    const auto& last = result.curve.back();
    m["final_loss"] = last.total;
    m["final_reconstruction"] = last.reconstruction;
    m["final_quantization"] = last.quantization;
    m["codes_used"] = last.codes_used;
    s.record.curves["stage1_loss"] = curve;
    save_loss_plot(s, "stage1_loss.ppm", curve);
  }
  s.log << "train-stage1: recon L1 " << mean(l1) << " (" << 100 * m["recon_l1_ratio"] << "% of mean |motion|)\n";
}

inline void train_stage2(Session& s, const CliOptions& o) {
  const auto c = data::load_corpus(corpus_manifest(s));
  auto pyr = load_pyramid_for(s, c);
  const auto hash = mesh::pyramid_hash(pyr);
  const auto stage1 = load_stage1_for(s, std::move(pyr));
  auto cfg = s.cfg.stage2;
  if (o.epochs) cfg.epochs = *o.epochs;
  diffusion::validate(cfg);

  const auto train = examples_for(require_split(c, "train"), c, stage1);
  const Index channels = train.front().audio.cols();
  for (const auto& e : train) {
    if (e.audio.cols() != channels) throw ConfigError("audio feature tracks differ in channel count");
  }
  const auto val_samples = c.split("val");
  const auto val = val_samples.empty() ? train : examples_for(val_samples, c, stage1);
  s.record.info["validation"] = val_samples.empty() ? "train split, held-out noise" : "val split";

  const double scale = cfg.normalize_latents ? diffusion::latent_scale_for(train) : 1.0;
  const auto untrained = diffusion::make_stage2_model(cfg, train.front().target.cols(), channels, c.subjects, hash, scale);
  const double baseline = diffusion::evaluate_stage2(untrained, val, cfg.seed);

  std::vector<double> curve;
  auto result = diffusion::train_stage2(train, channels, c.subjects, hash, cfg, [&](const diffusion::Stage2EpochStats& e) {
    curve.push_back(e.total);
    if ((e.epoch + 1) % report_every(cfg.epochs) == 0) {
      s.log << "train-stage2: epoch " << e.epoch + 1 << "/" << cfg.epochs << " loss " << e.total << '\n';
    }
  });
  diffusion::save_stage2(s.path("stage2.ckpt"), result.model);
  s.artifact("stage2.ckpt");
  const double val_loss = diffusion::evaluate_stage2(result.model, val, cfg.seed);
  auto& m = s.record.metrics;
  m["epochs"] = cfg.epochs;
  m["baseline_loss"] = baseline;
  m["val_loss"] = val_loss;
  m["val_ratio"] = baseline > 0 ? val_loss / baseline : 0.0;
  m["latent_scale"] = scale;
  if (!curve.empty()) {
    m["final_loss"] = curve.back();
    s.record.curves["stage2_loss"] = curve;
    save_loss_plot(s, "stage2_loss.ppm", curve);
  }
  s.log << "train-stage2: validation loss " << val_loss << " (untrained " << baseline << ")\n";
}

inline void sample(Session& s, const CliOptions& o) {
  const auto c = data::load_corpus(corpus_manifest(s));
  const auto stage1 = load_stage1_for(s, load_pyramid_for(s, c));
  const auto stage2 = load_stage2_for(s, c);
  const auto clips = require_split(c, s.cfg.sampling.split);
  const bool deterministic = o.deterministic_sampler || s.cfg.sampling.deterministic;
  const int per_clip = s.cfg.sampling.samples_per_clip;
  const int subjects = static_cast<int>(c.subjects.size());
  const auto dir = s.path("samples");
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<double> sync;
  for (const auto* clip : clips) {
    diffusion::AnimationOptions opts;
    opts.snap_to_codebook = o.snap_codebook || s.cfg.sampling.snap_to_codebook;
    opts.frame_rate = clip->motion.frame_rate;
    opts.sampler.deterministic = deterministic;
    if (deterministic) {
      // Fixed Z^N per clip, independent of the sampling seed.
      Rng noise = named_stream(stage2.denoiser.config().seed, "initial_noise." + clip->name);
      opts.sampler.initial_noise =
          randn(diffusion::motion_frames_for(clip->audio, opts.frame_rate), stage2.denoiser.latent_dim(), noise);
    }
    for (int k = 0; k < per_clip; ++k) {
      const std::uint64_t seed = named_stream(s.cfg.seed, "sample." + clip->name + "." + std::to_string(k))();
      const auto anim = diffusion::generate_animation(clip->audio, diffusion::one_hot_style(clip->subject, subjects),
                                                      c.template_for(*clip), stage1, stage2, seed, opts);
      const auto rel = "samples/" + clip->name + "." + std::to_string(k) + ".qmot";
      data::save_motion(s.path(rel), anim.motion);
      s.artifact(rel);
      if (clip->envelope.frames() > 0 && anim.motion.frames() > 1) {
        const Eigen::VectorXd env = diffusion::align_audio_to_motion(clip->envelope.data, anim.motion.frames()).col(0);
        sync.push_back(eval::pearson(eval::region_envelope(anim.motion, c.lip), env));
      }
    }
  }
  s.record.metrics["clips"] = static_cast<double>(clips.size());
  s.record.metrics["samples_per_clip"] = per_clip;
  if (!sync.empty()) s.record.metrics["lip_sync_r"] = mean(sync);
  s.record.info["sampler"] = deterministic ? "deterministic" : "ancestral";
  s.log << "sample: " << clips.size() * static_cast<std::size_t>(per_clip) << " sequences -> " << dir << '\n';
}

inline void evaluate(Session& s, const CliOptions& o) {
  const auto c = data::load_corpus(corpus_manifest(s));
  const auto dir = o.pred.empty() ? s.path("samples") : o.pred;
  const auto preds = prediction_files(dir);
  std::vector<double> lve, fdd, div;
  int count = 0;
  for (const auto& smp : c.samples) {
    auto it = preds.find(smp.name);
    if (it == preds.end()) continue;
    std::vector<autoencoder::MotionSequence> seqs;
    for (const auto& p : it->second) {
      seqs.push_back(data::load_motion(p));
      const auto& pred = seqs.back();
      lve.push_back(eval::lip_vertex_error(pred, smp.motion, c.lip, o.squared_lve));
      if (smp.motion.frames() > 1) fdd.push_back(eval::facial_dynamics_deviation(pred, smp.motion, c.upper));
      ++count;
    }
    if (seqs.size() > 1) div.push_back(eval::diversity(seqs));
  }
  if (count == 0) throw IoError("no predictions in " + dir + " match corpus samples");
  eval::MetricsReport rep;
  rep.sample_count = count;
  rep.config_hash = s.record.config_hash;
  rep.lve = mean(lve);
  if (!fdd.empty()) rep.fdd = mean(fdd);
  if (!div.empty()) rep.diversity = mean(div);
  {
    std::ofstream out(s.path("metrics.txt"));
    if (!out) throw IoError("cannot write " + s.path("metrics.txt"));
    out << eval::format_report(rep);
  }
  s.artifact("metrics.txt");
  auto& m = s.record.metrics;
  m[o.squared_lve ? "lve_squared" : "lve"] = *rep.lve;
  if (rep.fdd) m["fdd"] = *rep.fdd;
  if (rep.diversity) m["diversity"] = *rep.diversity;
  m["sample_count"] = count;
  s.log << eval::format_report(rep);
}

inline void heatmap(Session& s, const CliOptions& o) {
  const auto c = data::load_corpus(corpus_manifest(s));
  fs::create_directories(s.path("heatmaps"));
  std::vector<double> upper;
  auto render = [&](const autoencoder::MotionSequence& m, const mesh::TriangleMesh& face, const std::string& stem) {
    const auto h = eval::motion_std_heatmap(m, face);
    eval::write_ppm(s.path("heatmaps/" + stem + ".ppm"), h.image);
    eval::write_scalar_field(s.path("heatmaps/" + stem + ".txt"), h.values);
    s.artifact("heatmaps/" + stem + ".ppm");
    s.artifact("heatmaps/" + stem + ".txt");
    double u = 0.0;
    for (int v : c.upper.indices) u += h.values(v);
    upper.push_back(u / static_cast<double>(c.upper.indices.size()));
  };
  if (!o.motion.empty()) {
    render(data::load_motion(o.motion), c.mesh, fs::path(o.motion).stem().string());
  } else {
    const auto preds = prediction_files(o.pred.empty() ? s.path("samples") : o.pred);
    for (const auto& smp : c.samples) {
      auto it = preds.find(smp.name);
      if (it == preds.end()) continue;
      const auto& face = c.template_for(smp).mesh;
      render(smp.motion, face, "gt_" + smp.name);
      for (const auto& p : it->second) render(data::load_motion(p), face, fs::path(p).stem().string());
    }
    if (upper.empty()) throw IoError("no predictions to render");
  }
  s.record.metrics["images"] = static_cast<double>(upper.size());
  s.record.metrics["mean_upper_std"] = mean(upper);
  s.log << "heatmap: " << upper.size() << " images -> " << s.path("heatmaps") << '\n';
}

inline std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char ch : s) n += (ch & 0xC0) != 0x80;
  return n;
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline const char* kMissing = "\xE2\x80\x94";  // em dash

/// Text table: one row per record, rows of one config hash adjacent.
inline std::string format_table(std::vector<RunRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.config_hash, a.command, a.seed) < std::tie(b.config_hash, b.command, b.seed);
  });
  std::set<std::string> keys;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.metrics) keys.insert(k);
  }
  std::vector<std::vector<std::string>> rows{{"config", "command", "seed"}};
  rows.front().insert(rows.front().end(), keys.begin(), keys.end());
  std::vector<std::size_t> group_start;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i == 0 || r.config_hash != records[i - 1].config_hash) group_start.push_back(rows.size());
    std::vector<std::string> row{r.config_hash, r.command, std::to_string(r.seed)};
    for (const auto& k : keys) {
      auto it = r.metrics.find(k);
      row.push_back(it == r.metrics.end() ? kMissing : format_value(it->second));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], display_width(row[j]));
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 1 && std::find(group_start.begin(), group_start.end(), i) != group_start.end()) out += '\n';
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out += rows[i][j];
      if (j + 1 < rows[i].size()) out += std::string(width[j] - display_width(rows[i][j]) + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

inline std::vector<RunRecord> collect_records(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw IoError("record input " + in + " not found");
    }
  }
  std::vector<RunRecord> out;
  for (const auto& f : files) {
    auto r = read_record(f);
    if (r.command != "report") out.push_back(std::move(r));
  }
  return out;
}

inline void report(Session& s, const CliOptions& o) {
  const auto inputs = o.inputs.empty() ? std::vector<std::string>{s.path("records")} : o.inputs;
  const auto records = collect_records(inputs);
  if (records.empty()) throw IoError("no run records found");
  fs::create_directories(s.path("report"));
  const auto table = format_table(records);
  {
    std::ofstream out(s.path("report/table.txt"));
    if (!out) throw IoError("cannot write report table");
    out << table;
  }
  s.artifact("report/table.txt");
  std::vector<std::vector<double>> curves;
  std::vector<double> diversity;
  for (const auto& r : records) {
    for (const auto& [name, c] : r.curves) curves.push_back(c);
    if (auto it = r.metrics.find("diversity"); it != r.metrics.end()) diversity.push_back(it->second);
  }
  if (!curves.empty()) {
    eval::write_ppm(s.path("report/loss_curves.ppm"), eval::line_plot(curves, true));
    s.artifact("report/loss_curves.ppm");
  }
  if (!diversity.empty()) {
    eval::write_ppm(s.path("report/diversity.ppm"), eval::bar_plot(diversity));
    s.artifact("report/diversity.ppm");
  }
  s.record.metrics["records"] = static_cast<double>(records.size());
  s.log << table;
}

}  // namespace detail

/// Parses `args` (without the program name), runs one subcommand and returns
/// its exit code. Diagnostics are a single line on `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CliOptions o;
  CLI::App app{"Speech-driven facial motion: corpus, training, sampling and evaluation", "qstd"};
  app.require_subcommand(1, 1);
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"synth-corpus", "Generate the synthetic corpus"},
      {"build-pyramid", "Decimate the corpus mesh into the spiral pyramid"},
      {"train-stage1", "Train the motion autoencoder"},
      {"train-stage2", "Train the latent denoiser"},
      {"sample", "Generate motion for the sampling split"},
      {"evaluate", "Score predictions against ground truth"},
      {"heatmap", "Render per-vertex motion std maps"},
      {"report", "Tabulate run records and plot curves"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", o.config, "Experiment config (JSON)");
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Override the output directory");
    subs[c.name] = sub;
  }
  for (const char* name : {"train-stage1", "train-stage2"}) subs[name]->add_option("--epochs", o.epochs, "Override epochs");
  subs["sample"]->add_flag("--snap-codebook", o.snap_codebook, "Snap sampled latents to the nearest codes");
  subs["sample"]->add_flag("--deterministic-sampler", o.deterministic_sampler, "Zero sampler variance, fixed Z^N");
  subs["evaluate"]->add_flag("--squared-lve", o.squared_lve, "Use squared lip distances");
  for (const char* name : {"evaluate", "heatmap"}) subs[name]->add_option("--pred", o.pred, "Prediction directory");
  subs["heatmap"]->add_option("--motion", o.motion, "Render a single motion file");
  subs["report"]->add_option("inputs", o.inputs, "Record files or directories");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    log << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  try {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    bool have_config = false;
    if (!o.config.empty()) {
      cfg = load_experiment_config(o.config);
      have_config = true;
    } else if (command != "report") {
      throw ConfigError(command + " requires --config");
    }
    if (o.seed) {
      cfg.seed = *o.seed;
      cfg.stage1.seed = cfg.stage2.seed = *o.seed;
    }
    fs::path out = !o.out.empty() ? fs::path(o.out) : have_config ? fs::path(cfg.output_dir) : fs::path(".");
    fs::create_directories(out);
    detail::Session s{cfg, out, {}, log};
    s.record.command = command;
    s.record.seed = cfg.seed;
    s.record.config_hash = have_config ? config_hash(cfg) : "none";

    if (command == "synth-corpus") {
      detail::synth_corpus(s);
    } else if (command == "build-pyramid") {
      detail::build_pyramid(s);
    } else if (command == "train-stage1") {
      detail::train_stage1(s, o);
    } else if (command == "train-stage2") {
      detail::train_stage2(s, o);
    } else if (command == "sample") {
      detail::sample(s, o);
    } else if (command == "evaluate") {
      detail::evaluate(s, o);
    } else if (command == "heatmap") {
      detail::heatmap(s, o);
    } else {
      detail::report(s, o);
    }
    s.record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_record(s.record, out.string());
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace qstd::harness
