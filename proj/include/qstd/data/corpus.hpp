// Corpus of paired motion / audio samples, manifest loading and writing,
// summary statistics.
//
// Manifest (plaintext, '#' comments, paths relative to the manifest):
//   qstd-manifest 1
//   mesh <path>
//   lip_mask <path>
//   upper_mask <path>
//   subject name=<id> template=<path>
//   sample name=<id> subject=<id> split=<train|val|test> motion=<file or dir>
//          audio=<path> [envelope=<path>] [fps=<hz>]
#pragma once

#include "qstd/data/motion_io.hpp"
#include "qstd/eval/metrics.hpp"
#include "qstd/stage2/audio.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace qstd::data {

using diffusion::AudioFeatures;
using eval::RegionMask;

struct Sample {
  std::string name;
  MotionSequence motion;
  AudioFeatures audio;
  AudioFeatures envelope;  // optional driving envelopes (empty data when absent)
  int subject = 0;
  std::string split = "train";

  bool operator==(const Sample& o) const {
    return name == o.name && motion == o.motion && audio == o.audio && envelope == o.envelope &&
           subject == o.subject && split == o.split;
  }
};

struct Corpus {
  mesh::TriangleMesh mesh;  // shared topology
  std::vector<std::string> subjects;
  std::vector<FaceTemplate> templates;  // one per subject
  std::vector<Sample> samples;
  RegionMask lip{{}, "lip"};
  RegionMask upper{{}, "upper_face"};

  std::uint64_t topology_hash() const { return mesh::topology_hash(mesh); }
  const FaceTemplate& template_for(const Sample& s) const { return templates.at(static_cast<std::size_t>(s.subject)); }

  std::vector<const Sample*> split(const std::string& label) const {
    std::vector<const Sample*> out;
    for (const auto& s : samples) {
      if (s.split == label) out.push_back(&s);
    }
    return out;
  }

  bool operator==(const Corpus& o) const {
    return mesh.vertices == o.mesh.vertices && mesh.faces == o.mesh.faces && subjects == o.subjects &&
           samples == o.samples && lip.indices == o.lip.indices && upper.indices == o.upper.indices &&
           std::equal(templates.begin(), templates.end(), o.templates.begin(), o.templates.end(),
                      [](const FaceTemplate& a, const FaceTemplate& b) { return a.positions() == b.positions(); });
  }
};

inline bool valid_split(const std::string& s) { return s == "train" || s == "val" || s == "test"; }

inline void validate(const Corpus& c) {
  mesh::validate(c.mesh);
  const Index v = c.mesh.vertex_count();
  if (c.subjects.empty()) throw ConfigError("corpus has no subjects");
  if (c.templates.size() != c.subjects.size()) throw ConfigError("corpus needs one template per subject");
  for (std::size_t i = 0; i < c.templates.size(); ++i) {
    const auto& t = c.templates[i];
    if (t.mesh.faces != c.mesh.faces || t.vertices() != v) {
      throw MeshError("template of subject '" + c.subjects[i] + "' does not share the corpus topology");
    }
  }
  eval::validate(c.lip, v);
  eval::validate(c.upper, v);
  std::map<std::string, int> names;
  for (const auto& s : c.samples) {
    if (names[s.name]++) throw ConfigError("duplicate sample name '" + s.name + "'");
    if (s.subject < 0 || s.subject >= static_cast<int>(c.subjects.size())) {
      throw ConfigError("sample '" + s.name + "' has unknown subject");
    }
    if (!valid_split(s.split)) throw ConfigError("sample '" + s.name + "' has split '" + s.split + "'");
    autoencoder::validate(s.motion, v);
    if (s.audio.frames() < 1) throw ConfigError("sample '" + s.name + "' has no audio features");
  }
}

namespace detail {

inline std::map<std::string, std::string> key_values(std::istringstream& ss, const std::string& where) {
  std::map<std::string, std::string> kv;
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw IoError(where + ": expected key=value, got '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

inline std::string take(std::map<std::string, std::string>& kv, const std::string& key, const std::string& where) {
  auto it = kv.find(key);
  if (it == kv.end()) throw IoError(where + ": missing '" + key + "'");
  auto v = it->second;
  kv.erase(it);
  return v;
}

}  // namespace detail

inline Corpus load_corpus(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) { return (root / p).string(); };

  Corpus c;
  std::map<std::string, int> subject_ids;
  std::vector<std::string> problems;
  std::string line;
  int line_no = 0;
  bool header = false, have_mesh = false;
  std::string lip_path, upper_path;

  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    const std::string where = manifest_path + ":" + std::to_string(line_no);
    if (!header) {
      int version = 0;
      if (kind != "qstd-manifest" || !(ss >> version) || version != 1) {
        throw IoError(where + ": expected 'qstd-manifest 1'");
      }
      header = true;
      continue;
    }
    if (kind == "mesh" || kind == "lip_mask" || kind == "upper_mask") {
      std::string p;
      if (!(ss >> p)) throw IoError(where + ": missing path");
      if (kind == "mesh") {
        c.mesh = mesh::read_mesh(resolve(p));
        have_mesh = true;
      } else {
        (kind == "lip_mask" ? lip_path : upper_path) = resolve(p);
      }
    } else if (kind == "subject") {
      auto kv = detail::key_values(ss, where);
      const auto name = detail::take(kv, "name", where);
      const auto tpath = resolve(detail::take(kv, "template", where));
      if (!kv.empty()) throw IoError(where + ": unknown key '" + kv.begin()->first + "'");
      if (!have_mesh) throw IoError(where + ": 'mesh' must precede subjects");
      if (subject_ids.count(name)) throw IoError(where + ": duplicate subject '" + name + "'");
      FaceTemplate t{c.mesh};
      if (!fs::exists(tpath)) {
        problems.push_back("subject " + name + ": missing template " + tpath);
      } else {
        t.mesh.vertices = mesh::read_obj_positions(tpath);
        if (t.vertices() != c.mesh.vertex_count()) {
          throw MeshError(tpath + ": template has " + std::to_string(t.vertices()) + " vertices, mesh has " +
                          std::to_string(c.mesh.vertex_count()));
        }
      }
      subject_ids[name] = static_cast<int>(c.subjects.size());
      c.subjects.push_back(name);
      c.templates.push_back(std::move(t));
    } else if (kind == "sample") {
      auto kv = detail::key_values(ss, where);
      Sample s;
      s.name = detail::take(kv, "name", where);
      const auto subject = detail::take(kv, "subject", where);
      s.split = detail::take(kv, "split", where);
      const auto motion = resolve(detail::take(kv, "motion", where));
      const auto audio = resolve(detail::take(kv, "audio", where));
      const auto env = kv.count("envelope") ? resolve(detail::take(kv, "envelope", where)) : std::string();
      const double fps = kv.count("fps") ? std::stod(detail::take(kv, "fps", where)) : 25.0;
      if (!kv.empty()) throw IoError(where + ": unknown key '" + kv.begin()->first + "'");
      if (!subject_ids.count(subject)) throw IoError(where + ": unknown subject '" + subject + "'");
      if (!valid_split(s.split)) throw IoError(where + ": split must be train, val or test");
      s.subject = subject_ids[subject];
      bool ok = true;
      for (const auto& p : {motion, audio, env}) {
        if (!p.empty() && !fs::exists(p)) {
          problems.push_back("sample " + s.name + ": missing " + p);
          ok = false;
        }
      }
      if (!ok) continue;
      s.motion = fs::is_directory(motion) ? import_obj_sequence(motion, c.templates[static_cast<std::size_t>(s.subject)], fps)
                                          : load_motion(motion);
      if (s.motion.vertices() != c.mesh.vertex_count()) {
        throw MeshError(motion + ": sample '" + s.name + "' has " + std::to_string(s.motion.vertices()) +
                        " vertices, mesh has " + std::to_string(c.mesh.vertex_count()));
      }
      s.audio = diffusion::load_audio_features(audio);
      if (!env.empty()) s.envelope = diffusion::load_audio_features(env);
      c.samples.push_back(std::move(s));
    } else {
      throw IoError(where + ": unknown record '" + kind + "'");
    }
  }
  if (!header) throw IoError(manifest_path + ": empty manifest");
  if (!have_mesh) throw IoError(manifest_path + ": no 'mesh' record");
  if (lip_path.empty() || upper_path.empty()) throw IoError(manifest_path + ": lip_mask and upper_mask are required");
  for (const auto& p : {lip_path, upper_path}) {
    if (!fs::exists(p)) problems.push_back("missing mask " + p);
  }
  if (!problems.empty()) {
    std::string msg = manifest_path + ": " + std::to_string(problems.size()) + " missing file(s)";
    for (const auto& p : problems) msg += "; " + p;
    throw IoError(msg);
  }
  c.lip = eval::load_mask(lip_path, "lip");
  c.upper = eval::load_mask(upper_path, "upper_face");
  validate(c);
  return c;
}

/// Writes every file of the corpus under `dir` plus `dir/manifest.txt`;
/// returns the manifest path.
inline std::string write_corpus(const Corpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  validate(c);
  const fs::path root(dir);
  for (const char* sub : {"templates", "motion", "audio", "envelope", "masks"}) fs::create_directories(root / sub);
  std::ostringstream m;
  m << "qstd-manifest 1\n";
  mesh::write_obj((root / "mesh.obj").string(), c.mesh.vertices, c.mesh.faces);
  eval::save_mask((root / "masks/lip.txt").string(), c.lip);
  eval::save_mask((root / "masks/upper.txt").string(), c.upper);
  m << "mesh mesh.obj\nlip_mask masks/lip.txt\nupper_mask masks/upper.txt\n";
  for (std::size_t i = 0; i < c.subjects.size(); ++i) {
    const std::string rel = "templates/" + c.subjects[i] + ".obj";
    mesh::write_obj((root / rel).string(), c.templates[i].positions(), c.mesh.faces);
    m << "subject name=" << c.subjects[i] << " template=" << rel << '\n';
  }
  for (const auto& s : c.samples) {
    save_motion((root / "motion" / (s.name + ".qmot")).string(), s.motion);
    diffusion::save_audio_features((root / "audio" / (s.name + ".qaf")).string(), s.audio);
    m << "sample name=" << s.name << " subject=" << c.subjects[static_cast<std::size_t>(s.subject)]
      << " split=" << s.split << " motion=motion/" << s.name << ".qmot audio=audio/" << s.name << ".qaf";
    if (s.envelope.frames() > 0) {
      diffusion::save_audio_features((root / "envelope" / (s.name + ".qaf")).string(), s.envelope);
      m << " envelope=envelope/" << s.name << ".qaf";
    }
    m << '\n';
  }
  const auto path = (root / "manifest.txt").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << m.str();
  return path;
}

struct CorpusStats {
  int samples = 0;
  int train = 0;
  int val = 0;
  int test = 0;
  int subjects = 0;
  double mean_abs_motion = 0.0;  // mm
  double duration = 0.0;         // seconds
};

/// Order-independent: per-sample partial sums are reduced in name order.
inline CorpusStats corpus_stats(const Corpus& c) {
  if (c.samples.empty()) throw ConfigError("corpus_stats: empty corpus");
  std::vector<const Sample*> sorted;
  for (const auto& s : c.samples) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const Sample* a, const Sample* b) { return a->name < b->name; });
  CorpusStats st;
  st.subjects = static_cast<int>(c.subjects.size());
  double abs_sum = 0.0, count = 0.0;
  for (const Sample* s : sorted) {
    ++st.samples;
    st.train += s->split == "train";
    st.val += s->split == "val";
    st.test += s->split == "test";
    abs_sum += s->motion.data.cwiseAbs().sum();
    count += static_cast<double>(s->motion.data.size());
    st.duration += static_cast<double>(s->motion.frames()) / s->motion.frame_rate;
  }
  st.mean_abs_motion = abs_sum / count;
  return st;
}

}  // namespace qstd::data
