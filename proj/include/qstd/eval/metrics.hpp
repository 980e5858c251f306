// Lip vertex error, facial dynamics deviation, diversity and the per-vertex
// motion standard deviation field.
#pragma once

#include "qstd/stage1/types.hpp"

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qstd::eval {

using autoencoder::MotionSequence;

struct RegionMask {
  std::vector<int> indices;
  std::string label;  // "lip" or "upper_face"
};

inline void validate(const RegionMask& mask, Index vertices) {
  if (mask.indices.empty()) throw ConfigError("region mask '" + mask.label + "' is empty");
  for (int v : mask.indices) {
    if (v < 0 || v >= vertices) {
      throw ConfigError("region mask '" + mask.label + "' has vertex " + std::to_string(v) + " outside [0, " +
                        std::to_string(vertices) + ")");
    }
  }
}

/// Plaintext, one vertex id per line; blank lines and '#' comments ignored.
inline RegionMask load_mask(const std::string& path, const std::string& label) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mask file " + path);
  RegionMask m;
  m.label = label;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    int v = 0;
    if (!(ss >> v)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw IoError(path + ":" + std::to_string(line_no) + ": expected a vertex id");
    }
    m.indices.push_back(v);
  }
  return m;
}

inline void save_mask(const std::string& path, const RegionMask& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mask file " + path);
  for (int v : m.indices) out << v << '\n';
}

inline void require_same_shape(const MotionSequence& a, const MotionSequence& b, const char* what) {
  if (a.data.rows() != b.data.rows() || a.data.cols() != b.data.cols()) {
    throw ShapeError(std::string(what) + ": sequences have shapes " + shape_str(a.data) + " and " + shape_str(b.data));
  }
}

inline double vertex_distance(const MotionSequence& a, const MotionSequence& b, Index t, Index v) {
  return (a.data.row(t).segment(3 * v, 3) - b.data.row(t).segment(3 * v, 3)).norm();
}

/// Mean over frames of the largest lip-vertex distance; `squared` uses
/// squared distances instead.
inline double lip_vertex_error(const MotionSequence& pred, const MotionSequence& gt, const RegionMask& lip,
                               bool squared = false) {
  require_same_shape(pred, gt, "lip_vertex_error");
  validate(lip, gt.vertices());
  if (gt.frames() < 1) throw ShapeError("lip_vertex_error: no frames");
  double total = 0.0;
  for (Index t = 0; t < gt.frames(); ++t) {
    double worst = 0.0;
    for (int v : lip.indices) {
      const double d = vertex_distance(pred, gt, t, v);
      worst = std::max(worst, squared ? d * d : d);
    }
    total += worst;
  }
  return total / static_cast<double>(gt.frames());
}

/// Population standard deviation.
inline double population_std(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

/// Per-vertex population std over time of the displacement norm.
inline Eigen::VectorXd motion_std_field(const MotionSequence& m) {
  if (m.frames() < 2) throw ShapeError("motion std needs at least 2 frames");
  Eigen::VectorXd out(m.vertices());
  std::vector<double> norms(static_cast<std::size_t>(m.frames()));
  for (Index v = 0; v < m.vertices(); ++v) {
    for (Index t = 0; t < m.frames(); ++t) norms[static_cast<std::size_t>(t)] = m.data.row(t).segment(3 * v, 3).norm();
    out(v) = population_std(norms);
  }
  return out;
}

/// Mean over upper-face vertices of dyn(pred) - dyn(gt).
inline double facial_dynamics_deviation(const MotionSequence& pred, const MotionSequence& gt,
                                        const RegionMask& upper) {
  require_same_shape(pred, gt, "facial_dynamics_deviation");
  validate(upper, gt.vertices());
  if (gt.frames() < 2) throw ShapeError("facial_dynamics_deviation needs at least 2 frames");
  const Eigen::VectorXd dp = motion_std_field(pred), dg = motion_std_field(gt);
  double total = 0.0;
  for (int v : upper.indices) total += dp(v) - dg(v);
  return total / static_cast<double>(upper.indices.size());
}

/// Mean over unordered pairs of the mean per-vertex, per-frame distance.
inline double diversity(const std::vector<MotionSequence>& samples) {
  if (samples.size() < 2) throw ShapeError("diversity needs at least 2 samples");
  for (const auto& s : samples) require_same_shape(s, samples.front(), "diversity");
  const auto& first = samples.front();
  const double cells = static_cast<double>(first.frames() * first.vertices());
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      double d = 0.0;
      for (Index t = 0; t < first.frames(); ++t) {
        for (Index v = 0; v < first.vertices(); ++v) d += vertex_distance(samples[i], samples[j], t, v);
      }
      total += d / cells;
      ++pairs;
    }
  }
  return total / pairs;
}

/// Per-frame mean displacement norm over the region.
inline Eigen::VectorXd region_envelope(const MotionSequence& m, const RegionMask& mask) {
  validate(mask, m.vertices());
  Eigen::VectorXd out(m.frames());
  for (Index t = 0; t < m.frames(); ++t) {
    double s = 0.0;
    for (int v : mask.indices) s += m.data.row(t).segment(3 * v, 3).norm();
    out(t) = s / static_cast<double>(mask.indices.size());
  }
  return out;
}

/// Pearson correlation; 0 when either input is constant.
inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require_shape(a.size() == b.size() && a.size() > 1, "pearson: need two equal-length series");
  const Eigen::ArrayXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double den = std::sqrt((da * da).sum() * (db * db).sum());
  return den > 0 ? (da * db).sum() / den : 0.0;
}

struct MetricsReport {
  std::optional<double> lve;
  std::optional<double> fdd;
  std::optional<double> diversity;
  int sample_count = 0;
  std::string config_hash;
};

/// "key value" lines; absent metrics are omitted.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "config_hash " << r.config_hash << '\n';
  out << "sample_count " << r.sample_count << '\n';
  if (r.lve) out << "lve " << *r.lve << '\n';
  if (r.fdd) out << "fdd " << *r.fdd << '\n';
  if (r.diversity) out << "diversity " << *r.diversity << '\n';
  return out.str();
}

inline MetricsReport parse_report(const std::string& text) {
  MetricsReport r;
  std::istringstream in(text);
  std::string key;
  while (in >> key) {
    if (key == "config_hash") {
      in >> r.config_hash;
    } else if (key == "sample_count") {
      in >> r.sample_count;
    } else {
      double v = 0.0;
      if (!(in >> v)) throw IoError("metrics report: bad value for '" + key + "'");
      if (key == "lve") {
        r.lve = v;
      } else if (key == "fdd") {
        r.fdd = v;
      } else if (key == "diversity") {
        r.diversity = v;
      } else {
        throw IoError("metrics report: unknown key '" + key + "'");
      }
    }
  }
  return r;
}

}  // namespace qstd::eval
