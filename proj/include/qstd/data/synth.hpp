// Synthetic talking-sphere corpus: band-limited envelopes drive a linear
// blendshape face with per-subject gains and orientation.
#pragma once

#include "qstd/data/corpus.hpp"

#include <cmath>

namespace qstd::data {

struct CorpusSpec {
  int subjects = 2;
  int sentences_per_subject = 2;
  int frames_min = 30;
  int frames_max = 30;
  int subdivisions = 2;  // 162 vertices
  double radius = 80.0;  // mm
  double frame_rate = 25.0;
  double audio_rate = 50.0;
  int envelopes = 4;
  int audio_channels = 8;
  double amplitude = 4.0;       // mm of displacement at full envelope and unit gain
  double envelope_scale = 1.0;  // 0 gives silent envelopes
  double noise = 0.02;          // mm
  int val_per_subject = 0;
  int test_per_subject = 0;
};

inline void validate(const CorpusSpec& s) {
  auto fail = [](const std::string& m) { throw ConfigError("corpus: " + m); };
  if (s.subjects < 1 || s.sentences_per_subject < 1) fail("subjects and sentences_per_subject must be positive");
  if (s.frames_min < 1 || s.frames_max < s.frames_min) fail("need 1 <= frames_min <= frames_max");
  if (s.subdivisions < 1 || s.subdivisions > 5) fail("subdivisions must lie in [1, 5]");
  if (!(s.radius > 0) || !(s.frame_rate > 0) || !(s.audio_rate > 0)) fail("radius and rates must be positive");
  if (s.envelopes < 1 || s.audio_channels < 1) fail("envelopes and audio_channels must be positive");
  if (s.amplitude < 0 || s.envelope_scale < 0 || s.noise < 0) fail("amplitude, envelope_scale and noise must be >= 0");
  if (s.val_per_subject < 0 || s.test_per_subject < 0 ||
      s.val_per_subject + s.test_per_subject > s.sentences_per_subject) {
    fail("val_per_subject + test_per_subject must not exceed sentences_per_subject");
  }
}

inline Json to_json(const CorpusSpec& s) {
  return Json{{"subjects", s.subjects},         {"sentences_per_subject", s.sentences_per_subject},
              {"frames_min", s.frames_min},     {"frames_max", s.frames_max},
              {"subdivisions", s.subdivisions}, {"radius", s.radius},
              {"frame_rate", s.frame_rate},     {"audio_rate", s.audio_rate},
              {"envelopes", s.envelopes},       {"audio_channels", s.audio_channels},
              {"amplitude", s.amplitude},       {"envelope_scale", s.envelope_scale},
              {"noise", s.noise},               {"val_per_subject", s.val_per_subject},
              {"test_per_subject", s.test_per_subject}};
}

inline CorpusSpec corpus_spec_from_json(const Json& j) {
  CorpusSpec s;
  ObjectReader r(j, "corpus");
  r.opt("subjects", s.subjects);
  r.opt("sentences_per_subject", s.sentences_per_subject);
  r.opt("frames_min", s.frames_min);
  r.opt("frames_max", s.frames_max);
  r.opt("subdivisions", s.subdivisions);
  r.opt("radius", s.radius);
  r.opt("frame_rate", s.frame_rate);
  r.opt("audio_rate", s.audio_rate);
  r.opt("envelopes", s.envelopes);
  r.opt("audio_channels", s.audio_channels);
  r.opt("amplitude", s.amplitude);
  r.opt("envelope_scale", s.envelope_scale);
  r.opt("noise", s.noise);
  r.opt("val_per_subject", s.val_per_subject);
  r.opt("test_per_subject", s.test_per_subject);
  r.done();
  validate(s);
  return s;
}

inline double to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

inline Mat to_float(Mat m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = to_float(m.data()[i]);
  return m;
}

/// Front-lower cap of the unit direction field.
inline bool is_lip(const Eigen::Vector3d& d) { return d.z() > 0.6 && d.y() < -0.2; }
inline bool is_upper(const Eigen::Vector3d& d) { return d.y() > 0.3 && d.z() > 0.2; }

/// Envelope-k displacement fields (V x 3). Envelope 0 moves only lip
/// vertices; every other field leaves the lips still.
inline std::vector<Mat> blendshapes(const Mat& positions, int count, Rng& rng) {
  const Index v = positions.rows();
  std::vector<Mat> out;
  for (int k = 0; k < count; ++k) {
    Mat b = Mat::Zero(v, 3);
    for (Index i = 0; i < v; ++i) {
      const Eigen::Vector3d d = positions.row(i).normalized();
      const bool lip = is_lip(d);
      if (k == 0) {
        if (lip) b.row(i) = d.z() * Eigen::RowVector3d(0.0, -1.0, 0.25);
      } else if (lip) {
        continue;
      } else if (k == 1) {
        if (is_upper(d)) b.row(i) = (0.5 + d.y()) * Eigen::RowVector3d(0.0, 1.0, 0.1);
      } else if (k == 2) {
        if (std::abs(d.x()) > 0.5) b.row(i) << 0.6 * (d.x() > 0 ? 1.0 : -1.0), 0.0, 0.2;
      } else if (k == 3) {
        b.row(i) << 0.0, 0.0, 0.3 * d.y();
      }
    }
    if (k >= 4) {
      Mat r = randn(v, 3, rng) * 0.2;
      for (Index i = 0; i < v; ++i) {
        if (!is_lip(positions.row(i).normalized())) b.row(i) = r.row(i);
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Smooth envelope in [0, scale]: normalised sum of three low-frequency
/// sinusoids mapped from [-1, 1].
inline Eigen::VectorXd band_limited_envelope(Index samples, double rate, double scale, Rng& rng) {
  std::uniform_real_distribution<double> freq(0.5, 3.0), phase(0.0, 6.283185307179586), weight(0.3, 1.0);
  double f[3], p[3], w[3], total = 0.0;
  for (int j = 0; j < 3; ++j) {
    f[j] = freq(rng);
    p[j] = phase(rng);
    w[j] = weight(rng);
    total += w[j];
  }
  Eigen::VectorXd e(samples);
  for (Index i = 0; i < samples; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += w[j] * std::sin(6.283185307179586 * f[j] * static_cast<double>(i) / rate + p[j]);
    e(i) = scale * 0.5 * (1.0 + s / total);
  }
  return e;
}

/// 3D rotation about a unit axis.
inline Eigen::Matrix3d axis_rotation(Eigen::Vector3d axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Per-subject response: envelope gains and a rigid orientation.
struct SubjectStyle {
  std::vector<double> gains;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double template_scale = 1.0;
};

/// Everything fixed per corpus before any sentence is drawn.
struct SyntheticFace {
  mesh::TriangleMesh mesh;
  RegionMask lip{{}, "lip"};
  RegionMask upper{{}, "upper_face"};
  std::vector<Mat> shapes;
  Mat mixing;  // envelopes x audio channels
  std::vector<SubjectStyle> styles;
};

inline SyntheticFace make_synthetic_face(const CorpusSpec& spec, Rng& rng) {
  validate(spec);
  SyntheticFace f;
  f.mesh = mesh::icosphere(spec.subdivisions, spec.radius);
  f.mesh.vertices = to_float(f.mesh.vertices);
  for (Index i = 0; i < f.mesh.vertex_count(); ++i) {
    const Eigen::Vector3d d = f.mesh.vertices.row(i).normalized();
    if (is_lip(d)) f.lip.indices.push_back(static_cast<int>(i));
    if (is_upper(d)) f.upper.indices.push_back(static_cast<int>(i));
  }
  if (f.lip.indices.empty() || f.upper.indices.empty()) throw ConfigError("corpus: mesh too coarse for face regions");
  f.shapes = blendshapes(f.mesh.vertices, spec.envelopes, rng);
  f.mixing = rand_uniform(spec.envelopes, spec.audio_channels, 0.2, 1.0, rng);
  std::uniform_real_distribution<double> gain(0.6, 1.4), angle(-0.3, 0.3), size(0.95, 1.05);
  for (int s = 0; s < spec.subjects; ++s) {
    SubjectStyle st;
    st.template_scale = size(rng);
    st.gains.resize(static_cast<std::size_t>(spec.envelopes));
    for (auto& g : st.gains) g = gain(rng);
    st.rotation = axis_rotation(Eigen::Vector3d(randn(3, 1, rng)), angle(rng));
    f.styles.push_back(std::move(st));
  }
  return f;
}

/// Noise-free displacement sequence of one subject for envelopes sampled at
/// the motion rate (frames x envelopes).
inline Mat render_motion(const SyntheticFace& face, int subject, const Mat& drive, double amplitude) {
  const auto& st = face.styles.at(static_cast<std::size_t>(subject));
  const Index v = face.mesh.vertex_count();
  Mat out(drive.rows(), v * 3);
  for (Index t = 0; t < drive.rows(); ++t) {
    Mat frame = Mat::Zero(v, 3);
    for (Index e = 0; e < drive.cols(); ++e) {
      frame += (amplitude * st.gains[static_cast<std::size_t>(e)] * drive(t, e)) * face.shapes[static_cast<std::size_t>(e)];
    }
    frame = frame * st.rotation.transpose();
    out.row(t) = Eigen::Map<const RowVec>(frame.data(), frame.size());
  }
  return out;
}

inline Corpus synthesize_corpus(const CorpusSpec& spec, Rng& rng) {
  const SyntheticFace face = make_synthetic_face(spec, rng);
  Corpus c;
  c.mesh = face.mesh;
  c.lip = face.lip;
  c.upper = face.upper;
  const Index v = c.mesh.vertex_count();
  std::uniform_int_distribution<int> length(spec.frames_min, spec.frames_max);

  for (int s = 0; s < spec.subjects; ++s) {
    c.subjects.push_back("subject" + std::to_string(s));
    FaceTemplate t{c.mesh};
    t.mesh.vertices = to_float(c.mesh.vertices * face.styles[static_cast<std::size_t>(s)].template_scale);
    c.templates.push_back(std::move(t));

    for (int k = 0; k < spec.sentences_per_subject; ++k) {
      Sample smp;
      char name[32];
      std::snprintf(name, sizeof(name), "s%d_%02d", s, k);
      smp.name = name;
      smp.subject = s;
      const int from_end = spec.sentences_per_subject - 1 - k;
      smp.split = from_end < spec.test_per_subject                         ? "test"
                  : from_end < spec.test_per_subject + spec.val_per_subject ? "val"
                                                                             : "train";
      const Index frames = length(rng);
      const Index audio_frames = std::max<Index>(1, std::llround(frames * spec.audio_rate / spec.frame_rate));
      Mat env(audio_frames, spec.envelopes);
      for (int e = 0; e < spec.envelopes; ++e) {
        env.col(e) = band_limited_envelope(audio_frames, spec.audio_rate, spec.envelope_scale, rng);
      }
      env = to_float(env);
      smp.envelope = {env, spec.audio_rate, 16000, static_cast<std::uint32_t>(std::lround(16000 / spec.audio_rate))};
      smp.audio = smp.envelope;
      smp.audio.data = to_float(diffusion::synthetic_log_mel(env, face.mixing));

      Mat motion = render_motion(face, s, diffusion::align_audio_to_motion(env, frames), spec.amplitude);
      if (spec.noise > 0) motion += spec.noise * randn(frames, v * 3, rng);
      smp.motion = MotionSequence(to_float(std::move(motion)), spec.frame_rate);
      c.samples.push_back(std::move(smp));
    }
  }
  validate(c);
  return c;
}

}  // namespace qstd::data
