// Audio feature tracks: file container, synthetic extractor and alignment
// to the motion frame rate.
//
// Feature file:
//   "QSTDAUDF" u32 version u32 reserved
//   u32 frames, u32 channels, f64 frame_rate, u32 sample_rate, u32 hop
//   frames*channels f32 (row-major)
#pragma once

#include "qstd/binary_io.hpp"

#include <cmath>
#include <string>

namespace qstd::diffusion {

struct AudioFeatures {
  Mat data;  // T_a x C_a
  double frame_rate = 50.0;
  std::uint32_t sample_rate = 16000;
  std::uint32_t hop = 320;

  Index frames() const { return data.rows(); }
  Index channels() const { return data.cols(); }
  bool operator==(const AudioFeatures& o) const {
    return data == o.data && frame_rate == o.frame_rate && sample_rate == o.sample_rate && hop == o.hop;
  }
};

inline constexpr char kAudioMagic[9] = "QSTDAUDF";

inline void write_audio_body(io::Writer& w, const AudioFeatures& a) {
  w.u32(static_cast<std::uint32_t>(a.frames()));
  w.u32(static_cast<std::uint32_t>(a.channels()));
  w.f64(a.frame_rate);
  w.u32(a.sample_rate);
  w.u32(a.hop);
  for (Index i = 0; i < a.data.size(); ++i) w.f32(static_cast<float>(a.data.data()[i]));
}

inline void save_audio_features(const std::string& path, const AudioFeatures& a) {
  io::Writer w;
  w.header(kAudioMagic, 1);
  write_audio_body(w, a);
  w.save(path);
}

inline AudioFeatures load_audio_features(const std::string& path) {
  auto r = io::Reader::from_file(path);
  r.header(kAudioMagic, 1);
  AudioFeatures a;
  const auto t = r.u32();
  const auto c = r.u32();
  a.frame_rate = r.f64();
  a.sample_rate = r.u32();
  a.hop = r.u32();
  if (t == 0 || c == 0) throw IoError(path + ": empty feature track");
  if (!(a.frame_rate > 0)) throw IoError(path + ": frame rate must be positive");
  a.data.resize(t, c);
  for (Index i = 0; i < a.data.size(); ++i) a.data.data()[i] = static_cast<double>(r.f32());
  if (!r.at_end()) throw IoError(path + ": trailing bytes");
  return a;
}

/// Linear interpolation along time onto `frames` samples with both ends
/// aligned; a track already of that length is returned unchanged.
inline Mat align_audio_to_motion(const Mat& features, Index frames) {
  if (features.rows() < 1) throw ShapeError("align_audio_to_motion: empty feature track");
  if (frames < 1) throw ShapeError("align_audio_to_motion: target length must be positive");
  if (features.rows() == frames) return features;
  Mat out(frames, features.cols());
  const Index last = features.rows() - 1;
  for (Index t = 0; t < frames; ++t) {
    const double pos = frames == 1 ? 0.0 : static_cast<double>(t * last) / static_cast<double>(frames - 1);
    const Index i0 = std::min(static_cast<Index>(std::floor(pos)), last);
    const double frac = pos - static_cast<double>(i0);
    if (frac == 0.0 || i0 == last) {
      out.row(t) = features.row(i0);
    } else {
      out.row(t) = features.row(i0) + frac * (features.row(i0 + 1) - features.row(i0));
    }
  }
  return out;
}

/// Synthetic log-mel-like extractor: each channel is the log of a fixed
/// positive mix of band envelopes, log(floor + envelopes * mixing).
inline Mat synthetic_log_mel(const Mat& envelopes, const Mat& mixing, double floor = 1e-2) {
  require_shape(envelopes.cols() == mixing.rows(), "synthetic_log_mel: mixing must have one row per envelope");
  Mat out = envelopes * mixing;
  return (out.array() + floor).log().matrix();
}

}  // namespace qstd::diffusion
