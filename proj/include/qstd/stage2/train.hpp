// Stage-2 loss, training, sampling, animation synthesis and checkpoints.
#pragma once

#include "qstd/nn/checkpoint.hpp"
#include "qstd/nn/optim.hpp"
#include "qstd/stage1/train.hpp"
#include "qstd/stage2/audio.hpp"
#include "qstd/stage2/denoiser.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace qstd::diffusion {

struct Stage2Loss {
  Var total;
  double reconstruction = 0.0;
  double velocity = 0.0;
};

inline Var frame_difference(const Var& x) {
  return ad::slice_rows(x, 1, x.rows() - 1) - ad::slice_rows(x, 0, x.rows() - 1);
}

/// lambda_rec * Huber(Z0^ - Z0) + lambda_vel * Huber(d(Z0^ - Z0)) with d the
/// frame difference; the velocity term is 0 for single-frame sequences.
inline Stage2Loss stage2_loss(const Var& predicted, const Var& target, const Stage2Config& cfg) {
  require_shape(predicted.rows() == target.rows() && predicted.cols() == target.cols(), "stage2_loss: shape mismatch");
  Stage2Loss out;
  Var rec = ad::huber_loss(predicted, target, cfg.huber_delta);
  out.reconstruction = rec.scalar();
  out.total = ad::scale(rec, cfg.lambda_rec);
  if (predicted.rows() >= 2) {
    Var residual_velocity = frame_difference(predicted - target);
    Var vel = ad::huber_loss(residual_velocity, ad::constant(Mat::Zero(residual_velocity.rows(), residual_velocity.cols())),
                             cfg.huber_delta);
    out.velocity = vel.scalar();
    if (cfg.lambda_vel != 0.0) out.total = out.total + ad::scale(vel, cfg.lambda_vel);
  }
  return out;
}

/// One training pair: clean latents Z0 (T x H*C), audio aligned to T, style.
struct Stage2Example {
  Mat target;
  Mat audio;
  RowVec style;
};

/// Z0 = Z_q(M) from a frozen Stage-1 model.
inline Mat clean_latents(const autoencoder::MotionAutoencoder& stage1, const autoencoder::MotionSequence& motion) {
  return stage1.quantize(stage1.encode(motion)).data;
}

inline Stage2Example make_example(const autoencoder::MotionAutoencoder& stage1,
                                  const autoencoder::MotionSequence& motion, const Mat& audio, RowVec style) {
  return {clean_latents(stage1, motion), align_audio_to_motion(audio, motion.frames()), std::move(style)};
}

/// 1 / standard deviation of every target entry (1 when degenerate).
inline double latent_scale_for(const std::vector<Stage2Example>& examples) {
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (const auto& e : examples) {
    sum += e.target.sum();
    sq += e.target.squaredNorm();
    n += static_cast<double>(e.target.size());
  }
  if (n == 0.0) return 1.0;
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  return var > 1e-20 ? 1.0 / std::sqrt(var) : 1.0;
}

/// Trained denoiser plus everything needed to sample from it.
struct Stage2Model {
  Denoiser denoiser;
  NoiseSchedule schedule;
  double latent_scale = 1.0;
  std::uint64_t pyramid_hash = 0;
  std::vector<std::string> subjects;
};

struct Stage2EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double total = 0.0;
  double reconstruction = 0.0;
  double velocity = 0.0;
};

struct Stage2Result {
  Stage2Model model;
  std::vector<Stage2EpochStats> curve;
};

using Stage2Progress = std::function<void(const Stage2EpochStats&)>;

inline Stage2Model make_stage2_model(const Stage2Config& cfg, Index latent_dim, Index audio_channels,
                                     std::vector<std::string> subjects, std::uint64_t pyramid_hash,
                                     double latent_scale) {
  const int s = static_cast<int>(subjects.size());
  return {Denoiser(cfg, latent_dim, audio_channels, s), make_noise_schedule(cfg.steps, cfg.schedule), latent_scale,
          pyramid_hash, std::move(subjects)};
}

/// Mean Stage-2 loss over every example and every step n = 1..N with noise
/// from a fixed stream. Targets are scaled by the model's latent scale.
inline double evaluate_stage2(const Stage2Model& model, const std::vector<Stage2Example>& examples,
                              std::uint64_t seed) {
  if (examples.empty()) throw ConfigError("evaluate_stage2: no examples");
  ad::NoGradGuard guard;
  Rng rng = named_stream(seed, "stage2.validation");
  const auto& cfg = model.denoiser.config();
  double total = 0.0;
  int count = 0;
  for (const auto& e : examples) {
    const Mat z0 = e.target * model.latent_scale;
    for (int n = 1; n <= model.schedule.steps(); ++n) {
      const Mat zn = forward_diffuse(z0, n, model.schedule, rng).noisy;
      Var pred = model.denoiser.predict_graph(Var(zn), e.audio, e.style, n);
      total += stage2_loss(pred, Var(z0), cfg).total.scalar();
      ++count;
    }
  }
  return total / count;
}

/// Denoiser-only training; Stage-1 is used solely to produce the targets.
inline Stage2Result train_stage2(const std::vector<Stage2Example>& train, Index audio_channels,
                                 std::vector<std::string> subjects, std::uint64_t pyramid_hash,
                                 const Stage2Config& cfg, const Stage2Progress& progress = {}) {
  if (train.empty()) throw ConfigError("train_stage2: empty corpus");
  const Index latent_dim = train.front().target.cols();
  const double scale = cfg.normalize_latents ? latent_scale_for(train) : 1.0;
  Stage2Result result{make_stage2_model(cfg, latent_dim, audio_channels, std::move(subjects), pyramid_hash, scale), {}};
  auto& model = result.model;

  nn::AdamOptions opts;
  opts.lr = cfg.learning_rate;
  nn::Adam adam(model.denoiser.parameters(), opts);
  Rng order_rng = named_stream(cfg.seed, "stage2.order");
  Rng noise_rng = named_stream(cfg.seed, "diffusion");
  std::uniform_int_distribution<int> step_dist(1, model.schedule.steps());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stage2EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = nn::halved_lr(cfg.learning_rate, epoch, cfg.lr_halving_period);
    adam.set_lr(stats.learning_rate);
    for (std::size_t i : autoencoder::shuffled_order(train.size(), order_rng)) {
      const auto& e = train[i];
      const Mat z0 = e.target * scale;
      const int n = step_dist(noise_rng);
      const Mat zn = forward_diffuse(z0, n, model.schedule, noise_rng).noisy;
      model.denoiser.parameters().zero_grad();
      Var pred = model.denoiser.predict_graph(Var(zn), e.audio, e.style, n);
      auto loss = stage2_loss(pred, Var(z0), cfg);
      const double value = loss.total.scalar();
      if (!std::isfinite(value)) {
        throw DivergenceError("stage2 loss became non-finite at epoch " + std::to_string(epoch), epoch);
      }
      ad::backward(loss.total);
      adam.step();
      stats.total += value;
      stats.reconstruction += loss.reconstruction;
      stats.velocity += loss.velocity;
    }
    const double count = static_cast<double>(train.size());
    stats.total /= count;
    stats.reconstruction /= count;
    stats.velocity /= count;
    result.curve.push_back(stats);
    if (progress) progress(stats);
  }
  return result;
}

struct SampleOptions {
  bool deterministic = false;  // zero posterior variance
  std::optional<Mat> initial_noise;
};

/// Ancestral sampling with clean-sample prediction; returns Z0 in the model's
/// normalised latent space.
inline Mat sample_normalized(const Denoiser& denoiser, const NoiseSchedule& schedule, const Mat& audio,
                             const RowVec& style, Rng& rng, const SampleOptions& opts = {}) {
  const Index t = audio.rows();
  Mat z = opts.initial_noise ? *opts.initial_noise : randn(t, denoiser.latent_dim(), rng);
  require_shape(z.rows() == t && z.cols() == denoiser.latent_dim(), "sample: initial noise shape mismatch");
  Mat estimate;
  for (int n = schedule.steps(); n >= 1; --n) {
    estimate = denoiser.predict(z, {audio, style, n});
    if (n == 1) break;
    const auto p = posterior(schedule, n);
    z = p.c0 * estimate + p.cn * z;
    if (!opts.deterministic) z += std::sqrt(p.variance) * randn(z.rows(), z.cols(), rng);
  }
  return estimate;
}

/// Z0 estimate in Stage-1 latent units.
inline Mat sample(const Stage2Model& model, const Mat& audio, const RowVec& style, Rng& rng,
                  const SampleOptions& opts = {}) {
  return sample_normalized(model.denoiser, model.schedule, audio, style, rng, opts) / model.latent_scale;
}

struct AnimationOptions {
  bool snap_to_codebook = false;
  SampleOptions sampler;
  double frame_rate = 25.0;
};

struct Animation {
  autoencoder::LatentSequence latents;
  autoencoder::MotionSequence motion;  // displacements
  autoencoder::MotionSequence faces;   // template + displacements
};

/// Motion frame count covering a feature track at the given motion rate.
inline Index motion_frames_for(const AudioFeatures& audio, double frame_rate) {
  const double seconds = static_cast<double>(audio.frames()) / audio.frame_rate;
  return std::max<Index>(1, static_cast<Index>(std::llround(seconds * frame_rate)));
}

inline autoencoder::MotionSequence add_template(const autoencoder::MotionSequence& motion, const Mat& positions) {
  autoencoder::MotionSequence faces = motion;
  const RowVec flat = Eigen::Map<const RowVec>(positions.data(), positions.size());
  faces.data.rowwise() += flat;
  return faces;
}

inline Animation generate_animation(const AudioFeatures& audio, const RowVec& style,
                                    const autoencoder::FaceTemplate& face, const autoencoder::MotionAutoencoder& stage1,
                                    const Stage2Model& stage2, std::uint64_t seed, const AnimationOptions& opts = {}) {
  if (stage2.pyramid_hash != mesh::pyramid_hash(stage1.pyramid())) {
    throw ConfigError("stage2 checkpoint was trained against a different mesh pyramid");
  }
  if (face.vertices() != stage1.vertex_count()) {
    throw ShapeError("template has " + std::to_string(face.vertices()) + " vertices, model expects " +
                     std::to_string(stage1.vertex_count()));
  }
  if (mesh::topology_hash(face.mesh) != mesh::topology_hash(stage1.pyramid().levels.front().mesh)) {
    throw ShapeError("template topology does not match the model mesh");
  }
  const Index t = motion_frames_for(audio, opts.frame_rate);
  const Mat aligned = align_audio_to_motion(audio.data, t);
  Rng rng = named_stream(seed, "sampling");
  Animation out;
  out.latents.data = sample(stage2, aligned, style, rng, opts.sampler);
  out.latents.tokens = stage1.config().tokens;
  out.latents.channels = stage1.config().channels;
  if (opts.snap_to_codebook) out.latents = stage1.quantize(out.latents);
  out.motion = stage1.decode(out.latents, opts.frame_rate);
  out.faces = add_template(out.motion, face.positions());
  return out;
}

inline constexpr const char* kStage2Kind = "stage2";

inline void save_stage2(const std::string& path, const Stage2Model& m) {
  nn::CheckpointHeader h;
  h.kind = kStage2Kind;
  h.meta = Json{{"config", to_json(m.denoiser.config())},
                {"latent_dim", m.denoiser.latent_dim()},
                {"audio_channels", m.denoiser.audio_channels()},
                {"subjects", m.subjects},
                {"latent_scale", m.latent_scale},
                {"schedule", {{"kind", m.schedule.kind}, {"betas", m.schedule.betas}}}};
  h.config_hash = nn::config_hash(h.meta["config"]);
  h.seed = m.denoiser.config().seed;
  h.pyramid_hash = m.pyramid_hash;
  nn::save_checkpoint(path, h, m.denoiser.parameters());
}

inline Stage2Model load_stage2(const std::string& path) {
  auto r = io::Reader::from_file(path);
  auto h = nn::read_checkpoint_header(r, kStage2Kind);
  try {
    const auto& meta = h.meta;
    auto cfg = stage2_config_from_json(meta.at("config"));
    Stage2Model m{Denoiser(cfg, meta.at("latent_dim").get<Index>(), meta.at("audio_channels").get<Index>(),
                           static_cast<int>(meta.at("subjects").size())),
                  schedule_from_betas(meta.at("schedule").at("betas").get<std::vector<double>>(),
                                      meta.at("schedule").at("kind").get<std::string>()),
                  meta.at("latent_scale").get<double>(), h.pyramid_hash,
                  meta.at("subjects").get<std::vector<std::string>>()};
    nn::finish_tensors(r, m.denoiser.parameters());
    return m;
  } catch (const Json::exception& e) {
    throw IoError(path + ": bad stage2 metadata: " + e.what());
  }
}

}  // namespace qstd::diffusion
