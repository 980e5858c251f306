// Conditional denoiser: predicts clean latents from noisy latents, audio,
// speaker style and diffusion step.
#pragma once

#include "qstd/json_util.hpp"
#include "qstd/nn/layers.hpp"
#include "qstd/stage2/schedule.hpp"

#include <string>
#include <vector>

namespace qstd::diffusion {

using ad::Var;

struct Stage2Config {
  double lambda_rec = 1.0;
  double lambda_vel = 1.0;
  double huber_delta = 1.0;
  int steps = 50;
  std::string schedule = "linear";
  // Denoiser size.
  int model_dim = 64;
  int heads = 4;
  int layers = 2;
  int ffn_multiplier = 2;
  int audio_kernel = 5;  // causal window of the temporal conv audio encoder
  int bias_period = 1;   // frames per step of the self-attention recency bias
  double leaky_slope = 0.2;
  // Divide targets by their standard deviation before diffusion.
  bool normalize_latents = true;
  // Optimisation.
  int epochs = 200;
  double learning_rate = 1e-4;
  int lr_halving_period = 50;
  std::uint64_t seed = 0;
};

inline void validate(const Stage2Config& c) {
  auto fail = [](const std::string& m) { throw ConfigError("stage2: " + m); };
  if (c.lambda_rec < 0 || c.lambda_vel < 0) fail("loss weights must be non-negative");
  if (!(c.huber_delta > 0)) fail("huber_delta must be positive");
  if (c.steps < 2) fail("steps must be at least 2");
  if (c.schedule != "linear" && c.schedule != "linear_unscaled" && c.schedule != "cosine") {
    fail("schedule must be linear, linear_unscaled or cosine");
  }
  if (c.model_dim < 1 || c.heads < 1 || c.model_dim % c.heads != 0) fail("heads must divide model_dim");
  if (c.layers < 0 || c.ffn_multiplier < 1) fail("layers and ffn_multiplier must be valid");
  if (c.audio_kernel < 1 || c.bias_period < 1) fail("audio_kernel and bias_period must be positive");
  if (c.epochs < 0) fail("epochs must be non-negative");
  if (!(c.learning_rate > 0)) fail("learning_rate must be positive");
}

inline Json to_json(const Stage2Config& c) {
  return Json{{"lambda_rec", c.lambda_rec},
              {"lambda_vel", c.lambda_vel},
              {"huber_delta", c.huber_delta},
              {"steps", c.steps},
              {"schedule", c.schedule},
              {"model_dim", c.model_dim},
              {"heads", c.heads},
              {"layers", c.layers},
              {"ffn_multiplier", c.ffn_multiplier},
              {"audio_kernel", c.audio_kernel},
              {"bias_period", c.bias_period},
              {"leaky_slope", c.leaky_slope},
              {"normalize_latents", c.normalize_latents},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"lr_halving_period", c.lr_halving_period},
              {"seed", c.seed}};
}

inline Stage2Config stage2_config_from_json(const Json& j) {
  Stage2Config c;
  ObjectReader r(j, "stage2");
  r.opt("lambda_rec", c.lambda_rec);
  r.opt("lambda_vel", c.lambda_vel);
  r.opt("huber_delta", c.huber_delta);
  r.opt("steps", c.steps);
  r.opt("schedule", c.schedule);
  r.opt("model_dim", c.model_dim);
  r.opt("heads", c.heads);
  r.opt("layers", c.layers);
  r.opt("ffn_multiplier", c.ffn_multiplier);
  r.opt("audio_kernel", c.audio_kernel);
  r.opt("bias_period", c.bias_period);
  r.opt("leaky_slope", c.leaky_slope);
  r.opt("normalize_latents", c.normalize_latents);
  r.opt("epochs", c.epochs);
  r.opt("learning_rate", c.learning_rate);
  r.opt("lr_halving_period", c.lr_halving_period);
  r.opt("seed", c.seed);
  r.done();
  validate(c);
  return c;
}

/// Audio (aligned to the motion frames), style weights over the subject
/// roster and diffusion step.
struct ConditioningBundle {
  Mat audio;   // T x C_a
  RowVec style;  // 1 x S, non-negative, sums to 1
  int step = 1;
};

inline RowVec one_hot_style(int subject, int subjects) {
  if (subject < 0 || subject >= subjects) {
    throw ConfigError("unknown subject index " + std::to_string(subject) + " (roster has " + std::to_string(subjects) +
                      ")");
  }
  RowVec s = RowVec::Zero(subjects);
  s(subject) = 1.0;
  return s;
}

inline void validate_style(const RowVec& style, Index subjects) {
  if (style.size() != subjects) {
    throw ConfigError("style has " + std::to_string(style.size()) + " entries, roster has " + std::to_string(subjects));
  }
  if ((style.array() < 0).any() || std::abs(style.sum() - 1.0) > 1e-9) {
    throw ConfigError("style weights must be non-negative and sum to 1");
  }
}

struct ConditionStreams {
  Var query;     // T x D: noise embedding + style embedding
  Var keyvalue;  // T x D: audio embedding + step embedding
};

class Denoiser {
 public:
  Denoiser(Stage2Config cfg, Index latent_dim, Index audio_channels, int subjects)
      : cfg_(std::move(cfg)), latent_dim_(latent_dim), audio_channels_(audio_channels), subjects_(subjects) {
    validate(cfg_);
    if (latent_dim < 1 || audio_channels < 1 || subjects < 1) {
      throw ConfigError("denoiser needs positive latent, audio and subject dimensions");
    }
    build();
  }
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;
  Denoiser& operator=(Denoiser&&) = default;

  const Stage2Config& config() const { return cfg_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }
  Index latent_dim() const { return latent_dim_; }
  Index audio_channels() const { return audio_channels_; }
  int subjects() const { return subjects_; }

  /// Causal temporal convolution: frame t sees audio frames t-k+1 .. t.
  Var encode_audio(const Var& audio) const {
    require_shape(audio.cols() == audio_channels_, "denoiser: audio has " + std::to_string(audio.cols()) +
                                                       " channels, expected " + std::to_string(audio_channels_));
    const Index t = audio.rows();
    const int k = cfg_.audio_kernel;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(t * k));
    for (Index i = 0; i < t; ++i) {
      for (int j = k - 1; j >= 0; --j) idx.push_back(i - j >= 0 ? static_cast<int>(i - j) : -1);
    }
    Var window = ad::reshape(ad::gather_rows(audio, std::move(idx)), t, k * audio_channels_);
    return audio_out_(ad::leaky_relu(audio_in_(window), cfg_.leaky_slope));
  }

  ConditionStreams encode_conditions(const Var& noisy, const Mat& audio, const RowVec& style, int step) const {
    require_shape(noisy.cols() == latent_dim_, "denoiser: latents have " + std::to_string(noisy.cols()) +
                                                   " columns, expected " + std::to_string(latent_dim_));
    require_shape(audio.rows() == noisy.rows(), "denoiser: audio has " + std::to_string(audio.rows()) +
                                                    " frames, latents have " + std::to_string(noisy.rows()));
    validate_style(style, subjects_);
    if (step < 1 || step > step_table_.rows()) {
      throw ConfigError("denoiser: step " + std::to_string(step) + " outside [1, " +
                        std::to_string(step_table_.rows()) + "]");
    }
    const Index t = noisy.rows();
    ConditionStreams s;
    Var style_embedding = ad::matmul(ad::constant(style), style_table_);
    s.query = noise_in_(noisy) + ad::broadcast_rows(style_embedding, t);
    Var step_embedding = ad::gather_rows(step_table_, {step - 1});
    s.keyvalue = encode_audio(ad::constant(audio)) + ad::broadcast_rows(step_embedding, t);
    return s;
  }

  ConditionStreams encode_conditions(const Var& noisy, const ConditioningBundle& b) const {
    return encode_conditions(noisy, b.audio, b.style, b.step);
  }

  /// Cross-attention of one layer with the alignment mask.
  Var cross_attend(std::size_t layer, const Var& x, const Var& keyvalue) const {
    const auto& l = layers_.at(layer);
    return l.cross(l.norm_cross(x), l.norm_kv(keyvalue), {nn::alignment_mask(x.rows())});
  }

  Var predict_graph(const Var& noisy, const Mat& audio, const RowVec& style, int step) const {
    auto streams = encode_conditions(noisy, audio, style, step);
    const Index t = noisy.rows();
    auto self_masks = nn::biased_causal_masks(t, cfg_.heads, cfg_.bias_period);
    Var x = streams.query;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      Var h = l.norm_self(x);
      x = x + l.self(h, h, self_masks);
      x = x + cross_attend(i, x, streams.keyvalue);
      x = x + l.ffn(l.norm_ffn(x));
    }
    return out_(out_norm_(x));
  }

  /// Clean-latent estimate for noisy latents Z^n (T x latent_dim).
  Mat predict(const Mat& noisy, const ConditioningBundle& b) const {
    ad::NoGradGuard guard;
    return predict_graph(Var(noisy), b.audio, b.style, b.step).value();
  }

 private:
  struct Layer {
    nn::LayerNorm norm_self, norm_cross, norm_kv, norm_ffn;
    nn::MultiHeadAttention self, cross;
    nn::FeedForward ffn;
  };

  void build() {
    Rng rng = named_stream(cfg_.seed, "denoiser.init");
    const Index d = cfg_.model_dim;
    noise_in_ = nn::Linear::create(params_, "noise_encoder", latent_dim_, d, rng);
    style_table_ = params_.add("style_embedding", rand_uniform(subjects_, d, -1.0, 1.0, rng));
    audio_in_ = nn::Linear::create(params_, "audio_encoder.conv", cfg_.audio_kernel * audio_channels_, d, rng);
    audio_out_ = nn::Linear::create(params_, "audio_encoder.out", d, d, rng);
    step_table_ = params_.add("step_embedding", rand_uniform(cfg_.steps, d, -1.0, 1.0, rng));
    for (int i = 0; i < cfg_.layers; ++i) {
      const std::string n = "decoder.layer" + std::to_string(i);
      Layer l;
      l.norm_self = nn::LayerNorm::create(params_, n + ".norm_self", d);
      l.self = nn::MultiHeadAttention::create(params_, n + ".self", d, cfg_.heads, rng);
      l.norm_cross = nn::LayerNorm::create(params_, n + ".norm_cross", d);
      l.norm_kv = nn::LayerNorm::create(params_, n + ".norm_kv", d);
      l.cross = nn::MultiHeadAttention::create(params_, n + ".cross", d, cfg_.heads, rng);
      l.norm_ffn = nn::LayerNorm::create(params_, n + ".norm_ffn", d);
      l.ffn = nn::FeedForward::create(params_, n + ".ffn", d, cfg_.ffn_multiplier * d, rng);
      layers_.push_back(std::move(l));
    }
    out_norm_ = nn::LayerNorm::create(params_, "decoder.norm", d);
    out_ = nn::Linear::create(params_, "decoder.out", d, latent_dim_, rng);
  }

  Stage2Config cfg_;
  Index latent_dim_;
  Index audio_channels_;
  int subjects_;
  nn::ParameterStore params_;
  nn::Linear noise_in_;
  Var style_table_;
  nn::Linear audio_in_, audio_out_;
  Var step_table_;
  std::vector<Layer> layers_;
  nn::LayerNorm out_norm_;
  nn::Linear out_;
};

}  // namespace qstd::diffusion
