// Stage 1: spatial pyramid spiral encoder, temporal transformers, vector
// quantiser and MLP vertex decoder.
#pragma once

#include "qstd/mesh/pyramid.hpp"
#include "qstd/nn/layers.hpp"
#include "qstd/stage1/types.hpp"

#include <limits>
#include <memory>

namespace qstd::autoencoder {

using ad::Var;

/// Spiral convolution over `blocks` stacked copies of a level's vertex set.
/// Row v of each block becomes W^T concat(x[spiral(v, 0)], ..., x[spiral(v, k-1)]) + b,
/// where padded slots contribute zeros. `weight` is (k*C_in) x C_out.
inline Var spiral_conv(const Var& features, const mesh::SpiralIndexTable& table, const Var& weight, const Var& bias,
                       Index blocks = 1) {
  const Index v = table.vertex_count;
  const Index k = table.kernel_size;
  require_shape(features.rows() == v * blocks,
                "spiral_conv: features have " + std::to_string(features.rows()) + " rows, expected " +
                    std::to_string(v * blocks));
  require_shape(weight.rows() == k * features.cols(),
                "spiral_conv: weight has " + std::to_string(weight.rows()) + " rows, expected kernel_size*C_in = " +
                    std::to_string(k * features.cols()));
  require_shape(bias.rows() == 1 && bias.cols() == weight.cols(), "spiral_conv: bias must be 1 x C_out");
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(v * k * blocks));
  for (Index b = 0; b < blocks; ++b) {
    const int base = static_cast<int>(b * v);
    for (int s : table.indices) idx.push_back(s == mesh::kSpiralPad ? -1 : base + s);
  }
  Var gathered = ad::reshape(ad::gather_rows(features, std::move(idx)), v * blocks, k * features.cols());
  return ad::add_row(ad::matmul(gathered, weight), bias);
}

inline Mat spiral_conv(const Mat& features, const mesh::SpiralIndexTable& table, const Mat& weight, const Mat& bias) {
  ad::NoGradGuard guard;
  return spiral_conv(Var(features), table, Var(weight), Var(bias)).value();
}

/// Index of the nearest codebook row; ties go to the lowest index.
inline int nearest_code(const Eigen::Ref<const RowVec>& z, const Mat& codebook) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < codebook.rows(); ++k) {
    const double d = (codebook.row(k) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline std::vector<int> nearest_codes(const Mat& rows, const Mat& codebook) {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)] = nearest_code(rows.row(i), codebook);
  return out;
}

/// Nearest-neighbour quantisation of every (t, h) token.
inline LatentSequence quantize(const LatentSequence& z, const Codebook& codebook) {
  if (codebook.size() == 0) throw ShapeError("quantize: empty codebook");
  require_shape(codebook.channels() == z.channels, "quantize: codebook has " + std::to_string(codebook.channels()) +
                                                       " channels, latents have " + std::to_string(z.channels));
  LatentSequence out;
  out.tokens = z.tokens;
  out.channels = z.channels;
  out.quantized = true;
  out.indices = nearest_codes(z.token_rows(), codebook.entries);
  Mat rows(static_cast<Index>(out.indices.size()), z.channels);
  for (std::size_t i = 0; i < out.indices.size(); ++i) rows.row(static_cast<Index>(i)) = codebook.entries.row(out.indices[i]);
  out.data = Eigen::Map<const Mat>(rows.data(), z.frames(), static_cast<Index>(z.tokens) * z.channels);
  return out;
}

struct Stage1Loss {
  Var total;
  double reconstruction = 0.0;
  double quantization = 0.0;
};

/// lambda_rec * mean|M^ - M| + lambda_quant * (mean(sg(Z^) - Zq)^2 + beta * mean(Z^ - sg(Zq))^2)
inline Stage1Loss stage1_loss(const Var& reconstruction, const Var& target, const Var& continuous, const Var& quantized,
                              const Stage1Config& cfg) {
  Stage1Loss out;
  Var rec = ad::l1_loss(reconstruction, target);
  out.reconstruction = rec.scalar();
  out.total = ad::scale(rec, cfg.lambda_rec);
  Var codebook_term = ad::mse_loss(ad::detach(continuous), quantized);
  Var commitment = ad::mse_loss(continuous, ad::detach(quantized));
  Var quant = codebook_term + ad::scale(commitment, cfg.beta);
  out.quantization = quant.scalar();
  if (cfg.lambda_quant != 0.0) out.total = out.total + ad::scale(quant, cfg.lambda_quant);
  return out;
}

struct Stage1Forward {
  Stage1Loss loss;
  Var continuous;  // (T*H) x C
  std::vector<int> indices;
};

class MotionAutoencoder {
 public:
  MotionAutoencoder(mesh::MeshPyramid pyramid, Stage1Config cfg)
      : pyramid_(std::make_shared<const mesh::MeshPyramid>(std::move(pyramid))), cfg_(std::move(cfg)) {
    validate(cfg_);
    if (static_cast<int>(cfg_.block_channels.size()) != pyramid_->level_count() - 1) {
      throw ShapeError("stage1: " + std::to_string(cfg_.block_channels.size()) + " spiral blocks configured for a " +
                       std::to_string(pyramid_->level_count()) + "-level pyramid (need levels-1)");
    }
    build();
  }
  // Layers share parameter nodes with the store, so copies would alias.
  MotionAutoencoder(const MotionAutoencoder&) = delete;
  MotionAutoencoder& operator=(const MotionAutoencoder&) = delete;
  MotionAutoencoder(MotionAutoencoder&&) = default;
  MotionAutoencoder& operator=(MotionAutoencoder&&) = default;

  const Stage1Config& config() const { return cfg_; }
  const mesh::MeshPyramid& pyramid() const { return *pyramid_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }
  Index vertex_count() const { return pyramid_->vertex_count(0); }
  Index model_dim() const { return cfg_.model_dim(); }
  Codebook codebook() const { return {codebook_.value()}; }
  Var& codebook_var() { return codebook_; }

  /// (T*V) x 3 stacked frames -> T x (H*C) per-frame token grids.
  Var encode_spatial_graph(const Var& stacked, Index frames) const {
    require_shape(stacked.rows() == frames * vertex_count() && stacked.cols() == 3,
                  "encode_spatial: expected " + std::to_string(frames * vertex_count()) + " x 3 input");
    Var x = stacked;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const auto& level = pyramid_->levels[l];
      x = spiral_conv(x, level.spiral, blocks_[l].weight, blocks_[l].bias, frames);
      if (cfg_.normalization == "layer") x = block_norms_[l](x);
      if (cfg_.activation == "leaky_relu") x = ad::leaky_relu(x, cfg_.leaky_slope);
      x = ad::mix_rows(x, pyramid_->maps[l].pool, level.mesh.vertex_count(), frames);
    }
    const Index coarse = pyramid_->vertex_count(pyramid_->level_count() - 1);
    x = ad::reshape(x, frames, coarse * x.cols());
    return fusion_(x);
  }

  /// One V x 3 frame -> H x C tokens.
  Mat encode_spatial(const Mat& frame) const {
    require_shape(frame.rows() == vertex_count() && frame.cols() == 3, "encode_spatial: frame must be V x 3");
    ad::NoGradGuard guard;
    Mat out = encode_spatial_graph(Var(frame), 1).value();
    return Eigen::Map<const Mat>(out.data(), cfg_.tokens, cfg_.channels);
  }

  /// T x (V*3) motion -> T x (H*C) continuous latents.
  Var encode_graph(const Var& motion) const {
    require_shape(motion.cols() == vertex_count() * 3,
                  "encode: motion has " + std::to_string(motion.cols() / 3) + " vertices, pyramid level 0 has " +
                      std::to_string(vertex_count()));
    const Index t = motion.rows();
    if (t == 0) throw ShapeError("encode: sequence has no frames");
    Var x = encode_spatial_graph(ad::reshape(motion, t * vertex_count(), 3), t);
    x = x + ad::constant(nn::sinusoidal_positions(t, model_dim()));
    for (const auto& layer : encoder_layers_) x = layer(x);
    return encoder_out_(encoder_norm_(x));
  }

  LatentSequence encode(const MotionSequence& m) const {
    validate(m, vertex_count());
    ad::NoGradGuard guard;
    LatentSequence z;
    z.data = encode_graph(Var(m.data)).value();
    z.tokens = cfg_.tokens;
    z.channels = cfg_.channels;
    return z;
  }

  LatentSequence quantize(const LatentSequence& z) const { return autoencoder::quantize(z, codebook()); }

  /// T x (H*C) latents -> T x (V*3) motion.
  Var decode_graph(const Var& latents) const {
    require_shape(latents.cols() == model_dim(), "decode: latents have " + std::to_string(latents.cols()) +
                                                     " columns, expected " + std::to_string(model_dim()));
    const Index t = latents.rows();
    Var x = decoder_in_(latents) + ad::constant(nn::sinusoidal_positions(t, model_dim()));
    for (const auto& layer : decoder_layers_) x = layer(x);
    x = decoder_norm_(x);
    return vertex_out_(ad::leaky_relu(vertex_hidden_(x), cfg_.leaky_slope));
  }

  MotionSequence decode(const LatentSequence& z, double frame_rate = 25.0) const {
    require_shape(z.tokens == cfg_.tokens && z.channels == cfg_.channels && z.data.cols() == model_dim(),
                  "decode: latent grid does not match the model");
    if (z.frames() < 1) throw ShapeError("decode: no frames");
    ad::NoGradGuard guard;
    return {decode_graph(Var(z.data)).value(), frame_rate};
  }

  /// Full training forward pass with straight-through quantisation.
  Stage1Forward forward(const MotionSequence& m) const {
    validate(m, vertex_count());
    const Index t = m.frames();
    Var target = ad::constant(m.data);
    Var zhat = encode_graph(target);
    Var rows = ad::reshape(zhat, t * cfg_.tokens, cfg_.channels);
    Stage1Forward out;
    out.indices = nearest_codes(rows.value(), codebook_.value());
    Var zq = ad::gather_rows(codebook_, out.indices);
    Var passthrough = ad::straight_through(rows, zq.value());
    Var recon = decode_graph(ad::reshape(passthrough, t, model_dim()));
    out.loss = stage1_loss(recon, target, rows, zq, cfg_);
    out.continuous = rows;
    return out;
  }

 private:
  void build() {
    Rng rng = named_stream(cfg_.seed, "init");
    const Index d = model_dim();
    Index cin = 3;
    for (std::size_t l = 0; l < cfg_.block_channels.size(); ++l) {
      const Index cout = cfg_.block_channels[l];
      const Index k = pyramid_->levels[l].spiral.kernel_size;
      blocks_.push_back(nn::Linear::create(params_, "encoder.block" + std::to_string(l), k * cin, cout, rng));
      block_norms_.push_back(nn::LayerNorm::create(params_, "encoder.block" + std::to_string(l) + ".norm", cout));
      cin = cout;
    }
    const Index coarse = pyramid_->vertex_count(pyramid_->level_count() - 1);
    fusion_ = nn::Linear::create(params_, "encoder.fusion", coarse * cin, d, rng);
    const Index hidden = static_cast<Index>(cfg_.ffn_multiplier) * d;
    for (int i = 0; i < cfg_.transformer_layers; ++i) {
      encoder_layers_.push_back(
          nn::TransformerLayer::create(params_, "encoder.temporal" + std::to_string(i), d, cfg_.heads, hidden, rng));
    }
    encoder_norm_ = nn::LayerNorm::create(params_, "encoder.norm", d);
    encoder_out_ = nn::Linear::create(params_, "encoder.out", d, d, rng);

    const double bound = 1.0 / static_cast<double>(cfg_.codebook_size);
    codebook_ = params_.add("codebook", rand_uniform(cfg_.codebook_size, cfg_.channels, -bound, bound, rng), false);

    decoder_in_ = nn::Linear::create(params_, "decoder.in", d, d, rng);
    for (int i = 0; i < cfg_.transformer_layers; ++i) {
      decoder_layers_.push_back(
          nn::TransformerLayer::create(params_, "decoder.temporal" + std::to_string(i), d, cfg_.heads, hidden, rng));
    }
    decoder_norm_ = nn::LayerNorm::create(params_, "decoder.norm", d);
    vertex_hidden_ = nn::Linear::create(params_, "decoder.vertex_hidden", d, cfg_.decoder_hidden, rng);
    vertex_out_ = nn::Linear::create(params_, "decoder.vertex_out", cfg_.decoder_hidden, vertex_count() * 3, rng);
  }

  std::shared_ptr<const mesh::MeshPyramid> pyramid_;
  Stage1Config cfg_;
  nn::ParameterStore params_;
  std::vector<nn::Linear> blocks_;
  std::vector<nn::LayerNorm> block_norms_;
  nn::Linear fusion_;
  std::vector<nn::TransformerLayer> encoder_layers_;
  nn::LayerNorm encoder_norm_;
  nn::Linear encoder_out_;
  Var codebook_;
  nn::Linear decoder_in_;
  std::vector<nn::TransformerLayer> decoder_layers_;
  nn::LayerNorm decoder_norm_;
  nn::Linear vertex_hidden_;
  nn::Linear vertex_out_;
};

}  // namespace qstd::autoencoder
