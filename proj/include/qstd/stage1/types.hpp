// Motion, latent and codebook types plus the Stage-1 configuration.
#pragma once

#include "qstd/json_util.hpp"
#include "qstd/mesh/mesh.hpp"

#include <string>
#include <vector>

namespace qstd::autoencoder {

/// T frames of per-vertex displacements over a template, stored T x (V*3):
/// row t holds x0 y0 z0 x1 y1 z1 ...
struct MotionSequence {
  Mat data;
  double frame_rate = 25.0;

  MotionSequence() = default;
  MotionSequence(Mat d, double fps) : data(std::move(d)), frame_rate(fps) {}
  static MotionSequence zeros(Index frames, Index vertices, double fps = 25.0) {
    return {Mat::Zero(frames, vertices * 3), fps};
  }

  Index frames() const { return data.rows(); }
  Index vertices() const { return data.cols() / 3; }

  /// Frame t as a V x 3 matrix.
  Mat frame(Index t) const { return Eigen::Map<const Mat>(data.row(t).data(), vertices(), 3); }
  void set_frame(Index t, const Mat& v3) {
    require_shape(v3.rows() == vertices() && v3.cols() == 3, "set_frame: expected V x 3");
    data.row(t) = Eigen::Map<const RowVec>(v3.data(), v3.size());
  }
  Eigen::Vector3d at(Index t, Index v) const { return {data(t, 3 * v), data(t, 3 * v + 1), data(t, 3 * v + 2)}; }

  bool operator==(const MotionSequence& o) const { return frame_rate == o.frame_rate && data == o.data; }
};

inline void validate(const MotionSequence& m, Index expected_vertices = -1) {
  if (m.frames() < 1) throw ShapeError("motion sequence has no frames");
  if (m.data.cols() % 3 != 0) throw ShapeError("motion sequence width is not a multiple of 3");
  if (expected_vertices >= 0 && m.vertices() != expected_vertices) {
    throw ShapeError("motion has " + std::to_string(m.vertices()) + " vertices, mesh has " +
                     std::to_string(expected_vertices));
  }
  if (!m.data.allFinite()) throw ShapeError("motion sequence has non-finite values");
  if (!(m.frame_rate > 0)) throw ShapeError("frame rate must be positive");
}

/// Neutral face: positions plus the bound topology (mesh.vertices == positions).
struct FaceTemplate {
  mesh::TriangleMesh mesh;

  const Mat& positions() const { return mesh.vertices; }
  Index vertices() const { return mesh.vertices.rows(); }
};

/// T x H x C latents stored T x (H*C); token h of frame t occupies columns
/// [h*C, (h+1)*C).
struct LatentSequence {
  Mat data;
  int tokens = 0;
  int channels = 0;
  bool quantized = false;
  std::vector<int> indices;  // T*H codebook ids when quantized

  Index frames() const { return data.rows(); }
  /// (T*H) x C view of the tokens.
  Mat token_rows() const { return Eigen::Map<const Mat>(data.data(), frames() * tokens, channels); }
};

struct Codebook {
  Mat entries;  // K x C
  Index size() const { return entries.rows(); }
  Index channels() const { return entries.cols(); }
};

struct Stage1Config {
  // Loss weights.
  double lambda_rec = 1.0;
  double lambda_quant = 1.0;
  double beta = 0.25;
  // Latent grid and codebook.
  int codebook_size = 256;
  int tokens = 8;
  int channels = 64;
  // Spatial encoder: output channels of each spiral block (one per pyramid
  // level transition), nonlinearity and normalisation.
  std::vector<int> block_channels{16, 32, 64};
  std::string activation = "leaky_relu";  // or "identity"
  std::string normalization = "layer";    // or "none"
  double leaky_slope = 0.2;
  // Temporal transformers.
  int transformer_layers = 4;
  int heads = 4;
  int ffn_multiplier = 2;
  int decoder_hidden = 256;
  // Optimisation.
  int epochs = 200;
  double learning_rate = 1e-4;
  int lr_halving_period = 50;
  std::string optimizer = "adamw";  // or "adam"
  double weight_decay = 0.01;
  /// Replace codes unused during an epoch with encoder outputs from that epoch.
  bool reset_dead_codes = false;
  std::uint64_t seed = 0;

  int model_dim() const { return tokens * channels; }
};

inline void validate(const Stage1Config& c) {
  auto fail = [](const std::string& m) { throw ConfigError("stage1: " + m); };
  if (c.lambda_rec < 0 || c.lambda_quant < 0) fail("loss weights must be non-negative");
  if (!(c.beta > 0 && c.beta <= 1)) fail("beta must lie in (0, 1]");
  if (c.codebook_size < 2) fail("codebook_size must be at least 2");
  if (c.tokens < 1 || c.channels < 1) fail("tokens and channels must be positive");
  if (c.block_channels.empty()) fail("block_channels must not be empty");
  for (int ch : c.block_channels) {
    if (ch < 1) fail("block_channels entries must be positive");
  }
  if (c.activation != "leaky_relu" && c.activation != "identity") fail("activation must be leaky_relu or identity");
  if (c.normalization != "layer" && c.normalization != "none") fail("normalization must be layer or none");
  if (c.transformer_layers < 0 || c.heads < 1 || c.model_dim() % c.heads != 0) {
    fail("heads must divide tokens*channels");
  }
  if (c.ffn_multiplier < 1 || c.decoder_hidden < 1) fail("ffn_multiplier and decoder_hidden must be positive");
  if (c.epochs < 0) fail("epochs must be non-negative");
  if (!(c.learning_rate > 0)) fail("learning_rate must be positive");
  if (c.optimizer != "adamw" && c.optimizer != "adam") fail("optimizer must be adamw or adam");
  if (c.weight_decay < 0) fail("weight_decay must be non-negative");
}

inline Json to_json(const Stage1Config& c) {
  return Json{{"lambda_rec", c.lambda_rec},
              {"lambda_quant", c.lambda_quant},
              {"beta", c.beta},
              {"codebook_size", c.codebook_size},
              {"tokens", c.tokens},
              {"channels", c.channels},
              {"block_channels", c.block_channels},
              {"activation", c.activation},
              {"normalization", c.normalization},
              {"leaky_slope", c.leaky_slope},
              {"transformer_layers", c.transformer_layers},
              {"heads", c.heads},
              {"ffn_multiplier", c.ffn_multiplier},
              {"decoder_hidden", c.decoder_hidden},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"lr_halving_period", c.lr_halving_period},
              {"optimizer", c.optimizer},
              {"weight_decay", c.weight_decay},
              {"reset_dead_codes", c.reset_dead_codes},
              {"seed", c.seed}};
}

inline Stage1Config stage1_config_from_json(const Json& j) {
  Stage1Config c;
  ObjectReader r(j, "stage1");
  r.opt("lambda_rec", c.lambda_rec);
  r.opt("lambda_quant", c.lambda_quant);
  r.opt("beta", c.beta);
  r.opt("codebook_size", c.codebook_size);
  r.opt("tokens", c.tokens);
  r.opt("channels", c.channels);
  r.opt("block_channels", c.block_channels);
  r.opt("activation", c.activation);
  r.opt("normalization", c.normalization);
  r.opt("leaky_slope", c.leaky_slope);
  r.opt("transformer_layers", c.transformer_layers);
  r.opt("heads", c.heads);
  r.opt("ffn_multiplier", c.ffn_multiplier);
  r.opt("decoder_hidden", c.decoder_hidden);
  r.opt("epochs", c.epochs);
  r.opt("learning_rate", c.learning_rate);
  r.opt("lr_halving_period", c.lr_halving_period);
  r.opt("optimizer", c.optimizer);
  r.opt("weight_decay", c.weight_decay);
  r.opt("reset_dead_codes", c.reset_dead_codes);
  r.opt("seed", c.seed);
  r.done();
  validate(c);
  return c;
}

}  // namespace qstd::autoencoder
