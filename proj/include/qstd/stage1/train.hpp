// Stage-1 training loop and checkpoint I/O.
#pragma once

#include "qstd/nn/checkpoint.hpp"
#include "qstd/nn/optim.hpp"
#include "qstd/stage1/model.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace qstd::autoencoder {

struct Stage1EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double total = 0.0;
  double reconstruction = 0.0;
  double quantization = 0.0;
  int codes_used = 0;
};

struct Stage1Result {
  MotionAutoencoder model;
  std::vector<Stage1EpochStats> curve;
};

using Stage1Progress = std::function<void(const Stage1EpochStats&)>;

/// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

/// Batch size 1, one optimizer step per sequence.
inline Stage1Result train_stage1(const std::vector<MotionSequence>& corpus, mesh::MeshPyramid pyramid,
                                 const Stage1Config& cfg, const Stage1Progress& progress = {}) {
  if (corpus.empty()) throw ConfigError("train_stage1: empty corpus");
  Stage1Result result{MotionAutoencoder(std::move(pyramid), cfg), {}};
  auto& model = result.model;
  for (const auto& m : corpus) validate(m, model.vertex_count());

  nn::AdamOptions opts;
  opts.lr = cfg.learning_rate;
  opts.weight_decay = cfg.optimizer == "adamw" ? cfg.weight_decay : 0.0;
  nn::Adam adam(model.parameters(), opts);
  Rng order_rng = named_stream(cfg.seed, "stage1.order");
  Rng code_rng = named_stream(cfg.seed, "stage1.codes");
  const std::size_t reservoir_cap = static_cast<std::size_t>(cfg.codebook_size) * 4;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stage1EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = nn::halved_lr(cfg.learning_rate, epoch, cfg.lr_halving_period);
    adam.set_lr(stats.learning_rate);
    std::vector<int> usage(static_cast<std::size_t>(cfg.codebook_size), 0);
    std::vector<RowVec> reservoir;
    std::size_t seen = 0;

    for (std::size_t i : shuffled_order(corpus.size(), order_rng)) {
      model.parameters().zero_grad();
      auto fwd = model.forward(corpus[i]);
      const double loss = fwd.loss.total.scalar();
      if (!std::isfinite(loss)) {
        throw DivergenceError("stage1 loss became non-finite at epoch " + std::to_string(epoch), epoch);
      }
      ad::backward(fwd.loss.total);
      adam.step();
      stats.total += loss;
      stats.reconstruction += fwd.loss.reconstruction;
      stats.quantization += fwd.loss.quantization;
      for (int k : fwd.indices) ++usage[static_cast<std::size_t>(k)];
      if (cfg.reset_dead_codes) {
        const Mat& rows = fwd.continuous.value();
        for (Index r = 0; r < rows.rows(); ++r, ++seen) {
          if (reservoir.size() < reservoir_cap) {
            reservoir.push_back(rows.row(r));
          } else {
            const std::size_t j = code_rng() % (seen + 1);
            if (j < reservoir_cap) reservoir[j] = rows.row(r);
          }
        }
      }
    }
    const double n = static_cast<double>(corpus.size());
    stats.total /= n;
    stats.reconstruction /= n;
    stats.quantization /= n;
    for (int u : usage) stats.codes_used += u > 0 ? 1 : 0;

    if (cfg.reset_dead_codes && !reservoir.empty()) {
      auto& book = model.codebook_var().mutable_value();
      for (std::size_t k = 0; k < usage.size(); ++k) {
        if (usage[k] == 0) book.row(static_cast<Index>(k)) = reservoir[code_rng() % reservoir.size()];
      }
    }
    result.curve.push_back(stats);
    if (progress) progress(stats);
  }
  return result;
}

inline constexpr const char* kStage1Kind = "stage1";

inline void save_stage1(const std::string& path, const MotionAutoencoder& model) {
  nn::CheckpointHeader h;
  h.kind = kStage1Kind;
  h.meta = Json{{"config", to_json(model.config())}};
  h.config_hash = nn::config_hash(h.meta["config"]);
  h.seed = model.config().seed;
  h.pyramid_hash = mesh::pyramid_hash(model.pyramid());
  nn::save_checkpoint(path, h, model.parameters());
}

/// Loads a Stage-1 checkpoint; the pyramid must be the one it was trained on.
inline MotionAutoencoder load_stage1(const std::string& path, mesh::MeshPyramid pyramid) {
  auto r = io::Reader::from_file(path);
  auto h = nn::read_checkpoint_header(r, kStage1Kind);
  if (h.pyramid_hash != mesh::pyramid_hash(pyramid)) {
    throw IoError(path + ": checkpoint was trained on a different mesh pyramid (" + hex64(h.pyramid_hash) + " vs " +
                  hex64(mesh::pyramid_hash(pyramid)) + ")");
  }
  MotionAutoencoder model(std::move(pyramid), stage1_config_from_json(h.meta.at("config")));
  nn::finish_tensors(r, model.parameters());
  return model;
}

}  // namespace qstd::autoencoder
