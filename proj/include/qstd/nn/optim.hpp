// Adam with optional decoupled weight decay, plus a step-halving schedule.
#pragma once

#include "qstd/nn/parameters.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace qstd::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) decay; applied only to entries marked `decay`.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(ParameterStore& params, AdamOptions opts) : params_(params), opts_(opts) {
    for (const auto& e : params_.entries()) {
      m_.push_back(Mat::Zero(e.var.rows(), e.var.cols()));
      v_.push_back(Mat::Zero(e.var.rows(), e.var.cols()));
    }
  }

  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }

  /// Applies one update from the gradients currently stored on the parameters.
  /// Parameters that received no gradient this step are left untouched.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    auto& entries = params_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      if (!e.var.requires_grad() || !e.var.has_grad()) continue;
      const Mat g = e.var.grad();
      auto& p = e.var.mutable_value();
      if (opts_.weight_decay > 0.0 && e.decay) p *= (1.0 - opts_.lr * opts_.weight_decay);
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseProduct(g);
      p.array() -= opts_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opts_.eps);
    }
  }

 private:
  ParameterStore& params_;
  AdamOptions opts_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

/// lr * 0.5^floor(epoch / period); period <= 0 disables halving.
inline double halved_lr(double base, int epoch, int period) {
  if (period <= 0) return base;
  return base * std::pow(0.5, static_cast<double>(epoch / period));
}

}  // namespace qstd::nn
