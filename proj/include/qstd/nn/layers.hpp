// Layers as small structs holding parameter handles registered in a store.
#pragma once

#include "qstd/nn/parameters.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace qstd::nn {

using ad::Var;

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out
  bool has_bias = true;

  static Linear create(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
                       bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = store.add(name + ".weight", rand_uniform(in, out, -bound, bound, rng));
    l.has_bias = with_bias;
    if (with_bias) l.bias = store.add(name + ".bias", Mat::Zero(1, out), false);
    return l;
  }

  Var operator()(const Var& x) const {
    require_shape(x.cols() == weight.rows(), "linear: input has " + std::to_string(x.cols()) +
                                                 " features, weight expects " + std::to_string(weight.rows()));
    Var y = ad::matmul(x, weight);
    return has_bias ? ad::add_row(y, bias) : y;
  }
};

struct LayerNorm {
  Var gain;
  Var shift;

  static LayerNorm create(ParameterStore& store, const std::string& name, Index dim) {
    LayerNorm n;
    n.gain = store.add(name + ".gain", Mat::Ones(1, dim), false);
    n.shift = store.add(name + ".shift", Mat::Zero(1, dim), false);
    return n;
  }
  Var operator()(const Var& x) const { return ad::layer_norm_rows(x, gain, shift); }
};

struct FeedForward {
  Linear in, out;

  static FeedForward create(ParameterStore& store, const std::string& name, Index dim, Index hidden, Rng& rng) {
    return {Linear::create(store, name + ".in", dim, hidden, rng), Linear::create(store, name + ".out", hidden, dim, rng)};
  }
  Var operator()(const Var& x) const { return out(ad::gelu(in(x))); }
};

inline double neg_inf() { return -std::numeric_limits<double>::infinity(); }

/// Additive mask allowing key j for query i only when j <= i.
inline Mat causal_mask(Index t) {
  Mat m = Mat::Zero(t, t);
  for (Index i = 0; i < t; ++i) {
    for (Index j = i + 1; j < t; ++j) m(i, j) = neg_inf();
  }
  return m;
}

/// Additive mask allowing query i to see key i only.
inline Mat alignment_mask(Index t) {
  Mat m = Mat::Constant(t, t, neg_inf());
  m.diagonal().setZero();
  return m;
}

/// Causal mask plus a per-head linear recency penalty
///   bias(i, j) = -slope_h * floor((i - j) / period),  j <= i,
/// with geometric slopes 2^(-8(h+1)/heads).
inline std::vector<Mat> biased_causal_masks(Index t, int heads, int period) {
  std::vector<Mat> out;
  for (int h = 0; h < heads; ++h) {
    const double slope = std::pow(2.0, -8.0 * (h + 1) / heads);
    Mat m = causal_mask(t);
    for (Index i = 0; i < t; ++i) {
      for (Index j = 0; j <= i; ++j) m(i, j) = -slope * static_cast<double>((i - j) / std::max(1, period));
    }
    out.push_back(std::move(m));
  }
  return out;
}

/// Standard sinusoidal position table (t x dim).
inline Mat sinusoidal_positions(Index t, Index dim) {
  Mat pe(t, dim);
  for (Index p = 0; p < t; ++p) {
    for (Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, Index dim, int heads, Rng& rng) {
    require_shape(heads > 0 && dim % heads == 0, "attention: model dim must divide evenly into heads");
    MultiHeadAttention a;
    a.q = Linear::create(store, name + ".q", dim, dim, rng);
    a.k = Linear::create(store, name + ".k", dim, dim, rng);
    a.v = Linear::create(store, name + ".v", dim, dim, rng);
    a.o = Linear::create(store, name + ".o", dim, dim, rng);
    a.heads = heads;
    return a;
  }

  /// `masks` holds one additive bias per head, a single shared one, or none.
  Var operator()(const Var& query, const Var& keyval, const std::vector<Mat>& masks = {}) const {
    const Index dim = q.weight.cols();
    const Index dh = dim / heads;
    Var qs = q(query), ks = k(keyval), vs = v(keyval);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
      Var qh = ad::slice_cols(qs, h * dh, dh);
      Var kh = ad::slice_cols(ks, h * dh, dh);
      Var vh = ad::slice_cols(vs, h * dh, dh);
      Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
      const Mat* mask = masks.empty() ? nullptr : &masks[masks.size() == 1 ? 0 : static_cast<std::size_t>(h)];
      outs.push_back(ad::matmul(ad::softmax_rows(scores, mask), vh));
    }
    return o(heads == 1 ? outs.front() : ad::concat_cols(outs));
  }
};

/// Pre-norm self-attention block.
struct TransformerLayer {
  LayerNorm norm1, norm2;
  MultiHeadAttention attention;
  FeedForward ffn;

  static TransformerLayer create(ParameterStore& store, const std::string& name, Index dim, int heads, Index hidden,
                                 Rng& rng) {
    TransformerLayer l;
    l.norm1 = LayerNorm::create(store, name + ".norm1", dim);
    l.attention = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
    l.norm2 = LayerNorm::create(store, name + ".norm2", dim);
    l.ffn = FeedForward::create(store, name + ".ffn", dim, hidden, rng);
    return l;
  }

  Var operator()(const Var& x, const std::vector<Mat>& masks = {}) const {
    Var h = norm1(x);
    Var y = x + attention(h, h, masks);
    return y + ffn(norm2(y));
  }
};

}  // namespace qstd::nn
