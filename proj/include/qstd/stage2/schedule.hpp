// Noise schedules, forward noising and the clean-sample posterior.
#pragma once

#include "qstd/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace qstd::diffusion {

/// betas[n-1] = beta_n for n = 1..N; alpha_bar[n] with alpha_bar[0] = 1.
struct NoiseSchedule {
  std::string kind;
  std::vector<double> betas;
  std::vector<double> alpha_bar;

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int n) const { return betas[static_cast<std::size_t>(n - 1)]; }
  double alpha(int n) const { return 1.0 - beta(n); }
  double alpha_bar_at(int n) const { return alpha_bar[static_cast<std::size_t>(n)]; }
};

/// Builds a schedule from explicit betas (any N >= 1).
inline NoiseSchedule schedule_from_betas(std::vector<double> betas, std::string kind = "custom") {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.kind = std::move(kind);
  s.alpha_bar.push_back(1.0);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta_" + std::to_string(i + 1) + " must lie in (0, 1)");
    if (i > 0 && b < betas[i - 1]) throw ConfigError("betas must be non-decreasing");
    s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
  }
  s.betas = std::move(betas);
  return s;
}

/// Kinds:
///   linear           beta spaced over [1e-4, 0.02] * 1000/N, capped at 0.999
///   linear_unscaled  beta spaced over [1e-4, 0.02]
///   cosine           squared-cosine alpha_bar with offset 0.008, beta capped at 0.999
inline NoiseSchedule make_noise_schedule(int n, const std::string& kind = "linear") {
  if (n < 2) throw ConfigError("noise schedule needs N >= 2, got " + std::to_string(n));
  std::vector<double> betas(static_cast<std::size_t>(n));
  if (kind == "linear" || kind == "linear_unscaled") {
    const double scale = kind == "linear" ? 1000.0 / n : 1.0;
    const double lo = 1e-4 * scale, hi = 0.02 * scale;
    for (int i = 0; i < n; ++i) {
      betas[static_cast<std::size_t>(i)] = std::min(0.999, lo + (hi - lo) * i / (n - 1));
    }
  } else if (kind == "cosine") {
    const double pi = 3.14159265358979323846;
    auto f = [&](int t) {
      const double c = std::cos((static_cast<double>(t) / n + 0.008) / 1.008 * pi / 2);
      return c * c;
    };
    for (int i = 1; i <= n; ++i) betas[static_cast<std::size_t>(i - 1)] = std::min(0.999, 1.0 - f(i) / f(i - 1));
  } else {
    throw ConfigError("unknown noise schedule kind '" + kind + "' (linear, linear_unscaled, cosine)");
  }
  return schedule_from_betas(std::move(betas), kind);
}

inline void check_step(const NoiseSchedule& s, int n) {
  if (n < 1 || n > s.steps()) {
    throw ConfigError("diffusion step " + std::to_string(n) + " outside [1, " + std::to_string(s.steps()) + "]");
  }
}

/// Z^n = sqrt(alpha_bar_n) Z0 + sqrt(1 - alpha_bar_n) eps with the given eps.
inline Mat diffuse_with(const Mat& z0, const Mat& eps, int n, const NoiseSchedule& s) {
  check_step(s, n);
  require_shape(z0.rows() == eps.rows() && z0.cols() == eps.cols(), "forward_diffuse: noise shape mismatch");
  const double ab = s.alpha_bar_at(n);
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

struct Diffused {
  Mat noisy;
  Mat noise;
};

inline Diffused forward_diffuse(const Mat& z0, int n, const NoiseSchedule& s, Rng& rng) {
  check_step(s, n);
  Mat eps = randn(z0.rows(), z0.cols(), rng);
  Mat zn = diffuse_with(z0, eps, n, s);
  return {std::move(zn), std::move(eps)};
}

/// One forward transition Z^{n-1} -> Z^n.
inline Mat forward_step(const Mat& prev, int n, const NoiseSchedule& s, Rng& rng) {
  check_step(s, n);
  return std::sqrt(s.alpha(n)) * prev + std::sqrt(s.beta(n)) * randn(prev.rows(), prev.cols(), rng);
}

/// q(Z^{n-1} | Z^n, Z0) = N(c0 Z0 + cn Z^n, variance).
struct Posterior {
  double c0 = 0.0;
  double cn = 0.0;
  double variance = 0.0;
};

inline Posterior posterior(const NoiseSchedule& s, int n) {
  check_step(s, n);
  const double ab = s.alpha_bar_at(n), ab_prev = s.alpha_bar_at(n - 1);
  Posterior p;
  p.c0 = std::sqrt(ab_prev) * s.beta(n) / (1.0 - ab);
  p.cn = std::sqrt(s.alpha(n)) * (1.0 - ab_prev) / (1.0 - ab);
  p.variance = s.beta(n) * (1.0 - ab_prev) / (1.0 - ab);
  return p;
}

}  // namespace qstd::diffusion
