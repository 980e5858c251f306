// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are pinned below.

#include "qstd/harness/cli.hpp"

#include "../support/gradcheck.hpp"
#include "../support/mesh_fixtures.hpp"
#include "../support/tiny_config.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iterator>
#include <sstream>

#ifndef QSTD_SOURCE_DIR
#define QSTD_SOURCE_DIR "."
#endif

using namespace qstd;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr int kRandomMeshes = 200;
constexpr int kMaxMeshVertices = 200;
constexpr double kRingBudgetSeconds = 60.0;
constexpr int kQuantizerCases = 10000;
constexpr int kMaxCodebook = 64;
constexpr double kQuantizerBudgetSeconds = 30.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kStraightThroughTolerance = 1e-3;
constexpr int kDiffusionDraws = 10000;
constexpr double kMomentMeanTolerance = 0.05;
constexpr double kMomentVarTolerance = 0.1;
constexpr double kAlphaBarCeiling = 1e-3;
constexpr int kCausalConfigs = 50;
constexpr double kCausalTolerance = 1e-6;
constexpr int kOverfitMaxEpochs = 300;
constexpr double kOverfitBudgetSeconds = 600.0;
constexpr double kReconRatio = 0.05;
constexpr double kLipRatio = 0.10;
constexpr double kValidationRatio = 0.5;
constexpr double kLipSyncR = 0.5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qstd_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(std::vector<std::string> args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = harness::run_cli(args, out, e);
  if (err) *err = e.str();
  return code;
}

// ------------------------------------------------------------ mesh rings

/// Oracle for one dilation-1 spiral row: v, then whole BFS rings in depth
/// order, each ring walked per the cycle convention, padding only once the
/// reachable disk is exhausted.
bool spiral_row_ok(const mesh::TriangleMesh& m, const std::vector<int>& depth, int v, const std::vector<int>& row,
                   std::string& why) {
  std::vector<std::set<int>> nb(static_cast<std::size_t>(m.vertex_count()));
  for (const auto& f : m.faces) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) nb[static_cast<std::size_t>(f[static_cast<std::size_t>(i)])].insert(f[static_cast<std::size_t>(j)]);
      }
    }
  }
  if (row.empty() || row[0] != v) return why = "row does not start at its vertex", false;
  std::vector<int> body;
  bool padded = false;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] == mesh::kSpiralPad) {
      padded = true;
    } else if (padded) {
      return why = "entry after padding", false;
    } else {
      body.push_back(row[i]);
    }
  }
  std::size_t i = 0;
  int last_depth = 0;
  while (i < body.size()) {
    const int d = depth[static_cast<std::size_t>(body[i])];
    if (d != last_depth + 1) return why = "ring skipped or repeated", false;
    auto ring = qstd::testing::depth_class(depth, d);
    std::size_t j = i;
    while (j < body.size() && depth[static_cast<std::size_t>(body[j])] == d) ++j;
    std::vector<int> seg(body.begin() + static_cast<long>(i), body.begin() + static_cast<long>(j));
    if (j < body.size() && seg.size() != ring.size()) return why = "ring incomplete before the next", false;
    std::set<int> ring_set(ring.begin(), ring.end());
    if (std::set<int>(seg.begin(), seg.end()).size() != seg.size()) return why = "duplicate entry", false;
    // Is the ring a single simple cycle?
    bool cycle = ring.size() >= 3;
    std::map<int, std::vector<int>> local;
    for (int u : ring) {
      for (int w : nb[static_cast<std::size_t>(u)]) {
        if (ring_set.count(w)) local[u].push_back(w);
      }
      cycle = cycle && local[u].size() == 2;
    }
    if (cycle) {
      std::set<int> walked{ring.front()};
      int prev = ring.front(), cur = local[ring.front()][0];
      while (!walked.count(cur)) {
        walked.insert(cur);
        const auto& n = local[cur];
        const int next = n[0] == prev ? n[1] : n[0];
        prev = cur;
        cur = next;
      }
      cycle = walked.size() == ring.size();
    }
    if (cycle) {
      const int start = *ring_set.begin();
      if (seg[0] != start) return why = "cycle walk does not start at the smallest vertex", false;
      if (seg.size() > 1) {
        const auto& n = local[start];
        if (seg[1] != std::min(n[0], n[1])) return why = "cycle walk starts the wrong way", false;
      }
      for (std::size_t k = 0; k + 1 < seg.size(); ++k) {
        if (!nb[static_cast<std::size_t>(seg[k])].count(seg[k + 1])) return why = "cycle walk not contiguous", false;
      }
    } else {
      std::vector<int> sorted_prefix(ring.begin(), ring.begin() + static_cast<long>(seg.size()));
      if (seg != sorted_prefix) return why = "non-cycle ring not in ascending order", false;
    }
    last_depth = d;
    i = j;
  }
  if (padded) {
    std::size_t reachable = 0;
    for (int x : depth) reachable += x >= 0;
    if (body.size() + 1 != reachable) return why = "padding before the disk was exhausted", false;
  }
  return true;
}

Outcome spiral_ring_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  long checks = 0;
  for (int trial = 0; trial < kRandomMeshes; ++trial) {
    const auto m = qstd::testing::random_mesh(rng, kMaxMeshVertices);
    const auto adj = mesh::build_adjacency(m);
    const int kernel = 4 + trial % 20;
    const auto table = mesh::build_spiral_table(m, kernel, 1);
    for (int v = 0; v < m.vertex_count(); ++v) {
      const auto depth = qstd::testing::bfs_depths(m, v);
      const int max_depth = *std::max_element(depth.begin(), depth.end());
      for (int k = 0; k <= max_depth + 1; ++k) {
        if (mesh::k_ring(adj, v, k) != qstd::testing::depth_class(depth, k) ||
            mesh::k_disk(adj, v, k) != qstd::testing::depth_ball(depth, k)) {
          return {false, fmt("mesh %g vertex %g k %g: ring/disk differs from BFS", trial, v, k)};
        }
        ++checks;
      }
      std::string why;
      if (!spiral_row_ok(m, depth, v, table.row(v), why)) {
        return {false, fmt("mesh %g vertex %g: ", trial, v) + why};
      }
    }
  }
  const double secs = seconds_since(t0);
  return {secs < kRingBudgetSeconds,
          fmt("%g meshes, %g ring/disk checks, %.1f s", kRandomMeshes, static_cast<double>(checks), secs)};
}

// ------------------------------------------------------------ quantizer

int brute_nearest(const RowVec& z, const Mat& book) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < book.rows(); ++k) {
    double d = 0.0;
    for (Index c = 0; c < book.cols(); ++c) d += (z(c) - book(k, c)) * (z(c) - book(k, c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Outcome quantizer_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  std::uniform_int_distribution<int> kdist(1, kMaxCodebook), cdist(1, 8), tdist(1, 6), hdist(1, 4), grid(-2, 2);
  int ties = 0;
  for (int i = 0; i < kQuantizerCases; ++i) {
    const int k = kdist(rng), c = cdist(rng), t = tdist(rng), h = hdist(rng);
    const bool on_grid = i % 3 == 0;  // small integer grid forces many exact ties
    auto draw = [&](Index rows) {
      Mat m(rows, c);
      for (Index j = 0; j < m.size(); ++j) m.data()[j] = on_grid ? grid(rng) : standard_normal(rng);
      return m;
    };
    autoencoder::Codebook book{draw(k)};
    autoencoder::LatentSequence z;
    z.tokens = h;
    z.channels = c;
    const Mat tokens = draw(static_cast<Index>(t) * h);
    z.data = Eigen::Map<const Mat>(tokens.data(), t, static_cast<Index>(h) * c);
    const auto q = autoencoder::quantize(z, book);
    const Mat rows = z.token_rows();
    const Mat qrows = q.token_rows();
    for (Index r = 0; r < rows.rows(); ++r) {
      const int want = brute_nearest(rows.row(r), book.entries);
      if (q.indices[static_cast<std::size_t>(r)] != want) {
        return {false, fmt("case %g row %g: index %g", i, static_cast<double>(r), q.indices[static_cast<std::size_t>(r)])};
      }
      if (qrows.row(r) != book.entries.row(want)) return {false, fmt("case %g row %g: vector not the code", i, r)};
      for (Index o = want + 1; o < book.entries.rows(); ++o) {
        if ((rows.row(r) - book.entries.row(o)).squaredNorm() == (rows.row(r) - book.entries.row(want)).squaredNorm()) {
          ++ties;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {secs < kQuantizerBudgetSeconds, fmt("%g cases exact, %g exact ties resolved to the lower index, %.1f s", kQuantizerCases, ties, secs)};
}

// ------------------------------------------------------------ gradients

Outcome gradient_checks() {
  Rng rng(7);
  double spiral = 0.0, rec = 0.0, vel = 0.0, st = 0.0;
  std::mt19937_64 mrng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = qstd::testing::random_mesh(mrng, 40);
    const auto table = mesh::build_spiral_table(m, 7, 1 + trial % 2);
    const Index v = m.vertex_count();
    ad::Var x(randn(v, 3, rng), true), w(randn(21, 4, rng), true), b(randn(1, 4, rng), true);
    ad::Var probe = ad::constant(randn(v, 4, rng));
    auto loss = [&] {
      ad::Var y = autoencoder::spiral_conv(x, table, w, b);
      return ad::sum(ad::mul(y, y)) + ad::sum(ad::mul(y, probe));
    };
    spiral = std::max(spiral, qstd::testing::gradcheck(loss, {x, w, b}));
  }
  for (int trial = 0; trial < 10; ++trial) {
    Mat target = randn(8, 5, rng), pred;
    for (bool clear = false; !clear;) {
      pred = target + 1.5 * randn(8, 5, rng);
      const Mat e = pred - target;
      const Mat de = e.bottomRows(7) - e.topRows(7);
      clear = ((e.cwiseAbs().array() - 1.0).abs() > 1e-3).all() && ((de.cwiseAbs().array() - 1.0).abs() > 1e-3).all();
    }
    ad::Var p(pred, true), g(target, true);
    diffusion::Stage2Config only_rec, only_vel;
    only_rec.lambda_vel = 0.0;
    only_vel.lambda_rec = 0.0;
    rec = std::max(rec, qstd::testing::gradcheck([&] { return diffusion::stage2_loss(p, g, only_rec).total; }, {p, g}));
    vel = std::max(vel, qstd::testing::gradcheck([&] { return diffusion::stage2_loss(p, g, only_vel).total; }, {p, g}));
  }
  for (int trial = 0; trial < 10; ++trial) {
    const Mat book = randn(16, 3, rng), zhat_value = randn(6, 3, rng);
    const auto idx = autoencoder::nearest_codes(zhat_value, book);
    Mat zq(6, 3);
    for (Index i = 0; i < 6; ++i) zq.row(i) = book.row(idx[static_cast<std::size_t>(i)]);
    const Mat pw = randn(6, 3, rng);
    auto probe = [&](const ad::Var& x) {
      ad::Var p = ad::constant(pw);
      return ad::sum(ad::mul(ad::mul(x, x), p)) + ad::sum(ad::mul(x, p));
    };
    ad::Var zhat(zhat_value, true);
    ad::backward(probe(ad::straight_through(zhat, zq)));
    ad::Var at(zq, true);
    Mat numeric(6, 3);
    const double h = 1e-4;
    for (Index i = 0; i < zq.size(); ++i) {
      double& x = at.mutable_value().data()[i];
      const double keep = x;
      x = keep + h;
      const double up = probe(at).scalar();
      x = keep - h;
      const double down = probe(at).scalar();
      x = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    st = std::max(st, (zhat.grad() - numeric).norm() / numeric.norm());
  }
  const bool ok = spiral < kGradTolerance && rec < kGradTolerance && vel < kGradTolerance && st < kStraightThroughTolerance;
  return {ok, fmt("max rel err spiral %.2e, huber rec %.2e, huber vel %.2e", spiral, rec, vel) +
                  fmt(", straight-through %.2e", st)};
}

// ------------------------------------------------------------ diffusion

Outcome diffusion_moments() {
  const auto s = diffusion::make_noise_schedule(50, "linear");
  Rng rng(5);
  const Mat z0 = randn(4, 8, rng) * 2.0;
  Mat sum = Mat::Zero(4, 8), sq = Mat::Zero(4, 8);
  for (int i = 0; i < kDiffusionDraws; ++i) {
    const Mat z = diffusion::forward_diffuse(z0, 50, s, rng).noisy;
    sum += z;
    sq += z.cwiseProduct(z);
  }
  const Mat mean = sum / kDiffusionDraws;
  const Mat var = sq / kDiffusionDraws - mean.cwiseProduct(mean);
  const double worst_mean = mean.cwiseAbs().maxCoeff();
  const double worst_var = (var.array() - 1.0).abs().maxCoeff();
  const double ab = s.alpha_bar_at(50);
  return {worst_mean < kMomentMeanTolerance && worst_var < kMomentVarTolerance && ab < kAlphaBarCeiling,
          fmt("max |mean| %.4f, max |var-1| %.4f, alpha_bar_N %.2e", worst_mean, worst_var, ab)};
}

// ------------------------------------------------------------ causality

Outcome causality() {
  Rng rng(31);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  double worst = 0.0;
  int cuts = 0;
  for (int trial = 0; trial < kCausalConfigs; ++trial) {
    diffusion::Stage2Config cfg;
    cfg.heads = pick(1, 4);
    cfg.model_dim = cfg.heads * pick(1, 4);
    cfg.layers = pick(1, 3);
    cfg.audio_kernel = pick(1, 6);
    cfg.bias_period = pick(1, 3);
    cfg.steps = pick(2, 50);
    cfg.seed = static_cast<std::uint64_t>(trial);
    const Index latent = pick(1, 8), channels = pick(1, 6);
    const int subjects = pick(1, 3);
    diffusion::Denoiser d(cfg, latent, channels, subjects);
    const Index t = pick(2, 16);
    const Mat z = randn(t, latent, rng), audio = randn(t, channels, rng);
    const RowVec style = diffusion::one_hot_style(pick(0, subjects - 1), subjects);
    const int step = pick(1, cfg.steps);
    const Mat base = d.predict(z, {audio, style, step});
    for (Index cut = 0; cut + 1 < t; ++cut) {
      Mat za = z, aa = audio;
      za.bottomRows(t - cut - 1) += 3.0 * randn(t - cut - 1, latent, rng);
      aa.bottomRows(t - cut - 1) += 3.0 * randn(t - cut - 1, channels, rng);
      const Mat by_latent = d.predict(za, {audio, style, step});
      const Mat by_audio = d.predict(z, {aa, style, step});
      worst = std::max({worst, (by_latent.topRows(cut + 1) - base.topRows(cut + 1)).cwiseAbs().maxCoeff(),
                        (by_audio.topRows(cut + 1) - base.topRows(cut + 1)).cwiseAbs().maxCoeff()});
      ++cuts;
    }
  }
  return {worst <= kCausalTolerance, fmt("%g configs, %g cut points, max leak %.2e", kCausalConfigs, cuts, worst)};
}

// ------------------------------------------------------------ toy training

struct Toy {
  fs::path dir;
  std::string config;
  double stage1_seconds = 0.0;
  bool ok = false;
  std::string error;
};

/// Runs synth-corpus .. train-stage2 on the toy config once for the
/// training-dependent criteria.
const Toy& toy() {
  static Toy t = [] {
    Toy r;
    r.dir = scratch("toy");
    r.config = std::string(QSTD_SOURCE_DIR) + "/configs/toy.json";
    for (const char* cmd : {"synth-corpus", "build-pyramid", "train-stage1", "train-stage2"}) {
      const auto t0 = std::chrono::steady_clock::now();
      std::string err;
      if (cli({cmd, "--config", r.config, "--out", r.dir.string()}, &err) != 0) {
        r.error = std::string(cmd) + ": " + err;
        return r;
      }
      if (std::string(cmd) == "train-stage1") r.stage1_seconds = seconds_since(t0);
    }
    r.ok = true;
    return r;
  }();
  return t;
}

struct ToyModels {
  data::Corpus corpus;
  autoencoder::MotionAutoencoder stage1;
  diffusion::Stage2Model stage2;
  harness::ExperimentConfig cfg;
};

ToyModels load_toy() {
  const auto& t = toy();
  if (!t.ok) throw Error(t.error);
  auto cfg = harness::load_experiment_config(t.config);
  auto corpus = data::load_corpus((t.dir / "corpus" / "manifest.txt").string());
  auto stage1 = autoencoder::load_stage1((t.dir / "stage1.ckpt").string(), mesh::load_pyramid((t.dir / "pyramid.qpyr").string()));
  auto stage2 = diffusion::load_stage2((t.dir / "stage2.ckpt").string());
  return {std::move(corpus), std::move(stage1), std::move(stage2), std::move(cfg)};
}

Outcome stage1_overfit() {
  const auto m = load_toy();
  const auto& c = m.corpus;
  double l1 = 0.0, abs_motion = 0.0, lve = 0.0, lip_amp = 0.0;
  for (const auto& s : c.samples) {
    const auto recon = m.stage1.decode(m.stage1.quantize(m.stage1.encode(s.motion)));
    l1 += (recon.data - s.motion.data).cwiseAbs().sum();
    abs_motion += s.motion.data.cwiseAbs().sum();
    lve += eval::lip_vertex_error(recon, s.motion, c.lip);
    lip_amp += eval::lip_vertex_error(s.motion, autoencoder::MotionSequence::zeros(s.motion.frames(), s.motion.vertices()), c.lip);
  }
  const double recon_ratio = l1 / abs_motion, lip_ratio = lve / lip_amp;
  const bool shape = c.samples.size() == 4 && c.mesh.vertex_count() == 162 && c.samples[0].motion.frames() == 30;
  const bool ok = shape && m.cfg.stage1.epochs <= kOverfitMaxEpochs && toy().stage1_seconds < kOverfitBudgetSeconds &&
                  recon_ratio < kReconRatio && lip_ratio < kLipRatio;
  return {ok, fmt("recon L1 %.2f%% of mean |motion|, lip LVE %.2f%% of lip amplitude", 100 * recon_ratio, 100 * lip_ratio) +
                  fmt(", %g epochs in %.0f s", m.cfg.stage1.epochs, toy().stage1_seconds)};
}

std::vector<diffusion::Stage2Example> toy_examples(const ToyModels& m) {
  std::vector<diffusion::Stage2Example> ex;
  const int s = static_cast<int>(m.corpus.subjects.size());
  for (const auto& smp : m.corpus.samples) {
    ex.push_back(diffusion::make_example(m.stage1, smp.motion, smp.audio.data, diffusion::one_hot_style(smp.subject, s)));
  }
  return ex;
}

Outcome stage2_signal() {
  const auto m = load_toy();
  const auto ex = toy_examples(m);
  const auto untrained = diffusion::make_stage2_model(m.cfg.stage2, ex.front().target.cols(), ex.front().audio.cols(),
                                                      m.corpus.subjects, m.stage2.pyramid_hash, m.stage2.latent_scale);
  // Held-out noise draws on the training clips (the toy corpus has no val split).
  const double base = diffusion::evaluate_stage2(untrained, ex, 12345);
  const double trained = diffusion::evaluate_stage2(m.stage2, ex, 12345);
  double worst_r = 1.0;
  const int s = static_cast<int>(m.corpus.subjects.size());
  for (const auto& smp : m.corpus.samples) {
    const auto a = diffusion::generate_animation(smp.audio, diffusion::one_hot_style(smp.subject, s),
                                                 m.corpus.template_for(smp), m.stage1, m.stage2, 1);
    const Eigen::VectorXd env = diffusion::align_audio_to_motion(smp.envelope.data, a.motion.frames()).col(0);
    worst_r = std::min(worst_r, eval::pearson(eval::region_envelope(a.motion, m.corpus.lip), env));
  }
  return {trained <= kValidationRatio * base && worst_r > kLipSyncR,
          fmt("validation Huber %.4f vs untrained %.4f (%.1f%%)", trained, base, 100 * trained / base) +
              fmt(", min lip-envelope r %.3f", worst_r)};
}

Outcome diversity_pattern() {
  const auto m = load_toy();
  const int s = static_cast<int>(m.corpus.subjects.size());
  double min_stochastic = std::numeric_limits<double>::infinity(), max_deterministic = 0.0;
  for (const auto& smp : m.corpus.samples) {
    const auto style = diffusion::one_hot_style(smp.subject, s);
    const auto& face = m.corpus.template_for(smp);
    std::vector<autoencoder::MotionSequence> free, fixed;
    diffusion::AnimationOptions det;
    det.sampler.deterministic = true;
    Rng noise(77);
    det.sampler.initial_noise = randn(diffusion::motion_frames_for(smp.audio, 25.0), m.stage2.denoiser.latent_dim(), noise);
    for (std::uint64_t seed : {1u, 2u}) {
      free.push_back(diffusion::generate_animation(smp.audio, style, face, m.stage1, m.stage2, seed).motion);
      fixed.push_back(diffusion::generate_animation(smp.audio, style, face, m.stage1, m.stage2, seed, det).motion);
    }
    min_stochastic = std::min(min_stochastic, eval::diversity(free));
    max_deterministic = std::max(max_deterministic, eval::diversity(fixed));
  }
  return {min_stochastic > 0.0 && max_deterministic == 0.0,
          fmt("stochastic diversity >= %.3e, deterministic diversity %g", min_stochastic, max_deterministic)};
}

// ------------------------------------------------------------ metrics

Outcome metric_fixtures() {
  using eval::RegionMask;
  using MS = autoencoder::MotionSequence;
  std::vector<std::string> bad;
  auto gt = MS::zeros(1, 3), pred = gt;
  pred.data(0, 0) = 0.3;
  pred.data(0, 4) = 0.4;
  if (eval::lip_vertex_error(pred, gt, RegionMask{{0, 1}, "lip"}) != 0.4) bad.push_back("LVE 0.4");
  if (eval::lip_vertex_error(gt, gt, RegionMask{{0, 1}, "lip"}) != 0.0) bad.push_back("LVE 0");

  auto g2 = MS::zeros(2, 1), p2 = MS::zeros(2, 1);
  g2.data(1, 0) = 2.0;
  p2.data.setConstant(0.5);
  if (eval::facial_dynamics_deviation(p2, g2, RegionMask{{0}, "upper_face"}) != -1.0) bad.push_back("FDD -1");

  auto a = MS::zeros(3, 4), b = a;
  const double d = 0.75;
  for (Index v = 0; v < 4; ++v) b.data.col(3 * v + 1).setConstant(d);
  if (eval::diversity({a, b}) != d) bad.push_back("Diversity offset");
  if (eval::diversity({a, a}) != 0.0) bad.push_back("Diversity 0");

  const auto face = mesh::icosphere(1, 1.0);
  auto moving = MS::zeros(4, face.vertex_count());
  moving.data(1, 3 * 5 + 2) = 1.0;
  moving.data(3, 3 * 5 + 2) = 1.0;
  const auto h = eval::motion_std_heatmap(moving, face, 32);
  for (Index v = 0; v < face.vertex_count(); ++v) {
    if (h.values(v) != (v == 5 ? 0.5 : 0.0)) {
      bad.push_back("heatmap");
      break;
    }
  }
  std::string detail = "LVE 0.4, FDD -1, Diversity 0.75, heatmap 0.5 exact";
  if (!bad.empty()) {
    detail = "mismatch:";
    for (const auto& x : bad) detail += " " + x;
  }
  return {bad.empty(), detail};
}

// ------------------------------------------------------------ CLI determinism

Outcome cli_determinism() {
  const char* commands[] = {"synth-corpus", "build-pyramid", "train-stage1", "train-stage2",
                            "sample",       "evaluate",      "heatmap",      "report"};
  fs::path dirs[2] = {scratch("det_a"), scratch("det_b")};
  for (auto& dir : dirs) {
    auto j = qstd::testing::tiny_config_json(dir.string(), 3);
    j["stage1"]["epochs"] = 5;
    j["stage2"]["epochs"] = 5;
    const auto cfg = qstd::testing::write_config(j, dir / "config.json");
    for (const char* cmd : commands) {
      std::string err;
      const auto args = std::string(cmd) == "report"
                            ? std::vector<std::string>{cmd, (dir / "records").string(), "--out", dir.string()}
                            : std::vector<std::string>{cmd, "--config", cfg};
      if (cli(args, &err) != 0) return {false, std::string(cmd) + " failed: " + err};
    }
  }
  int files = 0;
  for (const char* cmd : commands) {
    const auto ra = harness::read_record((dirs[0] / "records" / (std::string(cmd) + ".json")).string());
    const auto rb = harness::read_record((dirs[1] / "records" / (std::string(cmd) + ".json")).string());
    if (ra.metrics != rb.metrics || ra.curves != rb.curves || ra.artifacts != rb.artifacts) {
      return {false, std::string(cmd) + ": record metrics differ"};
    }
    for (const auto& art : ra.artifacts) {
      if (slurp(dirs[0] / art) != slurp(dirs[1] / art)) return {false, std::string(cmd) + ": " + art + " differs"};
      ++files;
    }
  }
  return {true, fmt("8 subcommands, %g artifacts bit-identical across two runs", files)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"spiral/ring oracle", spiral_ring_oracle},
      {"quantizer oracle", quantizer_oracle},
      {"gradient checks", gradient_checks},
      {"diffusion moments", diffusion_moments},
      {"causality/alignment", causality},
      {"stage-1 overfit", stage1_overfit},
      {"stage-2 learning signal", stage2_signal},
      {"diversity positivity", diversity_pattern},
      {"metric fixtures", metric_fixtures},
      {"cli determinism", cli_determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %-24s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
