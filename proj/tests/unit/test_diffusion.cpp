#include "qstd/stage2/train.hpp"

#include "../support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace qstd;
using namespace qstd::diffusion;
using ad::Var;

namespace {

Stage2Config small_config() {
  Stage2Config c;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.steps = 10;
  c.audio_kernel = 3;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  c.seed = 3;
  return c;
}

Denoiser small_denoiser(int subjects = 2) { return Denoiser(small_config(), 6, 4, subjects); }

mesh::MeshPyramid tiny_pyramid() {
  static const mesh::MeshPyramid p = mesh::build_pyramid(mesh::icosphere(1, 10.0), 2, {0.5}, 7, 1);
  return p;
}

autoencoder::Stage1Config tiny_stage1() {
  autoencoder::Stage1Config c;
  c.tokens = 2;
  c.channels = 3;
  c.codebook_size = 8;
  c.block_channels = {4};
  c.transformer_layers = 1;
  c.heads = 2;
  c.decoder_hidden = 8;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST(NoiseSchedule, UnscaledTwoStepClosedForm) {
  auto s = make_noise_schedule(2, "linear_unscaled");
  EXPECT_EQ(s.beta(1), 1e-4);
  EXPECT_EQ(s.beta(2), 0.02);
  EXPECT_EQ(s.alpha_bar_at(2), (1 - 1e-4) * (1 - 0.02));
  EXPECT_EQ(s.alpha_bar_at(0), 1.0);
}

TEST(NoiseSchedule, DefaultInvariants) {
  for (const char* kind : {"linear", "linear_unscaled", "cosine"}) {
    auto s = make_noise_schedule(50, kind);
    EXPECT_EQ(s.alpha_bar_at(0), 1.0);
    for (int n = 1; n <= 50; ++n) {
      EXPECT_GT(s.beta(n), 0.0);
      EXPECT_LT(s.beta(n), 1.0);
      if (n > 1) {
        EXPECT_GE(s.beta(n), s.beta(n - 1));
      }
      EXPECT_LT(s.alpha_bar_at(n), s.alpha_bar_at(n - 1));
    }
  }
  EXPECT_LT(make_noise_schedule(50).alpha_bar_at(50), 1e-3);
  EXPECT_LT(make_noise_schedule(1000).alpha_bar_at(1000), 1e-3);
}

TEST(NoiseSchedule, Errors) {
  EXPECT_THROW(make_noise_schedule(1), ConfigError);
  EXPECT_THROW(make_noise_schedule(10, "quadratic"), ConfigError);
  EXPECT_THROW(schedule_from_betas({0.5, 0.1}), ConfigError);
  EXPECT_THROW(schedule_from_betas({1.0}), ConfigError);
}

TEST(ForwardDiffuse, Examples) {
  auto s = make_noise_schedule(50);
  Rng rng(1);
  Mat z0 = randn(3, 4, rng);
  EXPECT_EQ(diffuse_with(z0, Mat::Zero(3, 4), 10, s), std::sqrt(s.alpha_bar_at(10)) * z0);
  auto d = forward_diffuse(Mat::Zero(3, 4), 7, s, rng);
  EXPECT_EQ(d.noisy, std::sqrt(1 - s.alpha_bar_at(7)) * d.noise);
  EXPECT_THROW(forward_diffuse(z0, 0, s, rng), ConfigError);
  EXPECT_THROW(forward_diffuse(z0, 51, s, rng), ConfigError);
}

TEST(ForwardDiffuse, MarginalConsistency) {
  auto s = make_noise_schedule(20);
  Rng rng(2);
  const int draws = 10000, n = 8;
  const double x0 = 1.5;
  double sum_chain = 0, sq_chain = 0, sum_jump = 0, sq_jump = 0;
  for (int i = 0; i < draws; ++i) {
    Mat z = Mat::Constant(1, 1, x0);
    for (int k = 1; k <= n; ++k) z = forward_step(z, k, s, rng);
    Mat j = forward_diffuse(Mat::Constant(1, 1, x0), n, s, rng).noisy;
    sum_chain += z(0, 0);
    sq_chain += z(0, 0) * z(0, 0);
    sum_jump += j(0, 0);
    sq_jump += j(0, 0) * j(0, 0);
  }
  const double m_chain = sum_chain / draws, m_jump = sum_jump / draws;
  EXPECT_NEAR(m_chain, m_jump, 0.05);
  EXPECT_NEAR(m_jump, std::sqrt(s.alpha_bar_at(n)) * x0, 0.05);
  EXPECT_NEAR(sq_chain / draws - m_chain * m_chain, sq_jump / draws - m_jump * m_jump, 0.05);
}

TEST(AlignAudio, Examples) {
  Rng rng(3);
  Mat a = randn(9, 3, rng);
  EXPECT_EQ(align_audio_to_motion(a, 9), a);
  Mat c = Mat::Constant(7, 2, 0.1);
  for (Index t : {1, 3, 5, 13, 40}) {
    Mat out = align_audio_to_motion(c, t);
    EXPECT_EQ(out, Mat::Constant(t, 2, 0.1)) << t;
  }
  Mat ramp(11, 1);
  for (int i = 0; i < 11; ++i) ramp(i, 0) = i / 10.0;
  Mat r = align_audio_to_motion(ramp, 6);
  for (int t = 0; t < 6; ++t) EXPECT_DOUBLE_EQ(r(t, 0), 0.2 * t);
}

TEST(AudioFeatures, FileRoundTrip) {
  Rng rng(4);
  AudioFeatures a;
  a.data = randn(5, 3, rng).cast<float>().cast<double>();
  a.frame_rate = 50;
  const auto path = (std::filesystem::temp_directory_path() / "qstd_audio_test.qaf").string();
  save_audio_features(path, a);
  EXPECT_EQ(load_audio_features(path), a);
  std::filesystem::remove(path);
}

TEST(Conditions, StreamsFollowInputs) {
  auto d = small_denoiser();
  Rng rng(5);
  Var z(randn(5, 6, rng));
  Mat audio = randn(5, 4, rng);
  auto a = d.encode_conditions(z, audio, one_hot_style(0, 2), 3);
  auto b = d.encode_conditions(z, audio, one_hot_style(1, 2), 3);
  EXPECT_GT((a.query.value() - b.query.value()).norm(), 1e-6);
  EXPECT_EQ(a.keyvalue.value(), b.keyvalue.value());
  auto c = d.encode_conditions(z, audio, one_hot_style(0, 2), 7);
  EXPECT_EQ(a.query.value(), c.query.value());
  EXPECT_GT((a.keyvalue.value() - c.keyvalue.value()).norm(), 1e-6);
  EXPECT_THROW(one_hot_style(2, 2), ConfigError);
  EXPECT_THROW(d.encode_conditions(z, audio, RowVec::Constant(2, 0.7), 3), ConfigError);

  for (auto& e : d.parameters().entries()) {
    if (e.name.rfind("audio_encoder", 0) == 0 || e.name == "step_embedding") e.var.mutable_value().setZero();
  }
  EXPECT_TRUE(d.encode_conditions(z, audio, one_hot_style(0, 2), 3).keyvalue.value().isZero(0.0));
}

TEST(Denoiser, CausalAndAligned) {
  Rng rng(6);
  std::uniform_int_distribution<int> tdist(2, 12);
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = small_config();
    cfg.seed = static_cast<std::uint64_t>(trial);
    Denoiser d(cfg, 6, 4, 2);
    const Index t = tdist(rng);
    Mat z = randn(t, 6, rng), audio = randn(t, 4, rng);
    RowVec style = RowVec::Constant(2, 0.5);
    const int step = 1 + trial % 10;
    Mat base = d.predict(z, {audio, style, step});
    ASSERT_EQ(base.rows(), t);
    ASSERT_EQ(base.cols(), 6);
    const Index cut = std::uniform_int_distribution<Index>(0, t - 2)(rng);
    Mat z2 = z, a2 = audio;
    z2.bottomRows(t - cut - 1) += randn(t - cut - 1, 6, rng);
    a2.bottomRows(t - cut - 1) += randn(t - cut - 1, 4, rng);
    Mat moved = d.predict(z2, {a2, style, step});
    EXPECT_LE((moved.topRows(cut + 1) - base.topRows(cut + 1)).cwiseAbs().maxCoeff(), 1e-6);
    Mat a3 = audio;
    a3.row(cut).array() += 1.0;
    Mat probe = d.predict(z, {a3, style, step});
    EXPECT_GT((probe.row(cut) - base.row(cut)).norm(), 1e-9);
    EXPECT_EQ(d.predict(z, {audio, style, step}), base);
  }
}

TEST(Denoiser, AlignmentMaskStrict) {
  auto cfg = small_config();
  cfg.layers = 1;
  Denoiser d(cfg, 6, 4, 2);
  Rng rng(7);
  Var x(randn(6, 8, rng));
  Mat kv = randn(6, 8, rng);
  Mat base = d.cross_attend(0, x, Var(kv)).value();
  for (Index t = 0; t < 6; ++t) {
    for (Index other = 0; other < 6; ++other) {
      if (other == t) continue;
      Mat kv2 = kv;
      kv2.row(other).setZero();
      Mat out = d.cross_attend(0, x, Var(kv2)).value();
      EXPECT_EQ(out.row(t), base.row(t));
    }
  }
}

TEST(Stage2Loss, Examples) {
  Stage2Config cfg;
  Rng rng(8);
  Var z(Mat((randn(5, 3, rng) * 64).array().round() / 64));
  EXPECT_EQ(stage2_loss(z, z, cfg).total.scalar(), 0.0);
  Var shifted(z.value().rowwise() + RowVec::Constant(3, 0.25));
  auto l = stage2_loss(shifted, z, cfg);
  EXPECT_EQ(l.velocity, 0.0);
  EXPECT_NEAR(l.reconstruction, 0.5 * 0.25 * 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(ad::huber(0.2, 1.0), 0.02);
  EXPECT_DOUBLE_EQ(ad::huber(3.0, 1.0), 2.5);
  Var one(randn(1, 3, rng));
  EXPECT_EQ(stage2_loss(one, Var(Mat::Zero(1, 3)), cfg).velocity, 0.0);
}

TEST(Stage2Loss, VelocityNullityRandomOffsets) {
  Stage2Config cfg;
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    // Dyadic values so b - a is the offset exactly.
    Mat a = (randn(6, 4, rng) * 64).array().round() / 64;
    RowVec c = (randn(1, 4, rng) * 64).array().round() / 64;
    Mat b = a.rowwise() + c;
    EXPECT_EQ(stage2_loss(Var(b), Var(a), cfg).velocity, 0.0);
  }
}

TEST(Stage2Loss, HuberGradientCheck) {
  Stage2Config cfg;
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    Mat target = randn(6, 4, rng);
    Mat pred = target + 1.5 * randn(6, 4, rng);
    // Keep every residual and frame difference away from the kink at |e| = delta.
    bool clear = false;
    while (!clear) {
      pred = target + 1.5 * randn(6, 4, rng);
      Mat e = pred - target;
      Mat de = e.bottomRows(5) - e.topRows(5);
      clear = ((e.cwiseAbs().array() - 1.0).abs() > 1e-3).all() && ((de.cwiseAbs().array() - 1.0).abs() > 1e-3).all();
    }
    Var p(pred, true);
    Var tgt(target, true);
    auto loss = [&] { return stage2_loss(p, tgt, cfg).total; };
    EXPECT_LT(qstd::testing::gradcheck(loss, {p, tgt}), 1e-4);
  }
}

TEST(Sampler, Reproducibility) {
  auto d = small_denoiser();
  auto s = make_noise_schedule(10);
  Rng rng(11);
  Mat audio = randn(5, 4, rng);
  RowVec style = one_hot_style(1, 2);
  Rng a(1), b(1), c(2);
  Mat x = sample_normalized(d, s, audio, style, a);
  EXPECT_EQ(x, sample_normalized(d, s, audio, style, b));
  EXPECT_GT((x - sample_normalized(d, s, audio, style, c)).norm(), 1e-9);

  SampleOptions det;
  det.deterministic = true;
  det.initial_noise = randn(5, 6, rng);
  Rng d1(1), d2(2);
  EXPECT_EQ(sample_normalized(d, s, audio, style, d1, det), sample_normalized(d, s, audio, style, d2, det));
}

TEST(Sampler, SingleStepIsOneDenoiserCall) {
  auto cfg = small_config();
  cfg.steps = 2;
  Denoiser d(cfg, 6, 4, 2);
  auto s = schedule_from_betas({0.5});
  Rng rng(12);
  Mat audio = randn(4, 4, rng);
  SampleOptions opts;
  opts.initial_noise = randn(4, 6, rng);
  RowVec style = one_hot_style(0, 2);
  Rng r(3);
  EXPECT_EQ(sample_normalized(d, s, audio, style, r, opts), d.predict(*opts.initial_noise, {audio, style, 1}));
}

namespace {

struct Fixture {
  autoencoder::MotionAutoencoder stage1{tiny_pyramid(), tiny_stage1()};
  std::vector<Stage2Example> examples;
  Fixture() {
    Rng rng(13);
    for (int i = 0; i < 3; ++i) {
      autoencoder::MotionSequence m{randn(4 + i, 42 * 3, rng), 25.0};
      examples.push_back(make_example(stage1, m, randn(8 + 2 * i, 4, rng), one_hot_style(i % 2, 2)));
    }
  }
};

}  // namespace

TEST(TrainStage2, DeterministicAndFrozenStage1) {
  Fixture f;
  const auto before = f.stage1.parameters().hash();
  const auto ph = mesh::pyramid_hash(tiny_pyramid());
  auto a = train_stage2(f.examples, 4, {"s0", "s1"}, ph, small_config());
  auto b = train_stage2(f.examples, 4, {"s0", "s1"}, ph, small_config());
  EXPECT_EQ(f.stage1.parameters().hash(), before);
  ASSERT_EQ(a.curve.size(), 2u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].total, b.curve[i].total);
  EXPECT_EQ(a.model.denoiser.parameters().hash(), b.model.denoiser.parameters().hash());
  EXPECT_EQ(evaluate_stage2(a.model, f.examples, 1), evaluate_stage2(b.model, f.examples, 1));
  for (const auto& e : f.examples) {
    for (Index r = 0; r < e.target.rows(); ++r) {
      bool found = false;
      for (int k = 0; k < 8 && !found; ++k) {
        found = e.target.row(r).head(3) == f.stage1.codebook().entries.row(k);
      }
      EXPECT_TRUE(found);
    }
  }
}

TEST(TrainStage2, CheckpointRoundTrip) {
  Fixture f;
  auto r = train_stage2(f.examples, 4, {"s0", "s1"}, mesh::pyramid_hash(tiny_pyramid()), small_config());
  const auto path = (std::filesystem::temp_directory_path() / "qstd_stage2_test.ckpt").string();
  save_stage2(path, r.model);
  auto loaded = load_stage2(path);
  r.model.denoiser.parameters().round_to_float();
  EXPECT_EQ(loaded.denoiser.parameters().hash(), r.model.denoiser.parameters().hash());
  EXPECT_EQ(loaded.schedule.betas, r.model.schedule.betas);
  EXPECT_EQ(loaded.schedule.alpha_bar, r.model.schedule.alpha_bar);
  EXPECT_EQ(loaded.latent_scale, r.model.latent_scale);
  EXPECT_EQ(loaded.subjects, r.model.subjects);
  EXPECT_EQ(loaded.pyramid_hash, r.model.pyramid_hash);
  std::filesystem::remove(path);
}

TEST(GenerateAnimation, TemplateShapeSnapAndMismatch) {
  Fixture f;
  auto r = train_stage2(f.examples, 4, {"s0", "s1"}, mesh::pyramid_hash(tiny_pyramid()), small_config());
  autoencoder::FaceTemplate face{tiny_pyramid().levels.front().mesh};
  AudioFeatures audio;
  audio.data = Mat::Random(20, 4);
  audio.frame_rate = 50;
  AnimationOptions opts;
  opts.snap_to_codebook = true;
  auto anim = generate_animation(audio, one_hot_style(0, 2), face, f.stage1, r.model, 5, opts);
  EXPECT_EQ(anim.motion.frames(), 10);
  EXPECT_EQ(anim.faces.vertices(), 42);
  Mat rows = anim.latents.token_rows();
  for (Index i = 0; i < rows.rows(); ++i) {
    EXPECT_EQ(rows.row(i), f.stage1.codebook().entries.row(anim.latents.indices[static_cast<std::size_t>(i)]));
  }
  auto again = generate_animation(audio, one_hot_style(0, 2), face, f.stage1, r.model, 5, opts);
  EXPECT_EQ(again.faces, anim.faces);

  for (auto& e : f.stage1.parameters().entries()) {
    if (e.name.rfind("decoder.", 0) == 0) e.var.mutable_value().setZero();
  }
  auto still = generate_animation(audio, one_hot_style(1, 2), face, f.stage1, r.model, 9);
  for (Index t = 0; t < still.faces.frames(); ++t) EXPECT_EQ(still.faces.frame(t), face.positions());

  autoencoder::FaceTemplate wrong{mesh::icosphere(0, 1.0)};
  EXPECT_THROW(generate_animation(audio, one_hot_style(0, 2), wrong, f.stage1, r.model, 5), ShapeError);
  r.model.pyramid_hash ^= 1;
  EXPECT_THROW(generate_animation(audio, one_hot_style(0, 2), face, f.stage1, r.model, 5), ConfigError);
}
