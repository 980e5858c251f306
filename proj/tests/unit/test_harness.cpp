#include "qstd/harness/cli.hpp"

#include "../support/tiny_config.hpp"

#include <gtest/gtest.h>

#include <iterator>
#include <sstream>

using namespace qstd;
using namespace qstd::harness;
using qstd::testing::tiny_config_json;
using qstd::testing::write_config;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qstd_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

/// Runs the pipeline up to and including `last` in a fresh directory.
std::string pipeline(const std::string& name, const std::string& last, const Json& cfg_json = {}) {
  const auto dir = fresh_dir(name);
  const auto cfg = write_config(cfg_json.is_null() ? tiny_config_json(dir.string()) : cfg_json, dir / "config.json");
  for (const char* cmd : {"synth-corpus", "build-pyramid", "train-stage1", "train-stage2", "sample"}) {
    const auto r = cli({cmd, "--config", cfg, "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << cmd << ": " << r.err;
    if (cmd == last) break;
  }
  return cfg;
}

}  // namespace

TEST(ExperimentConfig, SeedIsMandatory) {
  auto j = tiny_config_json("x");
  j.erase("seed");
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(ExperimentConfig, UnknownKeysRejected) {
  auto j = tiny_config_json("x");
  j["stage1"]["epoch"] = 3;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = tiny_config_json("x");
  j["outputdir"] = "y";
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = tiny_config_json("x");
  j["stage2"]["seed"] = 4;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(ExperimentConfig, ReferencedPathsMustExist) {
  auto j = tiny_config_json("x");
  j.erase("corpus");
  j["corpus_manifest"] = "/nonexistent/manifest.txt";
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j.erase("corpus_manifest");
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(ExperimentConfig, PyramidAndEncoderMustAgree) {
  auto j = tiny_config_json("x");
  j["stage1"]["block_channels"] = {8, 8};
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
}

TEST(ExperimentConfig, HashIgnoresSeedAndOutput) {
  const auto a = experiment_config_from_json(tiny_config_json("x", 1));
  const auto b = experiment_config_from_json(tiny_config_json("y", 2));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(a.stage1.seed, 1u);
  EXPECT_EQ(b.stage2.seed, 2u);
  auto j = tiny_config_json("x");
  j["stage2"]["epochs"] = 3;
  EXPECT_NE(config_hash(experiment_config_from_json(j)), config_hash(a));
  EXPECT_EQ(config_hash(experiment_config_from_json(to_json(a))), config_hash(a));
}

TEST(RunRecord, RoundTripAndNeverOverwritten) {
  const auto dir = fresh_dir("record");
  std::ofstream(dir / "a.bin") << "x";
  RunRecord r;
  r.command = "evaluate";
  r.config_hash = "abc";
  r.seed = 3;
  r.metrics = {{"lve", 0.25}, {"fdd", -1.0 / 3.0}};
  r.curves["loss"] = {1.0, 0.5};
  r.artifacts = {"a.bin"};
  const auto first = write_record(r, dir.string());
  const auto second = write_record(r, dir.string());
  EXPECT_NE(first, second);
  const auto back = read_record(first);
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(back.curves, r.curves);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.artifacts, r.artifacts);
  r.artifacts.push_back("missing.bin");
  EXPECT_THROW(write_record(r, dir.string()), IoError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({"evaluate", "--bogus"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"evaluate"}).code, 3);
  const auto dir = fresh_dir("codes");
  auto j = tiny_config_json(dir.string());
  j["stage1"]["heads"] = 3;
  const auto bad = cli({"synth-corpus", "--config", write_config(j, dir / "bad.json")});
  EXPECT_EQ(bad.code, 3);
  EXPECT_EQ(count_lines(bad.err), 1) << bad.err;
  EXPECT_EQ(cli({"train-stage1", "--config", write_config(tiny_config_json(dir.string()), dir / "ok.json")}).code, 1);
}

TEST(Cli, DivergenceExitCode) {
  const auto dir = fresh_dir("diverge");
  auto j = tiny_config_json(dir.string());
  j["stage1"]["learning_rate"] = 1e300;
  j["stage1"]["epochs"] = 20;
  const auto cfg = pipeline("diverge", "build-pyramid", j);
  const auto r = cli({"train-stage1", "--config", cfg});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_EQ(count_lines(r.err), 1);
}

TEST(Cli, EvaluateOnGroundTruthGivesZeroLve) {
  const auto dir = fresh_dir("evalgt");
  const auto cfg = write_config(tiny_config_json(dir.string()), dir / "config.json");
  ASSERT_EQ(cli({"synth-corpus", "--config", cfg}).code, 0);
  const auto pred = dir / "pred";
  fs::create_directories(pred);
  for (const auto& e : fs::directory_iterator(dir / "corpus" / "motion")) {
    fs::copy_file(e.path(), pred / (e.path().stem().string() + ".0.qmot"));
  }
  const auto r = cli({"evaluate", "--config", cfg, "--pred", pred.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = eval::parse_report(slurp(dir / "metrics.txt"));
  ASSERT_TRUE(rep.lve.has_value());
  EXPECT_EQ(*rep.lve, 0.0);
  EXPECT_EQ(*rep.fdd, 0.0);
  EXPECT_FALSE(rep.diversity.has_value());
  EXPECT_EQ(rep.sample_count, 4);
}

TEST(Cli, ZeroEpochCheckpointEqualsInitialisation) {
  const auto dir = fresh_dir("epochs0");
  const auto cfg_path = pipeline("epochs0", "build-pyramid");
  ASSERT_EQ(cli({"train-stage1", "--config", cfg_path, "--epochs", "0"}).code, 0);
  auto cfg = load_experiment_config(cfg_path);
  cfg.stage1.epochs = 0;
  autoencoder::MotionAutoencoder init(mesh::load_pyramid((dir / "pyramid.qpyr").string()), cfg.stage1);
  autoencoder::save_stage1((dir / "init.ckpt").string(), init);
  EXPECT_EQ(slurp(dir / "stage1.ckpt"), slurp(dir / "init.ckpt"));
}

TEST(Cli, SampleSameSeedIdenticalFiles) {
  const auto dir = fresh_dir("sample");
  const auto cfg = pipeline("sample", "train-stage2");
  std::map<std::string, std::string> runs[3];
  const char* seeds[3] = {"1", "1", "2"};
  for (int i = 0; i < 3; ++i) {
    ASSERT_EQ(cli({"sample", "--config", cfg, "--seed", seeds[i]}).code, 0);
    for (const auto& e : fs::directory_iterator(dir / "samples")) runs[i][e.path().filename()] = slurp(e.path());
  }
  EXPECT_EQ(runs[0].size(), 8u);
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_NE(runs[0], runs[2]);
}

TEST(Cli, DeterministicSamplerHasNoDiversity) {
  const auto dir = fresh_dir("detsample");
  const auto cfg = pipeline("detsample", "train-stage2");
  ASSERT_EQ(cli({"sample", "--config", cfg, "--deterministic-sampler"}).code, 0);
  ASSERT_EQ(cli({"evaluate", "--config", cfg}).code, 0);
  EXPECT_EQ(*eval::parse_report(slurp(dir / "metrics.txt")).diversity, 0.0);
  ASSERT_EQ(cli({"sample", "--config", cfg, "--snap-codebook"}).code, 0);
  ASSERT_EQ(cli({"evaluate", "--config", cfg, "--squared-lve"}).code, 0);
  EXPECT_GT(*eval::parse_report(slurp(dir / "metrics.txt")).diversity, 0.0);
}

TEST(Cli, HeatmapWritesImages) {
  const auto dir = fresh_dir("heat");
  const auto cfg = pipeline("heat", "sample");
  ASSERT_EQ(cli({"heatmap", "--config", cfg}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "heatmaps" / "s0_00.1.ppm"));
  EXPECT_TRUE(fs::exists(dir / "heatmaps" / "gt_s0_00.txt"));
  const auto single = cli({"heatmap", "--config", cfg, "--motion", (dir / "samples" / "s1_01.0.qmot").string()});
  EXPECT_EQ(single.code, 0) << single.err;
}

TEST(Report, TableShapes) {
  RunRecord a;
  a.command = "evaluate";
  a.config_hash = "h1";
  a.metrics = {{"lve", 0.5}};
  EXPECT_EQ(count_lines(detail::format_table({a})), 2);

  RunRecord b = a, c = a;
  b.config_hash = "h2";
  b.metrics = {{"fdd", 1.0}};
  c.seed = 7;
  const auto t = detail::format_table({b, a, c});
  EXPECT_NE(t.find("\xE2\x80\x94"), std::string::npos);
  // Header, group h1 (2 rows), blank separator, group h2 (1 row).
  EXPECT_EQ(count_lines(t), 5) << t;
  EXPECT_LT(t.find("h1"), t.find("h2"));
}

TEST(Report, FromRecordDirectory) {
  const auto dir = fresh_dir("report");
  const auto cfg = write_config(tiny_config_json(dir.string()), dir / "config.json");
  ASSERT_EQ(cli({"synth-corpus", "--config", cfg}).code, 0);
  const auto r = cli({"report", (dir / "records").string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 2) << r.out;
  EXPECT_TRUE(fs::exists(dir / "report" / "table.txt"));
  EXPECT_EQ(cli({"report", (dir / "nothing").string()}).code, 1);
}
