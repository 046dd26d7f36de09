#include "pepco/commands.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pepco/config.hpp"
#include "pepco/error.hpp"
#include "support.hpp"

using namespace pepco;
using config::RunConfig;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// Tiny model on a tiny synthetic set.
RunConfig small_run(const fs::path& dir, const std::string& sub = "out") {
  const auto data = dir / "synth.csv";
  if (!fs::exists(data)) commands::run_gen_synth(80, 6, 7, data);
  RunConfig cfg;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"hidden", "8"}, {"heads", "2"}, {"ff_hidden", "16"}, {"seq_layers", "1"}, {"graph_layers", "2"},
           {"epochs", "3"}, {"batch_size", "16"}, {"max_length", "10"}, {"learning_rate", "0.005"}}) {
    cfg.set(k, v);
  }
  cfg.set("dataset", data.string());
  cfg.set("out_dir", (dir / sub).string());
  return cfg;
}

}  // namespace

TEST(RunConfig, DefaultsParseAndOverrides) {
  const RunConfig d;
  EXPECT_EQ(d.get("seed"), "5");
  EXPECT_EQ(d.get("fusion"), "repcon");
  EXPECT_THROW(d.dataset(), ConfigError);
  const auto tc = d.train_config();
  EXPECT_EQ(tc.model.fusion.kind, fusion::FusionKind::RepCon);

  auto c = RunConfig::from_text("# comment\nseed = 9   # trailing\n\nfusion=concat\n");
  EXPECT_EQ(c.get("seed"), "9");
  EXPECT_EQ(c.get("fusion"), "concat");
  c.apply_override("epochs=4");
  EXPECT_EQ(c.get("epochs"), "4");
  EXPECT_THROW(c.apply_override("epochs"), ConfigError);
  EXPECT_THROW(c.apply_override("nope=1"), ConfigError);
  EXPECT_THROW(c.set("nope", "1"), ConfigError);
  try {
    RunConfig::from_text("seed = 1\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::from_text("just words\n"), ConfigError);
}

TEST(RunConfig, TextRoundTripResolvesLambda) {
  RunConfig c;
  c.set("dataset", "x.csv");
  const std::string text = c.to_text();
  EXPECT_EQ(text.find("lambda = auto"), std::string::npos);
  EXPECT_NE(text.find("lambda = "), std::string::npos);
  const auto back = RunConfig::from_text(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_DOUBLE_EQ(back.train_config().model.fusion.lambda, c.train_config().model.fusion.lambda);
}

TEST(RunConfig, RejectsBadValues) {
  RunConfig c;
  c.set("epochs", "-1");
  EXPECT_THROW(c.train_config(), ConfigError);
  RunConfig r;
  r.set("train_ratio", "abc");
  EXPECT_THROW(r.ratios(), ConfigError);
  RunConfig f;
  f.set("fusion", "magic");
  EXPECT_THROW(f.train_config(), ConfigError);
}

TEST(GenSynth, LabelsAndDeterminism) {
  testing_support::TempDir dir("cmd");
  commands::run_gen_synth(1000, 10, 7, dir.path() / "a.csv");
  commands::run_gen_synth(1000, 10, 7, dir.path() / "b.csv");
  commands::run_gen_synth(1000, 10, 8, dir.path() / "c.csv");
  EXPECT_EQ(slurp(dir.path() / "a.csv"), slurp(dir.path() / "b.csv"));
  EXPECT_NE(slurp(dir.path() / "a.csv"), slurp(dir.path() / "c.csv"));
  const auto recs = data::parse_csv(slurp(dir.path() / "a.csv"), data::TaskKind::Regression, 10);
  ASSERT_EQ(recs.size(), 1000u);
  for (const auto& r : recs) {
    ASSERT_LE(r.sequence.size(), 10u);
    std::size_t aromatic = 0;
    for (char ch : r.sequence) aromatic += ch == 'F' || ch == 'W' || ch == 'Y';
    ASSERT_NEAR(r.label, static_cast<double>(aromatic) / r.sequence.size(), 5e-7);
  }
  EXPECT_FALSE(fs::exists(dir.path() / commands::kConfigFile));
}

TEST(Train, WritesArtifactsAndIsDeterministic) {
  testing_support::TempDir dir("cmd");
  const auto s1 = commands::run_train(small_run(dir.path(), "a"));
  const auto s2 = commands::run_train(small_run(dir.path(), "b"));
  for (const char* sub : {"a", "b"}) {
    for (const char* f : {commands::kCheckpointFile, commands::kLossCurveFile, commands::kMetricsFile,
                          commands::kConfigFile}) {
      EXPECT_TRUE(fs::exists(dir.path() / sub / f)) << sub << "/" << f;
    }
  }
  EXPECT_EQ(slurp(dir.path() / "a" / commands::kLossCurveFile), slurp(dir.path() / "b" / commands::kLossCurveFile));
  EXPECT_EQ(s1.best_epoch, s2.best_epoch);
  EXPECT_EQ(s1.best_val_metric, s2.best_val_metric);
  ASSERT_TRUE(s1.test.mae.has_value());
  EXPECT_TRUE(std::isfinite(*s1.test.mae));

  // The echoed config reloads to the same resolved text.
  const auto echoed = slurp(dir.path() / "a" / commands::kConfigFile);
  EXPECT_EQ(echoed.rfind("# ", 0), 0u);
  const auto reloaded = RunConfig::from_text(echoed);
  EXPECT_EQ(reloaded.get("hidden"), "8");
  EXPECT_NE(slurp(dir.path() / "a" / commands::kMetricsFile).find("best_epoch="), std::string::npos);
}

TEST(Train, MissingDatasetNamesTheKey) {
  RunConfig c;
  try {
    commands::run_train(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset"), std::string::npos);
  }
}

TEST(Train, RatiosMustSumToOne) {
  testing_support::TempDir dir("cmd");
  auto cfg = small_run(dir.path());
  cfg.set("train_ratio", "0.9");
  EXPECT_THROW(commands::run_train(cfg), ContractError);
}

TEST(Infer, SeqOnlyForRepConAndRejectedForConcat) {
  testing_support::TempDir dir("cmd");
  auto cfg = small_run(dir.path(), "rc");
  const auto s = commands::run_train(cfg);
  write_file(dir.path() / "in.fasta", ">a\nWFCW\n>b\nGRAK\n>c\nYY\n");
  const auto inf = commands::run_infer(cfg, s.checkpoint, dir.path() / "in.fasta", true);
  EXPECT_EQ(inf.predictions, 3u);
  EXPECT_EQ(inf.graph_builds, 0u);
  EXPECT_EQ(inf.graph_encodes, 0u);
  const auto csv = slurp(dir.path() / "rc" / commands::kPredictionsFile);
  EXPECT_EQ(csv.rfind("id,prediction\na,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  auto concat = small_run(dir.path(), "cc");
  concat.set("fusion", "concat");
  const auto sc = commands::run_train(concat);
  EXPECT_THROW(commands::run_infer(concat, sc.checkpoint, dir.path() / "in.fasta", true), ContractError);
}

TEST(Attribute, BothRoutesAndCompare) {
  testing_support::TempDir dir("cmd");
  auto cfg = small_run(dir.path(), "m");
  const auto s = commands::run_train(cfg);
  write_file(dir.path() / "five.fasta", ">1\nWFCW\n>2\nGRAK\n>3\nYYA\n>4\nFLER\n>5\nKW\n");

  auto seq_cfg = cfg;
  seq_cfg.set("out_dir", (dir.path() / "seq").string());
  const auto a = commands::run_attribute(seq_cfg, s.checkpoint, dir.path() / "five.fasta", attr::Route::Seq, 40);
  EXPECT_EQ(a.profiles, 5u);
  EXPECT_FALSE(a.few_steps);
  auto graph_cfg = cfg;
  graph_cfg.set("out_dir", (dir.path() / "graph").string());
  commands::run_attribute(graph_cfg, s.checkpoint, dir.path() / "five.fasta", attr::Route::Graph, 40);
  const auto one = commands::run_attribute(graph_cfg, s.checkpoint, dir.path() / "five.fasta", attr::Route::Graph, 1);
  EXPECT_TRUE(one.few_steps);

  const auto seq_profiles = attr::parse_profiles_csv(slurp(dir.path() / "seq" / commands::kProfilesFile));
  ASSERT_EQ(seq_profiles.size(), 5u);
  for (const auto& p : seq_profiles) {
    double t = 0.0;
    for (double v : p.scores) t += v;
    EXPECT_NEAR(t, 1.0, 1e-5);  // 6-decimal CSV rounding
  }

  auto cmp_cfg = cfg;
  cmp_cfg.set("out_dir", (dir.path() / "cmp").string());
  const auto self = commands::run_compare(cmp_cfg, dir.path() / "seq" / commands::kProfilesFile,
                                          dir.path() / "seq" / commands::kProfilesFile);
  EXPECT_DOUBLE_EQ(self.js_divergence.mean, 0.0);
  EXPECT_TRUE(fs::exists(dir.path() / "cmp" / commands::kSimilarityFile));
  commands::run_compare(cmp_cfg, dir.path() / "seq" / commands::kProfilesFile,
                        dir.path() / "graph" / commands::kProfilesFile);

  write_file(dir.path() / "other.csv", "id,position,residue,score\nzz,1,W,1.0\n");
  try {
    commands::run_compare(cmp_cfg, dir.path() / "seq" / commands::kProfilesFile, dir.path() / "other.csv");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("offending ids"), std::string::npos);
  }
}

TEST(SweepLambda, RowsSortedAndZeroMatchesPlainRun) {
  testing_support::TempDir dir("cmd");
  auto cfg = small_run(dir.path(), "sweep");
  cfg.set("epochs", "2");
  const auto rows = commands::run_sweep_lambda(cfg, {1e-3, 0.0, 1e-4, 1e-5});
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i - 1].lambda, rows[i].lambda);
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.val_metric));

  auto plain = small_run(dir.path(), "plain");
  plain.set("epochs", "2");
  plain.set("lambda", "0");
  EXPECT_EQ(commands::run_train(plain).best_val_metric, rows[0].val_metric);

  const auto csv = slurp(dir.path() / "sweep" / commands::kSweepFile);
  EXPECT_EQ(csv.rfind("lambda,val_metric\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_THROW(commands::run_sweep_lambda(cfg, {}), ConfigError);
  EXPECT_THROW(commands::run_sweep_lambda(cfg, {-1.0}), ConfigError);
}
