// Command-line front end. Talks to the library only through pepco.h.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pepco/pepco.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct RuntimeFailure {
  pepco_status status;
};

void check(pepco_status status) {
  if (status != PEPCO_OK) throw RuntimeFailure{status};
}

using ConfigPtr = std::unique_ptr<pepco_config, decltype(&pepco_config_free)>;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

ConfigPtr resolve_config(const GlobalOptions& g) {
  pepco_config* raw = nullptr;
  if (g.config_path.empty()) {
    check(pepco_config_new(&raw));
  } else {
    check(pepco_config_load(g.config_path.c_str(), &raw));
  }
  ConfigPtr cfg(raw, pepco_config_free);
  for (const auto& o : g.overrides) check(pepco_config_override(cfg.get(), o.c_str()));
  if (!g.out_dir.empty()) check(pepco_config_set(cfg.get(), "out_dir", g.out_dir.c_str()));
  if (g.seed) check(pepco_config_set(cfg.get(), "seed", std::to_string(*g.seed).c_str()));
  return cfg;
}

std::string config_value(const pepco_config* cfg, const char* key) {
  size_t needed = 0;
  check(pepco_config_get(cfg, key, nullptr, 0, &needed));
  std::string value(needed, '\0');
  check(pepco_config_get(cfg, key, value.data(), value.size(), &needed));
  value.resize(needed - 1);
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peptide sequence/graph co-modeling with contrastive fusion and attribution"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pepco_version());

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value run configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override one config key (key=value); repeatable");
  app.add_option("--out-dir", g.out_dir, "output directory (overrides out_dir)");
  app.add_option("--seed", g.seed, "random seed (overrides seed)");

  auto* train = app.add_subcommand("train", "train a model on the configured dataset");
  train->fallthrough();

  auto* infer = app.add_subcommand("infer", "sequence-only predictions from a checkpoint");
  std::string checkpoint, input;
  bool assert_seq_only = false;
  infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", input, "FASTA or CSV peptides")->required()->check(CLI::ExistingFile);
  infer->add_flag("--assert-seq-only", assert_seq_only, "fail if any graph is built or encoded");
  infer->fallthrough();

  auto* attribute = app.add_subcommand("attribute", "integrated-gradients residue profiles");
  std::string route = "seq";
  std::size_t steps = 300;
  attribute->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  attribute->add_option("--input", input, "FASTA or CSV peptides")->required()->check(CLI::ExistingFile);
  attribute->add_option("--route", route, "seq or graph")->check(CLI::IsMember({"seq", "graph"}));
  attribute->add_option("--steps,-m", steps, "Riemann steps")->check(CLI::PositiveNumber);
  attribute->fallthrough();

  auto* compare = app.add_subcommand("compare", "similarity report for two profile files");
  std::string profiles_a, profiles_b;
  compare->add_option("profiles_a", profiles_a)->required()->check(CLI::ExistingFile);
  compare->add_option("profiles_b", profiles_b)->required()->check(CLI::ExistingFile);
  compare->fallthrough();

  auto* sweep = app.add_subcommand("sweep-lambda", "validation metric for each contrastive weight");
  std::vector<double> grid;
  sweep->add_option("--grid", grid, "lambda values")->required()->delimiter(',');
  sweep->fallthrough();

  auto* synth = app.add_subcommand("gen-synth", "write a synthetic aromatic-fraction dataset");
  std::size_t count = 1000, max_len = 10;
  std::string output;
  synth->add_option("--n", count, "number of peptides")->check(CLI::Range(10, 100000000));
  synth->add_option("--max-len", max_len, "maximum peptide length")->check(CLI::Range(1, 50));
  synth->add_option("--output,-o", output, "dataset CSV path")->required();
  synth->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      std::uint64_t seed = 5;
      if (g.seed) {
        seed = *g.seed;
      } else if (!g.config_path.empty() || !g.overrides.empty()) {
        seed = std::stoull(config_value(resolve_config(g).get(), "seed"));
      }
      check(pepco_gen_synth(count, max_len, seed, output.c_str()));
      std::printf("wrote %zu peptides to %s\n", count, output.c_str());
      return 0;
    }
    auto cfg = resolve_config(g);
    const std::string out_dir = config_value(cfg.get(), "out_dir");
    if (train->parsed()) {
      pepco_train_summary s{};
      check(pepco_train(cfg.get(), &s));
      std::printf("best epoch %zu, validation metric %.6f\n", s.best_epoch, s.best_val_metric);
      if (!std::isnan(s.test_mae)) std::printf("test mae %.6f, mse %.6f\n", s.test_mae, s.test_mse);
      if (!std::isnan(s.test_accuracy)) std::printf("test accuracy %.6f\n", s.test_accuracy);
    } else if (infer->parsed()) {
      pepco_infer_summary s{};
      check(pepco_infer(cfg.get(), checkpoint.c_str(), input.c_str(), assert_seq_only ? 1 : 0, &s));
      std::printf("%zu predictions\n", s.predictions);
      if (assert_seq_only) std::printf("sequence-only check passed: 0 graph builds, 0 graph encodes\n");
    } else if (attribute->parsed()) {
      if (steps < 2) {
        std::fprintf(stderr, "warning: %zu step(s) gives plain gradient x input; completeness will not hold\n", steps);
      }
      pepco_attribute_summary s{};
      check(pepco_attribute(cfg.get(), checkpoint.c_str(), input.c_str(),
                            route == "seq" ? PEPCO_ROUTE_SEQ : PEPCO_ROUTE_GRAPH, steps, &s));
      std::printf("%zu profiles\n", s.profiles);
    } else if (compare->parsed()) {
      check(pepco_compare(cfg.get(), profiles_a.c_str(), profiles_b.c_str()));
    } else if (sweep->parsed()) {
      check(pepco_sweep_lambda(cfg.get(), grid.data(), grid.size()));
    }
    std::printf("outputs in %s\n", out_dir.c_str());
  } catch (const RuntimeFailure& f) {
    std::fprintf(stderr, "error (%s): %s\n", pepco_status_name(f.status), pepco_last_error());
    return f.status == PEPCO_ERR_ARGUMENT ? kExitUsage : kExitRuntime;
  }
  return 0;
}
