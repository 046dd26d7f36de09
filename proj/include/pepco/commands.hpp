#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pepco/attribution.hpp"
#include "pepco/config.hpp"
#include "pepco/metrics.hpp"
#include "pepco/training.hpp"

namespace pepco::commands {

// File names inside an output directory.
inline constexpr const char* kCheckpointFile = "model.pcn";
inline constexpr const char* kLossCurveFile = "loss_curve.csv";
inline constexpr const char* kMetricsFile = "metrics.txt";
inline constexpr const char* kConfigFile = "config.cfg";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kProfilesFile = "profiles.csv";
inline constexpr const char* kSimilarityFile = "similarity.csv";
inline constexpr const char* kSweepFile = "lambda_sweep.csv";

struct TrainSummary {
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  train::Metrics test;
  std::filesystem::path checkpoint;
};

TrainSummary run_train(const config::RunConfig& cfg);

struct InferSummary {
  std::size_t predictions = 0;
  std::uint64_t graph_builds = 0;
  std::uint64_t graph_encodes = 0;
};

// With `assert_seq_only`, fails unless no graph was built or encoded.
InferSummary run_infer(const config::RunConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& input, bool assert_seq_only);

struct AttributeSummary {
  std::size_t profiles = 0;
  bool few_steps = false;  // fewer than 2 steps: completeness not expected to hold
};

AttributeSummary run_attribute(const config::RunConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::filesystem::path& input, attr::Route route, std::size_t steps);

metrics::SimilarityReport run_compare(const config::RunConfig& cfg, const std::filesystem::path& profiles_a,
                                      const std::filesystem::path& profiles_b);

struct SweepRow {
  double lambda = 0.0;
  double val_metric = 0.0;
};

std::vector<SweepRow> run_sweep_lambda(const config::RunConfig& cfg, std::vector<double> grid);
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

void run_gen_synth(std::size_t count, std::size_t max_length, std::uint64_t seed,
                   const std::filesystem::path& output);

}  // namespace pepco::commands
