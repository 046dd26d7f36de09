#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pepco/autodiff.hpp"
#include "pepco/data.hpp"
#include "pepco/encoders.hpp"

namespace pepco::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  model::ModelConfig model;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 5;
  AdamConfig adam;

  void validate() const;
};

// Contrastive weight used when none is configured: the middle of the range
// that works for each task kind.
double default_lambda(data::TaskKind task);

class Adam {
 public:
  Adam(AdamConfig cfg, double learning_rate) : cfg_(cfg), lr_(learning_rate) {}

  void step(model::ParameterSet& params);
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    ad::Tensor m, v;
  };
  AdamConfig cfg_;
  double lr_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

// Model inputs prepared once per dataset. Graphs are built only when the
// model consumes them.
struct Sample {
  data::TokenSequence tokens;
  std::optional<data::BeadGraph> graph;
  ad::Tensor neighbor_mean;
  double label = 0.0;
};

std::vector<Sample> prepare_samples(const std::vector<data::PeptideRecord>& records, bool with_graph);

// Mean MSE (regression, preds (B,1)) or mean cross-entropy (classification,
// logits (B,C)) against `labels`.
ad::Var task_loss(ad::Var pred, std::span<const double> labels, data::TaskKind task);
// Sum of both routes' task losses.
ad::Var supervised_loss(ad::Var pred_seq, ad::Var pred_graph, std::span<const double> labels,
                        data::TaskKind task);
ad::Var total_loss(ad::Var loss_pred, ad::Var loss_con, double lambda);

struct BatchLoss {
  ad::Var pred;
  std::optional<ad::Var> con;
  ad::Var total;
};

// Forward pass and losses for one minibatch.
BatchLoss batch_loss(model::Binder& bind, const model::CoModel& m, std::span<const Sample* const> batch);

struct LossRow {
  std::size_t epoch = 0;
  double loss_pred = 0.0;
  double loss_con = 0.0;
  double loss_train = 0.0;
  double val_metric = 0.0;
};

struct LossCurve {
  std::vector<LossRow> rows;

  std::string to_csv() const;
};

struct TrainResult {
  model::CoModel model;
  LossCurve curve;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
};

using StepHook = std::function<void(std::size_t step, const model::CoModel&)>;

// Trains from seeded initialization and returns the best-validation model.
TrainResult train(const data::DatasetSplit& split, const TrainConfig& cfg, const StepHook& on_step = {});

struct Prediction {
  std::vector<double> outputs;  // 1 value (regression) or C logits

  double value() const { return outputs.front(); }
  int predicted_class() const;
};

// Sequence-only for RepCon and sequence backbones; baselines and graph
// backbones need `graph`.
Prediction infer(const model::CoModel& m, const data::TokenSequence& seq, const data::BeadGraph* graph = nullptr);
bool inference_needs_graph(const model::CoModel& m);

struct Metrics {
  std::optional<double> mae, mse, r2, accuracy;

  std::string to_report() const;
};

Metrics regression_metrics(std::span<const double> preds, std::span<const double> labels);
Metrics evaluate(const model::CoModel& m, const std::vector<data::PeptideRecord>& records);

// Validation criterion: MSE for regression (lower is better), accuracy for
// classification (higher is better).
double validation_metric(const model::CoModel& m, const std::vector<Sample>& samples);
bool metric_improves(data::TaskKind task, double candidate, double incumbent);

}  // namespace pepco::train
