#include "pepco/training.hpp"

#include <cmath>

#include "pepco/error.hpp"
#include "pepco/fusion.hpp"
#include "pepco/random.hpp"
#include "pepco/text.hpp"

namespace pepco::train {

using ad::Tensor;
using ad::Var;
using data::TaskKind;
using model::Architecture;
using model::CoModel;

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

double default_lambda(TaskKind task) { return task == TaskKind::Regression ? 1e-4 : 0.05; }

void Adam::step(model::ParameterSet& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params.all()) {
    if (p.grad.size() != p.value.size()) continue;
    auto [it, fresh] = state_.try_emplace(p.name);
    Moments& s = it->second;
    if (fresh) {
      s.m = Tensor(p.value.shape());
      s.v = Tensor(p.value.shape());
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      p.value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<Sample> prepare_samples(const std::vector<data::PeptideRecord>& records, bool with_graph) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    Sample s;
    s.tokens = data::encode_sequence(rec);
    s.label = rec.label;
    if (with_graph) {
      s.graph = data::build_graph(rec);
      s.neighbor_mean = model::neighbor_mean_matrix(*s.graph);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Var task_loss(Var pred, std::span<const double> labels, TaskKind task) {
  const std::size_t b = labels.size();
  if (pred.value().rows() != b) {
    throw ShapeError("task_loss: " + std::to_string(pred.value().rows()) + " predictions for " +
                     std::to_string(b) + " labels");
  }
  if (task == TaskKind::Regression) {
    if (pred.value().cols() != 1) {
      throw ShapeError("regression predictions must have width 1, got " + ad::shape_string(pred.shape()));
    }
    Tensor target({b, 1}, std::vector<double>(labels.begin(), labels.end()));
    return ad::mse_loss(pred, pred.tape->constant(std::move(target)));
  }
  std::vector<int> classes(b);
  for (std::size_t i = 0; i < b; ++i) classes[i] = static_cast<int>(labels[i]);
  return ad::cross_entropy_loss(pred, classes);
}

Var supervised_loss(Var pred_seq, Var pred_graph, std::span<const double> labels, TaskKind task) {
  return ad::add(task_loss(pred_seq, labels, task), task_loss(pred_graph, labels, task));
}

Var total_loss(Var loss_pred, Var loss_con, double lambda) {
  if (!loss_pred.value().all_finite() || !loss_con.value().all_finite()) {
    throw NumericError("total_loss: non-finite loss term");
  }
  return ad::add(loss_pred, ad::scale(loss_con, lambda));
}

BatchLoss batch_loss(model::Binder& bind, const CoModel& m, std::span<const Sample* const> batch) {
  const auto& cfg = m.config();
  std::vector<double> labels;
  std::vector<Var> seq_reps, graph_reps;
  for (const Sample* s : batch) {
    labels.push_back(s->label);
    if (cfg.has_seq_route()) seq_reps.push_back(model::transformer_encode(bind, m.seq(), s->tokens));
    if (cfg.has_graph_route()) {
      if (!s->graph) throw ContractError("sample prepared without its bead graph");
      Var h = model::graph_embed(bind, m.graph(), *s->graph);
      graph_reps.push_back(model::graphsage_from_embedding(bind, m.graph(), h, s->neighbor_mean));
    }
  }
  if (cfg.arch == Architecture::SeqOnly) {
    Var pred = model::mlp_predict(bind, m.pred_seq(), ad::concat(seq_reps, 0));
    Var loss = task_loss(pred, labels, cfg.task);
    return {loss, std::nullopt, loss};
  }
  if (cfg.arch == Architecture::GraphOnly) {
    Var pred = model::mlp_predict(bind, m.pred_graph(), ad::concat(graph_reps, 0));
    Var loss = task_loss(pred, labels, cfg.task);
    return {loss, std::nullopt, loss};
  }
  Var hs = ad::concat(seq_reps, 0);
  Var hg = ad::concat(graph_reps, 0);
  if (cfg.uses_fused_predictor()) {
    Var pred = model::mlp_predict(bind, m.pred_fused(), fusion::fuse_for_predictor(hs, hg, cfg.fusion));
    Var loss = task_loss(pred, labels, cfg.task);
    return {loss, std::nullopt, loss};
  }
  Var l_pred = supervised_loss(model::mlp_predict(bind, m.pred_seq(), hs), model::mlp_predict(bind, m.pred_graph(), hg),
                               labels, cfg.task);
  Var l_con = fusion::infonce_loss(hs, hg, cfg.fusion.tau, cfg.fusion.normalize);
  // With lambda = 0 the contrastive term stays off the gradient path entirely.
  Var l_total = cfg.fusion.lambda == 0.0 ? l_pred : total_loss(l_pred, l_con, cfg.fusion.lambda);
  return {l_pred, l_con, l_total};
}

std::string LossCurve::to_csv() const {
  std::string out = "epoch,loss_pred,loss_con,loss_train,val_metric\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + text::fixed(r.loss_pred) + "," + text::fixed(r.loss_con) + "," +
           text::fixed(r.loss_train) + "," + text::fixed(r.val_metric) + "\n";
  }
  return out;
}

bool metric_improves(TaskKind task, double candidate, double incumbent) {
  return task == TaskKind::Regression ? candidate < incumbent : candidate > incumbent;
}

TrainResult train(const data::DatasetSplit& split, const TrainConfig& cfg, const StepHook& on_step) {
  cfg.validate();
  if (split.train.size() < 2) throw ContractError("training split needs at least 2 records");
  if (split.validation.empty()) throw ContractError("validation split is empty");
  for (const auto* part : {&split.train, &split.validation}) {
    for (const auto& rec : *part) {
      if (rec.sequence.size() > cfg.model.max_length) {
        throw ContractError("peptide '" + rec.id + "' longer than max_length " + std::to_string(cfg.model.max_length));
      }
      if (cfg.model.task == TaskKind::Classification &&
          (rec.label < 0 || static_cast<std::size_t>(rec.label) >= cfg.model.num_classes)) {
        throw ContractError("peptide '" + rec.id + "' has class outside 0.." + std::to_string(cfg.model.num_classes - 1));
      }
    }
  }

  CoModel model(cfg.model, derive_seed(cfg.seed, "init"));
  const bool graphs = cfg.model.has_graph_route();
  const auto train_samples = prepare_samples(split.train, graphs);
  const auto val_samples = prepare_samples(split.validation, inference_needs_graph(model));

  Adam adam(cfg.adam, cfg.learning_rate);
  TrainResult result{model, {}, 0, 0.0};
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches =
        data::make_batches(train_samples.size(), cfg.batch_size, derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
    double sum_pred = 0.0, sum_con = 0.0, sum_total = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<const Sample*> batch;
      for (auto idx : batches[bi]) batch.push_back(&train_samples[idx]);
      model.params().zero_grad();
      ad::Tape tape;
      model::Binder bind(tape, true);
      auto where = [&] { return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi + 1); };
      std::optional<BatchLoss> computed;
      try {
        computed = batch_loss(bind, model, batch);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at " + where() + ": " + e.what());
      }
      BatchLoss& loss = *computed;
      const double lp = loss.pred.value().item();
      const double lc = loss.con ? loss.con->value().item() : 0.0;
      const double lt = loss.total.value().item();
      if (!std::isfinite(lp) || !std::isfinite(lc) || !std::isfinite(lt)) {
        throw NumericError("training diverged: non-finite loss at " + where() + " (pred=" + text::exact(lp) +
                           ", con=" + text::exact(lc) + ")");
      }
      tape.backward(loss.total);
      adam.step(model.params());
      ++step;
      if (on_step) on_step(step, model);
      sum_pred += lp;
      sum_con += lc;
      sum_total += lt;
    }
    const double nb = static_cast<double>(batches.size());
    const double val = validation_metric(model, val_samples);
    if (!std::isfinite(val)) {
      throw NumericError("training diverged: non-finite validation metric at epoch " + std::to_string(epoch));
    }
    result.curve.rows.push_back({epoch, sum_pred / nb, sum_con / nb, sum_total / nb, val});
    if (epoch == 1 || metric_improves(cfg.model.task, val, result.best_val_metric)) {
      result.best_epoch = epoch;
      result.best_val_metric = val;
      result.model.load_values(model);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

int Prediction::predicted_class() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    if (outputs[i] > outputs[best]) best = i;
  }
  return static_cast<int>(best);
}

bool inference_needs_graph(const CoModel& m) {
  const auto& c = m.config();
  return c.arch == Architecture::GraphOnly || c.uses_fused_predictor();
}

Prediction infer(const CoModel& m, const data::TokenSequence& seq, const data::BeadGraph* graph) {
  const auto& c = m.config();
  ad::Tape tape;
  model::Binder bind(tape, false);
  if (!inference_needs_graph(m)) {
    Var out = model::mlp_predict(bind, m.pred_seq(), model::transformer_encode(bind, m.seq(), seq));
    const auto v = out.value().values();
    return {std::vector<double>(v.begin(), v.end())};
  }
  if (graph == nullptr) {
    throw ContractError(c.arch == Architecture::GraphOnly
                            ? "graph backbone inference requires the bead graph input"
                            : "'" + std::string(fusion::to_string(c.fusion.kind)) +
                                  "' fusion needs both inputs: the bead graph input is required");
  }
  Var hg = model::graphsage_encode(bind, m.graph(), *graph);
  Var out;
  if (c.arch == Architecture::GraphOnly) {
    out = model::mlp_predict(bind, m.pred_graph(), hg);
  } else {
    Var hs = model::transformer_encode(bind, m.seq(), seq);
    out = model::mlp_predict(bind, m.pred_fused(), fusion::fuse_for_predictor(hs, hg, c.fusion));
  }
  const auto v = out.value().values();
  return {std::vector<double>(v.begin(), v.end())};
}

Metrics regression_metrics(std::span<const double> preds, std::span<const double> labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ContractError("metrics need equal, non-empty prediction and label lists");
  }
  const double n = static_cast<double>(preds.size());
  double mae = 0.0, mse = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = preds[i] - labels[i];
    mae += std::fabs(e);
    mse += e * e;
    mean += labels[i];
  }
  mean /= n;
  double ss_tot = 0.0;
  for (double y : labels) ss_tot += (y - mean) * (y - mean);
  if (ss_tot == 0.0) throw NumericError("R^2 undefined: labels have zero variance");
  Metrics m;
  m.mae = mae / n;
  m.mse = mse / n;
  m.r2 = 1.0 - mse / ss_tot;
  return m;
}

Metrics evaluate(const CoModel& m, const std::vector<data::PeptideRecord>& records) {
  if (records.empty()) throw ContractError("cannot evaluate on an empty record list");
  const auto samples = prepare_samples(records, inference_needs_graph(m));
  if (m.config().task == TaskKind::Classification) {
    std::size_t correct = 0;
    for (const auto& s : samples) {
      const auto p = infer(m, s.tokens, s.graph ? &*s.graph : nullptr);
      correct += p.predicted_class() == static_cast<int>(s.label);
    }
    Metrics out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return out;
  }
  std::vector<double> preds, labels;
  for (const auto& s : samples) {
    preds.push_back(infer(m, s.tokens, s.graph ? &*s.graph : nullptr).value());
    labels.push_back(s.label);
  }
  return regression_metrics(preds, labels);
}

double validation_metric(const CoModel& m, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("empty validation set");
  double acc = 0.0;
  for (const auto& s : samples) {
    const auto p = infer(m, s.tokens, s.graph ? &*s.graph : nullptr);
    if (m.config().task == TaskKind::Classification) {
      acc += p.predicted_class() == static_cast<int>(s.label);
    } else {
      const double e = p.value() - s.label;
      acc += e * e;
    }
  }
  return acc / static_cast<double>(samples.size());
}

std::string Metrics::to_report() const {
  std::string out;
  auto line = [&](std::string_view key, const std::optional<double>& v) {
    if (!v) return;
    out += key;
    out += '=';
    out += text::fixed(*v);
    out += '\n';
  };
  line("mae", mae);
  line("mse", mse);
  line("r2", r2);
  line("accuracy", accuracy);
  return out;
}

}  // namespace pepco::train
