#include "pepco/attribution.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <memory>

#include "pepco/error.hpp"
#include "pepco/text.hpp"
#include "pepco/training.hpp"

namespace pepco::attr {

using ad::Tensor;
using ad::Var;
using data::TaskKind;

Route parse_route(std::string_view text) {
  if (text == "seq") return Route::Seq;
  if (text == "graph") return Route::Graph;
  throw ConfigError("unknown route '" + std::string(text) + "' (expected seq|graph)");
}

std::string_view to_string(Route route) { return route == Route::Seq ? "seq" : "graph"; }

Var attribution_loss(Var output, TaskKind task, std::optional<int> original_class) {
  if (task == TaskKind::Regression) return ad::sum(ad::abs(output));
  if (!original_class) throw ContractError("classification attribution needs the originally predicted class");
  const int label = *original_class;
  return ad::cross_entropy_loss(output, std::span<const int>(&label, 1));
}

Tensor integrated_gradients(const EmbeddingLoss& loss, const Tensor& embedded, std::size_t steps) {
  if (steps < 1) throw ContractError("integrated gradients needs at least one step");
  Tensor summed(embedded.shape());
  ad::Param scaled("embedded", Tensor(embedded.shape()));
  for (std::size_t k = 1; k <= steps; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(steps);
    for (std::size_t i = 0; i < embedded.size(); ++i) scaled.value[i] = alpha * embedded[i];
    scaled.zero_grad();
    ad::Tape tape;
    Var l = loss(tape, tape.watch(scaled));
    tape.backward(l);
    if (!scaled.grad.all_finite()) {
      throw NumericError("integrated gradients: non-finite gradient at step k=" + std::to_string(k));
    }
    summed += scaled.grad;
  }
  const double inv = 1.0 / static_cast<double>(steps);
  Tensor out(embedded.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = embedded[i] * summed[i] * inv;
  return out;
}

Completeness completeness(const EmbeddingLoss& loss, const Tensor& embedded, const Tensor& saliency) {
  auto eval = [&](const Tensor& at) {
    ad::Tape tape;
    return loss(tape, tape.constant(at)).value().item();
  };
  Completeness c;
  for (double v : saliency.values()) c.saliency_sum += v;
  c.loss_delta = eval(embedded) - eval(Tensor(embedded.shape()));
  c.relative_gap = std::fabs(c.saliency_sum - c.loss_delta) / std::fabs(c.loss_delta);
  return c;
}

AttributionProfile aggregate_to_residues(const Tensor& saliency, std::span<const std::uint32_t> residue_of_row,
                                         std::string_view residues, std::string id) {
  const std::size_t rows = saliency.rows(), cols = saliency.cols();
  if (residue_of_row.size() != rows) {
    throw ContractError("residue mapping covers " + std::to_string(residue_of_row.size()) + " rows, saliency has " +
                        std::to_string(rows));
  }
  std::vector<double> scores(residues.size(), 0.0);
  std::vector<bool> owned(residues.size(), false);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto res = residue_of_row[r];
    if (res >= residues.size()) throw ContractError("row " + std::to_string(r) + " maps outside the peptide");
    owned[res] = true;
    for (std::size_t c = 0; c < cols; ++c) scores[res] += saliency[r * cols + c];
  }
  for (std::size_t i = 0; i < owned.size(); ++i) {
    if (!owned[i]) throw ContractError("residue " + std::to_string(i + 1) + " owns no saliency rows");
  }
  double total = 0.0;
  for (double s : scores) total += s;
  if (!(std::fabs(total) >= 1e-9)) {
    throw NumericError("attribution total is (near) zero; profile cannot be normalized" +
                       (id.empty() ? std::string() : " for '" + id + "'"));
  }
  for (double& s : scores) s /= total;
  return {std::move(id), std::string(residues), std::move(scores)};
}

// ---------------------------------------------------------------------------

namespace {

std::optional<int> original_class(const model::CoModel& m, const data::PeptideRecord& record, Route route) {
  if (m.config().task != TaskKind::Classification) return std::nullopt;
  ad::Tape tape;
  model::Binder bind(tape, false);
  const auto tokens = data::encode_sequence(record);
  Var out = route == Route::Seq
                ? model::mlp_predict(bind, m.pred_seq(), model::transformer_encode(bind, m.seq(), tokens))
                : model::mlp_predict(bind, m.pred_graph(),
                                     model::graphsage_encode(bind, m.graph(), data::build_graph(record)));
  return train::Prediction{{out.value().values().begin(), out.value().values().end()}}.predicted_class();
}

void require_route(const model::CoModel& m, Route route) {
  const auto& c = m.config();
  if (c.uses_fused_predictor()) {
    throw ContractError("attribution is defined for backbones and RepCon models, not '" +
                        std::string(fusion::to_string(c.fusion.kind)) + "' fusion baselines");
  }
  if (route == Route::Seq && !c.has_seq_route()) throw ContractError("model has no sequence route to attribute");
  if (route == Route::Graph && !c.has_graph_route()) throw ContractError("model has no graph route to attribute");
}

}  // namespace

AttributionProblem make_problem(const model::CoModel& m, const data::PeptideRecord& record, Route route) {
  require_route(m, route);
  const TaskKind task = m.config().task;
  const auto yhat = original_class(m, record, route);
  AttributionProblem problem;
  if (route == Route::Seq) {
    const auto tokens = data::encode_sequence(record);
    {
      ad::Tape tape;
      model::Binder bind(tape, false);
      problem.embedded = model::seq_embed(bind, m.seq(), tokens).value();
    }
    problem.residue_of_row = tokens.positions;
    problem.loss = [&m, task, yhat](ad::Tape& tape, Var h) {
      model::Binder bind(tape, false);
      Var out = model::mlp_predict(bind, m.pred_seq(), model::transformer_from_embedding(bind, m.seq(), h));
      return attribution_loss(out, task, yhat);
    };
    return problem;
  }
  const auto graph = data::build_graph(record);
  {
    ad::Tape tape;
    model::Binder bind(tape, false);
    problem.embedded = model::graph_embed(bind, m.graph(), graph).value();
  }
  problem.residue_of_row = graph.residue_of_node;
  // The path scales node features only; the adjacency must stay fixed across
  // all steps, which the snapshot comparison enforces.
  auto adjacency = std::make_shared<const Tensor>(model::neighbor_mean_matrix(graph));
  auto snapshot = std::make_shared<const Tensor>(*adjacency);
  problem.loss = [&m, task, yhat, adjacency, snapshot](ad::Tape& tape, Var h) {
    model::Binder bind(tape, false);
    Var out = model::mlp_predict(bind, m.pred_graph(), model::graphsage_from_embedding(bind, m.graph(), h, *adjacency));
    if (std::memcmp(adjacency->data(), snapshot->data(), adjacency->size() * sizeof(double)) != 0) {
      throw ContractError("adjacency changed during integrated gradients");
    }
    return attribution_loss(out, task, yhat);
  };
  return problem;
}

AttributionProfile attribute_record(const model::CoModel& m, const data::PeptideRecord& record, Route route,
                                    std::size_t steps) {
  auto problem = make_problem(m, record, route);
  const Tensor saliency = integrated_gradients(problem.loss, problem.embedded, steps);
  return aggregate_to_residues(saliency, problem.residue_of_row, record.sequence, record.id);
}

std::vector<AttributionProfile> attribute_dataset(const model::CoModel& m, const std::vector<data::PeptideRecord>& records,
                                                  Route route, std::size_t steps) {
  std::vector<AttributionProfile> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(attribute_record(m, rec, route, steps));
  return out;
}

// ---------------------------------------------------------------------------

std::string format_profiles_csv(const std::vector<AttributionProfile>& profiles) {
  std::string out = "id,position,residue,score\n";
  for (const auto& p : profiles) {
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
      out += p.id + "," + std::to_string(i + 1) + "," + p.residues[i] + "," + text::fixed(p.scores[i]) + "\n";
    }
  }
  return out;
}

std::vector<AttributionProfile> parse_profiles_csv(std::string_view content) {
  const auto rows = text::lines(content);
  if (rows.empty() || rows.front() != "id,position,residue,score") {
    throw ParseError("malformed profile header: expected 'id,position,residue,score'");
  }
  std::vector<AttributionProfile> out;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    if (f.size() != 4 || f[2].size() != 1) throw ParseError("profile row " + std::to_string(i) + " is malformed");
    std::string id(f[0]);
    const auto pos = text::parse_int(f[1]);
    if (out.empty() || out.back().id != id) {
      if (seen.count(id)) throw ParseError("profile rows for '" + id + "' are not contiguous");
      seen.emplace(id, out.size());
      out.push_back({id, {}, {}});
    }
    auto& p = out.back();
    if (pos != static_cast<long long>(p.scores.size()) + 1) {
      throw ParseError("profile '" + id + "' has out-of-order position " + std::to_string(pos));
    }
    p.residues.push_back(f[2][0]);
    p.scores.push_back(text::parse_double(f[3]));
  }
  return out;
}

}  // namespace pepco::attr
