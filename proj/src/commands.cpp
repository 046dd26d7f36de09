#include "pepco/commands.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pepco/error.hpp"
#include "pepco/metrics.hpp"
#include "pepco/text.hpp"

namespace pepco::commands {

namespace fs = std::filesystem;

namespace {

void write_config(const config::RunConfig& cfg, const std::string& command_note) {
  data::write_file(cfg.out_dir() / kConfigFile, "# " + command_note + "\n" + cfg.to_text());
}

std::vector<data::PeptideRecord> load_records(const fs::path& path, const model::ModelConfig& m) {
  return data::parse_dataset(path, m.task, m.max_length);
}

}  // namespace

TrainSummary run_train(const config::RunConfig& cfg) {
  const auto tc = cfg.train_config();
  const auto records = data::parse_dataset(cfg.dataset(), tc.model.task, tc.model.max_length);
  const auto split = data::split_dataset(records, cfg.ratios(), tc.seed);
  auto result = train::train(split, tc);

  const fs::path out = cfg.out_dir();
  TrainSummary s;
  s.best_epoch = result.best_epoch;
  s.best_val_metric = result.best_val_metric;
  s.test = train::evaluate(result.model, split.test);
  s.checkpoint = out / kCheckpointFile;
  model::save_model(s.checkpoint, result.model);
  data::write_file(out / kLossCurveFile, result.curve.to_csv());
  data::write_file(out / kMetricsFile, "best_epoch=" + std::to_string(s.best_epoch) +
                                           "\nbest_val_metric=" + text::fixed(s.best_val_metric) + "\n" +
                                           s.test.to_report());
  write_config(cfg, "train");
  return s;
}

InferSummary run_infer(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& input,
                       bool assert_seq_only) {
  const auto m = model::load_model(checkpoint);
  const auto& mc = m.config();
  if (train::inference_needs_graph(m)) {
    throw ContractError("checkpoint uses " +
                        (mc.uses_fused_predictor() ? "'" + std::string(fusion::to_string(mc.fusion.kind)) + "' fusion"
                                                   : std::string("the graph backbone")) +
                        ", whose predictions need the molecular graph; sequence-only inference is defined for "
                        "RepCon (each route keeps its own predictor) and sequence backbones");
  }
  const auto records = load_records(input, mc);
  const auto builds_before = data::graph_build_count();
  const auto encodes_before = model::graph_encode_count();
  std::string csv = "id,prediction\n";
  for (const auto& rec : records) {
    const auto p = train::infer(m, data::encode_sequence(rec));
    csv += rec.id + "," +
           (mc.task == data::TaskKind::Regression ? text::fixed(p.value()) : std::to_string(p.predicted_class())) +
           "\n";
  }
  InferSummary s;
  s.predictions = records.size();
  s.graph_builds = data::graph_build_count() - builds_before;
  s.graph_encodes = model::graph_encode_count() - encodes_before;
  if (assert_seq_only && (s.graph_builds != 0 || s.graph_encodes != 0)) {
    throw ContractError("sequence-only assertion failed: " + std::to_string(s.graph_builds) + " graph builds, " +
                        std::to_string(s.graph_encodes) + " graph encodes");
  }
  data::write_file(cfg.out_dir() / kPredictionsFile, csv);
  write_config(cfg, "infer checkpoint=" + checkpoint.string() + " input=" + input.string());
  return s;
}

AttributeSummary run_attribute(const config::RunConfig& cfg, const fs::path& checkpoint, const fs::path& input,
                               attr::Route route, std::size_t steps) {
  const auto m = model::load_model(checkpoint);
  const auto records = load_records(input, m.config());
  const auto profiles = attr::attribute_dataset(m, records, route, steps);
  data::write_file(cfg.out_dir() / kProfilesFile, attr::format_profiles_csv(profiles));
  write_config(cfg, "attribute checkpoint=" + checkpoint.string() + " input=" + input.string() +
                        " route=" + std::string(attr::to_string(route)) + " steps=" + std::to_string(steps));
  return {profiles.size(), steps < 2};
}

metrics::SimilarityReport run_compare(const config::RunConfig& cfg, const fs::path& profiles_a,
                                      const fs::path& profiles_b) {
  const auto a = attr::parse_profiles_csv(data::read_file(profiles_a));
  const auto b = attr::parse_profiles_csv(data::read_file(profiles_b));
  std::vector<std::string> offenders;
  std::set<std::string> ids_b;
  for (const auto& p : b) ids_b.insert(p.id);
  std::set<std::string> ids_a;
  for (const auto& p : a) ids_a.insert(p.id);
  for (const auto& p : a) {
    if (!ids_b.count(p.id)) offenders.push_back(p.id);
  }
  for (const auto& p : b) {
    if (!ids_a.count(p.id)) offenders.push_back(p.id);
  }
  if (offenders.empty()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].id != b[i].id || a[i].residues != b[i].residues) offenders.push_back(a[i].id);
    }
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& id : offenders) list += (list.empty() ? "" : ", ") + id;
    throw ContractError("profiles are not paired; offending ids: " + list);
  }
  const auto report = metrics::compare_models(a, b);
  data::write_file(cfg.out_dir() / kSimilarityFile, report.to_csv());
  write_config(cfg, "compare a=" + profiles_a.string() + " b=" + profiles_b.string());
  return report;
}

std::vector<SweepRow> run_sweep_lambda(const config::RunConfig& cfg, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda grid values must be finite and >= 0");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const auto base = cfg.train_config();
  const auto records = data::parse_dataset(cfg.dataset(), base.model.task, base.model.max_length);
  const auto split = data::split_dataset(records, cfg.ratios(), base.seed);
  std::vector<SweepRow> rows;
  for (double l : grid) {
    auto tc = base;
    tc.model.fusion.lambda = l;
    rows.push_back({l, train::train(split, tc).best_val_metric});
  }
  data::write_file(cfg.out_dir() / kSweepFile, format_sweep_csv(rows));
  std::string note = "sweep-lambda grid=";
  for (std::size_t i = 0; i < grid.size(); ++i) note += (i ? "," : "") + text::exact(grid[i]);
  write_config(cfg, note);
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "lambda,val_metric\n";
  for (const auto& r : rows) out += text::fixed(r.lambda) + "," + text::fixed(r.val_metric) + "\n";
  return out;
}

void run_gen_synth(std::size_t count, std::size_t max_length, std::uint64_t seed, const fs::path& output) {
  const auto records = data::generate_synthetic(count, max_length, seed);
  data::write_file(output, data::format_dataset_csv(records, data::TaskKind::Regression));
}

}  // namespace pepco::commands
