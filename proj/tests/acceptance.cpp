// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero when a gating criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "gradient_cases.hpp"
#include "oracles.hpp"
#include "pepco/attribution.hpp"
#include "pepco/commands.hpp"
#include "pepco/config.hpp"
#include "pepco/data.hpp"
#include "pepco/fusion.hpp"
#include "pepco/metrics.hpp"
#include "support.hpp"

using namespace pepco;
using namespace testing_support;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << title << "  [" << detail << "]"
            << std::endl;
}

void info(int id, const std::string& text) { std::cout << "criterion " << id << ": INFO  " << text << std::endl; }

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double profile_sum(const attr::AttributionProfile& p) { return std::accumulate(p.scores.begin(), p.scores.end(), 0.0); }

// Pooled mean attribution over every occurrence of an aromatic letter and of
// every other letter.
std::pair<double, double> aromatic_split(const std::vector<attr::AttributionProfile>& profiles) {
  double aro = 0.0, other = 0.0;
  std::size_t n_aro = 0, n_other = 0;
  for (const auto& s : metrics::residue_stats(profiles)) {
    const double mass = s.mean_attribution * static_cast<double>(s.occurrences);
    if (s.residue == 'F' || s.residue == 'W' || s.residue == 'Y') {
      aro += mass;
      n_aro += s.occurrences;
    } else {
      other += mass;
      n_other += s.occurrences;
    }
  }
  return {aro / static_cast<double>(n_aro), other / static_cast<double>(n_other)};
}

void gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  double worst_primitive = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  for (const auto& c : op_cases(gen)) {
    for (int trial = 0; trial < 10; ++trial) {
      const double e = max_error(c.op, random_tensor(gen, c.shape, c.lo, c.hi), gen);
      ++checks;
      if (e > worst_primitive) {
        worst_primitive = e;
        worst_name = c.name;
      }
    }
  }
  double worst_composite = 0.0;
  for (std::uint64_t point = 1; point <= 10; ++point) {
    worst_composite = std::max(worst_composite, composite_gradient_error(fusion::FusionKind::RepCon, point).worst);
  }
  const double secs = seconds_since(t0);
  report(1, worst_primitive <= 1e-4 && worst_composite <= 1e-3 && secs < 60.0,
         "gradients match central differences",
         std::to_string(checks) + " primitive checks, worst rel " + num(worst_primitive) + " (" + worst_name +
             ") <= 1e-4; composite worst rel " + num(worst_composite) + " <= 1e-3 over 10 points; " + num(secs) +
             " s < 60 s");
}

void cbp() {
  std::mt19937_64 gen(77);
  double worst = 0.0;
  for (std::size_t d : {4u, 16u, 64u}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = random_tensor(gen, {1, d}), g = random_tensor(gen, {1, d});
      ad::Tape t;
      const auto got = fusion::fuse_cbp(t.constant(s), t.constant(g)).value();
      const auto want = direct_circular_convolution(s.values(), g.values());
      for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::fabs(got[i] - want[i]));
    }
  }
  report(2, worst <= 1e-8, "CBP equals direct circular convolution",
         "300 pairs, d in {4,16,64}, max abs err " + num(worst) + " <= 1e-8");
}

void infonce() {
  auto value = [](const ad::Tensor& s, const ad::Tensor& g, double tau) {
    ad::Tape t;
    return fusion::infonce_loss(t.constant(s), t.constant(g), tau).value().item();
  };
  const auto ortho = ad::Tensor::matrix(2, 2, {1, 0, 0, 1});
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  double worst = std::fabs(value(ortho, ortho, 1.0) - expect);
  for (std::size_t B : {2u, 3u, 7u}) {
    const ad::Tensor same({B, 4}, 0.37);
    worst = std::max(worst, std::fabs(value(same, same, 0.5) - std::log(2.0 * B - 1.0)));
  }
  report(3, worst <= 1e-9 && std::fabs(expect - 0.5514) < 5e-5, "InfoNCE analytic cases",
         "orthonormal " + num(expect) + ", identical reps log(2B-1) for B=2,3,7; max abs err " + num(worst) +
             " <= 1e-9");
}

void metric_oracles() {
  std::mt19937_64 gen(123);
  std::uniform_int_distribution<std::size_t> len(2, 50);
  double worst = 0.0;
  std::size_t top_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(gen);
    const auto a = random_profile(gen, n), b = random_profile(gen, n);
    worst = std::max({worst, std::fabs(metrics::kendall_tau(a, b) - kendall_oracle(a, b)),
                      std::fabs(metrics::spearman_footrule(a, b) - footrule_oracle(a, b)),
                      std::fabs(metrics::js_divergence(a, b) - js_oracle(a, b)),
                      std::fabs(metrics::cosine_similarity(a, b) - cosine_oracle(a, b))});
    for (std::size_t i : {std::size_t{1}, std::size_t{2}}) {
      top_mismatch += metrics::top_i_overlaps(a, b, i) != top_overlap_oracle(a, b, i);
    }
  }
  // Model A ranks F(1), E(3) highest; model B ranks F(1), R(4).
  const std::vector<double> fler_a{0.40, 0.10, 0.30, 0.20}, fler_b{0.35, 0.05, 0.15, 0.45};
  const bool fler = metrics::top_i_overlaps(fler_a, fler_b, 2);
  report(7, worst <= 1e-12 && top_mismatch == 0 && fler, "similarity metrics match brute-force oracles",
         "200 random pairs, max abs err " + num(worst) + " <= 1e-12, top-i mismatches " +
             std::to_string(top_mismatch) + "; FLER top-2 overlap " + (fler ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "pepco_acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);

  gradients();
  cbp();
  infonce();

  // Synthetic end-to-end run with the default configuration.
  const fs::path dataset = work / "synth.csv";
  commands::run_gen_synth(2000, 10, 7, dataset);
  config::RunConfig cfg;
  cfg.set("dataset", dataset.string());
  cfg.set("out_dir", (work / "run_a").string());
  const auto t_train = Clock::now();
  const auto run_a = commands::run_train(cfg);
  const double train_secs = seconds_since(t_train);
  auto cfg_b = cfg;
  cfg_b.set("out_dir", (work / "run_b").string());
  commands::run_train(cfg_b);

  const auto tc = cfg.train_config();
  const auto split = data::split_dataset(data::parse_dataset(dataset, tc.model.task, tc.model.max_length),
                                         cfg.ratios(), tc.seed);
  const auto model = model::load_model(run_a.checkpoint);

  // Completeness on 20 test peptides, gated on the sequence route.
  double worst_seq = 0.0, worst_graph = 0.0;
  std::size_t graph_over = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    for (auto route : {attr::Route::Seq, attr::Route::Graph}) {
      const auto prob = attr::make_problem(model, split.test[i], route);
      const auto sal = attr::integrated_gradients(prob.loss, prob.embedded, attr::kDefaultSteps);
      const double gap = attr::completeness(prob.loss, prob.embedded, sal).relative_gap;
      if (route == attr::Route::Seq) {
        worst_seq = std::max(worst_seq, gap);
      } else {
        worst_graph = std::max(worst_graph, gap);
        graph_over += gap > 0.01;
      }
    }
  }
  std::mt19937_64 gen(6);
  double linear_err = 0.0;
  const auto h = random_tensor(gen, {6, 5}), w = random_tensor(gen, {6, 5});
  const attr::EmbeddingLoss linear = [&w](ad::Tape& t, ad::Var x) {
    return ad::sum(ad::elementwise_mul(x, t.constant(w)));
  };
  for (std::size_t m : {1u, 10u, 300u}) {
    const auto s = attr::integrated_gradients(linear, h, m);
    for (std::size_t i = 0; i < h.size(); ++i) linear_err = std::max(linear_err, std::fabs(s[i] - h[i] * w[i]));
  }
  report(4, worst_seq <= 0.01 && linear_err <= 1e-12, "integrated-gradients completeness",
         "trained model, sequence route, 20 test peptides, m=300: worst relative gap " + num(worst_seq) +
             " <= 0.01; linear model max abs err " + num(linear_err) + " <= 1e-12 for m=1,10,300");
  info(4, "graph route, same 20 peptides: worst relative gap " + num(worst_graph) + ", " +
              std::to_string(graph_over) + "/20 above 0.01 (not gating)");

  // Profiles for every test peptide on both routes.
  const auto seq_profiles = attr::attribute_dataset(model, split.test, attr::Route::Seq);
  const auto graph_profiles = attr::attribute_dataset(model, split.test, attr::Route::Graph);
  std::size_t total = 0, normalized = 0;
  double worst_sum = 0.0;
  for (const auto* set : {&seq_profiles, &graph_profiles}) {
    for (const auto& p : *set) {
      ++total;
      const double err = std::fabs(profile_sum(p) - 1.0);
      worst_sum = std::max(worst_sum, err);
      normalized += err <= 1e-6;
    }
  }
  report(5, normalized == total, "attribution profiles sum to one",
         std::to_string(normalized) + "/" + std::to_string(total) + " within 1e-6, worst " + num(worst_sum));

  // Sequence-only inference on the RepCon checkpoint.
  data::write_file(work / "test.csv", data::format_dataset_csv(split.test, tc.model.task));
  auto cfg_inf = cfg;
  cfg_inf.set("out_dir", (work / "infer").string());
  bool infer_ok = false;
  std::string infer_detail;
  try {
    const auto s = commands::run_infer(cfg_inf, run_a.checkpoint, work / "test.csv", true);
    infer_ok = s.graph_builds == 0 && s.graph_encodes == 0 && s.predictions == split.test.size();
    infer_detail = std::to_string(s.predictions) + " predictions, graph builds " + std::to_string(s.graph_builds) +
                   ", graph encodes " + std::to_string(s.graph_encodes);
  } catch (const std::exception& e) {
    infer_detail = e.what();
  }
  report(6, infer_ok, "RepCon inference never touches the graph", infer_detail);

  metric_oracles();

  const double mae = run_a.test.mae.value_or(NAN);
  const auto [aro_seq, other_seq] = aromatic_split(seq_profiles);
  report(8, train_secs < 600.0 && mae <= 0.05 && aro_seq > other_seq, "synthetic end-to-end",
         "train " + num(train_secs) + " s < 600 s; test MAE " + num(mae) +
             " <= 0.05; sequence-route mean attribution F/W/Y " + num(aro_seq) + " > other " + num(other_seq));
  // Graph route: a peptide whose prediction nearly equals the zero-input
  // prediction has a near-zero signed total, and its normalized scores blow up.
  std::vector<attr::AttributionProfile> well_posed;
  for (std::size_t i = 0; i < graph_profiles.size(); ++i) {
    const auto prob = attr::make_problem(model, split.test[i], attr::Route::Graph);
    ad::Tape t_h, t_0;
    const double delta = prob.loss(t_h, t_h.constant(prob.embedded)).value().item() -
                         prob.loss(t_0, t_0.constant(ad::Tensor(prob.embedded.shape()))).value().item();
    if (std::fabs(delta) >= 0.02) well_posed.push_back(graph_profiles[i]);
  }
  const auto [aro_graph, other_graph] = aromatic_split(graph_profiles);
  const auto [aro_wp, other_wp] = aromatic_split(well_posed);
  info(8, "graph route mean attribution F/W/Y " + num(aro_graph) + " vs other " + num(other_graph) + " over all " +
              std::to_string(graph_profiles.size()) + " profiles; " + num(aro_wp) + " vs " + num(other_wp) +
              " over the " + std::to_string(well_posed.size()) + " with |L(H) - L(0)| >= 0.02 (not gating)");

  auto cfg_sweep = cfg;
  cfg_sweep.set("out_dir", (work / "sweep").string());
  const auto rows = commands::run_sweep_lambda(cfg_sweep, {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1});
  double best_positive = INFINITY, at_zero = NAN;
  double best_lambda = 0.0;
  bool finite = true;
  std::string table;
  for (const auto& r : rows) {
    finite = finite && std::isfinite(r.val_metric);
    table += (table.empty() ? "" : ", ") + num(r.lambda) + ":" + num(r.val_metric);
    if (r.lambda == 0.0) {
      at_zero = r.val_metric;
    } else if (r.val_metric < best_positive) {
      best_positive = r.val_metric;
      best_lambda = r.lambda;
    }
  }
  report(9, finite && best_positive <= at_zero, "contrastive weight ablation",
         "val MSE by lambda {" + table + "}; best lambda>0 " + num(best_lambda) + " gives " + num(best_positive) +
             " <= lambda=0 " + num(at_zero) + "; all finite");

  const bool same_curve = data::read_file(work / "run_a" / commands::kLossCurveFile) ==
                          data::read_file(work / "run_b" / commands::kLossCurveFile);
  report(10, same_curve, "rerun gives a byte-identical loss curve",
         same_curve ? "loss_curve.csv identical" : "loss_curve.csv differs");

  std::cout << "criterion 11: SKIP  public AP-style dataset comparison  [optional; no public dataset in this "
               "environment; full-scale reference MAE 3.62E-2 recorded, not gating]"
            << std::endl;

  std::cout << (failures == 0 ? "acceptance: all gating criteria passed" : "acceptance: gating failures")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
