#include "pepco/attribution.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "pepco/error.hpp"
#include "support.hpp"

using namespace pepco;
using namespace pepco::attr;
using ad::Tensor;
using ad::Var;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.ff_hidden = 16;
  c.seq_layers = 1;
  c.graph_layers = 2;
  c.max_length = 12;
  return c;
}

double profile_sum(const AttributionProfile& p) { return std::accumulate(p.scores.begin(), p.scores.end(), 0.0); }

// L(H) = sum(W o H).
EmbeddingLoss linear_loss(const Tensor& w) {
  return [w](ad::Tape& t, Var h) { return ad::sum(ad::elementwise_mul(h, t.constant(w))); };
}

// L(H) = sum(exp(0.5 * leaky(H W1) W2)), smooth away from the kink once W1
// keeps pre-activations positive along the path.
struct TwoLayer {
  Tensor w1, w2;

  EmbeddingLoss loss() const {
    return [this](ad::Tape& t, Var h) {
      const Var a = ad::exp(ad::scale(ad::matmul(h, t.constant(w1)), 0.5));
      return ad::sum(ad::exp(ad::scale(ad::matmul(a, t.constant(w2)), 0.3)));
    };
  }

  // Plain-loop forward used as the completeness oracle.
  double eval(const Tensor& h) const {
    const std::size_t n = h.rows(), d = h.cols(), k = w1.cols(), o = w2.cols();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> a(k);
      for (std::size_t j = 0; j < k; ++j) {
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) z += h.at(r, i) * w1.at(i, j);
        a[j] = std::exp(0.5 * z);
      }
      for (std::size_t q = 0; q < o; ++q) {
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += a[j] * w2.at(j, q);
        total += std::exp(0.3 * z);
      }
    }
    return total;
  }
};

double oracle_gap(const TwoLayer& f, const Tensor& h, const Tensor& saliency) {
  const double delta = f.eval(h) - f.eval(Tensor(h.shape()));
  const double s = std::accumulate(saliency.values().begin(), saliency.values().end(), 0.0);
  return std::fabs(s - delta) / std::fabs(delta);
}

}  // namespace

TEST(AttributionLoss, RegressionAndClassification) {
  ad::Tape t;
  EXPECT_DOUBLE_EQ(attribution_loss(t.constant(Tensor::matrix(1, 1, {-2.3})), data::TaskKind::Regression).value().item(),
                   2.3);
  const Var uniform = t.constant(Tensor::matrix(1, 3, {0.4, 0.4, 0.4}));
  EXPECT_NEAR(attribution_loss(uniform, data::TaskKind::Classification, 1).value().item(), std::log(3.0), 1e-14);
  const Var sharp = t.constant(Tensor::matrix(1, 3, {-5.0, 12.0, -5.0}));
  EXPECT_LT(attribution_loss(sharp, data::TaskKind::Classification, 1).value().item(), 1e-6);
  EXPECT_THROW(attribution_loss(uniform, data::TaskKind::Classification), ContractError);
}

TEST(IntegratedGradients, LinearModelIsExactForAnyStepCount) {
  std::mt19937_64 gen(1);
  const Tensor h = testing_support::random_tensor(gen, {5, 4}, -1.0, 1.0);
  const Tensor w = testing_support::random_tensor(gen, {5, 4}, -1.0, 1.0);
  for (std::size_t m : {1, 2, 7, 50, 300}) {
    const Tensor s = integrated_gradients(linear_loss(w), h, m);
    for (std::size_t i = 0; i < h.size(); ++i) ASSERT_NEAR(s[i], h[i] * w[i], 1e-14) << "m=" << m;
  }
}

TEST(IntegratedGradients, OneStepIsGradientTimesInput) {
  std::mt19937_64 gen(2);
  TwoLayer f{testing_support::random_tensor(gen, {3, 4}, -0.5, 0.5),
             testing_support::random_tensor(gen, {4, 2}, -0.5, 0.5)};
  const Tensor h = testing_support::random_tensor(gen, {2, 3}, -1.0, 1.0);
  const Tensor s = integrated_gradients(f.loss(), h, 1);
  const auto g = testing_support::numeric_gradient([&](const Tensor& x) { return f.eval(x); }, h);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(s[i], h[i] * g[i], 1e-7);
}

TEST(IntegratedGradients, CompletenessAndMonotoneRefinement) {
  // Positive weights and inputs keep L increasing along the path, so the
  // relative gap never divides by a near-cancelled L(H) - L(0).
  std::mt19937_64 gen(3);
  TwoLayer f{testing_support::random_tensor(gen, {4, 6}, 0.05, 0.7),
             testing_support::random_tensor(gen, {6, 3}, 0.05, 0.7)};
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor h = testing_support::random_tensor(gen, {3, 4}, 0.1, 1.0);
    const double g300 = oracle_gap(f, h, integrated_gradients(f.loss(), h, 300));
    const double g10 = oracle_gap(f, h, integrated_gradients(f.loss(), h, 10));
    EXPECT_LE(g300, 0.01) << "trial " << trial;
    EXPECT_LE(g300, g10) << "trial " << trial;
    // The library's own completeness report agrees with the oracle.
    const Tensor s = integrated_gradients(f.loss(), h, 300);
    EXPECT_NEAR(completeness(f.loss(), h, s).relative_gap, g300, 1e-12);
  }
}

TEST(IntegratedGradients, ModelRoutesRefineMonotonically) {
  const model::CoModel m(small_config(), 11);
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<std::size_t> len(2, 8), letter(0, data::kAlphabetSize - 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::string seq;
    for (std::size_t i = len(gen); i > 0; --i) seq += data::kAlphabet[letter(gen)];
    const data::PeptideRecord rec{"p", seq, 0.0};
    for (Route route : {Route::Seq, Route::Graph}) {
      const auto prob = make_problem(m, rec, route);
      const double g300 = completeness(prob.loss, prob.embedded, integrated_gradients(prob.loss, prob.embedded, 300))
                              .relative_gap;
      const double g10 =
          completeness(prob.loss, prob.embedded, integrated_gradients(prob.loss, prob.embedded, 10)).relative_gap;
      // Untrained leaky-relu routes are near positively homogeneous, where
      // both gaps sit at rounding level.
      EXPECT_LE(g300, g10 + 1e-12) << seq << " route " << to_string(route);
    }
  }
}

TEST(IntegratedGradients, RejectsZeroSteps) {
  const Tensor h(ad::Shape{1, 1}, 1.0);
  EXPECT_THROW(integrated_gradients(linear_loss(h), h, 0), ContractError);
}

TEST(Aggregate, SequenceAndGraphExamples) {
  const std::vector<std::uint32_t> rows{0, 1};
  const auto p = aggregate_to_residues(Tensor::matrix(2, 2, {1, 1, 2, 2}), rows, "GA", "x");
  ASSERT_EQ(p.scores.size(), 2u);
  EXPECT_NEAR(p.scores[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.scores[1], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(p.id, "x");
  EXPECT_EQ(p.residues, "GA");

  const std::vector<std::uint32_t> beads{0, 0, 1};
  const auto g = aggregate_to_residues(Tensor::matrix(3, 1, {0.3, 0.2, 0.5}), beads, "WG");
  EXPECT_NEAR(g.scores[0], 0.5, 1e-15);
  EXPECT_NEAR(g.scores[1], 0.5, 1e-15);
}

TEST(Aggregate, SignedTotalAndErrors) {
  const std::vector<std::uint32_t> rows{0, 1};
  const auto p = aggregate_to_residues(Tensor::matrix(2, 1, {-1.0, 3.0}), rows, "GA");
  EXPECT_DOUBLE_EQ(p.scores[0], -0.5);
  EXPECT_DOUBLE_EQ(p.scores[1], 1.5);
  EXPECT_THROW(aggregate_to_residues(Tensor::matrix(2, 1, {-1.0, 1.0}), rows, "GA"), NumericError);
  const std::vector<std::uint32_t> partial{0, 0};
  EXPECT_THROW(aggregate_to_residues(Tensor::matrix(2, 1, {1.0, 1.0}), partial, "GA"), ContractError);
  const std::vector<std::uint32_t> short_map{0};
  EXPECT_THROW(aggregate_to_residues(Tensor::matrix(2, 1, {1.0, 1.0}), short_map, "GA"), ContractError);
}

TEST(AttributeDataset, NormalizedAndDeterministic) {
  const model::CoModel m(small_config(), 5);
  const std::vector<data::PeptideRecord> recs = {{"1", "WFCW", 0.0}, {"2", "GAK", 0.0}, {"3", "YY", 0.0}};
  for (Route route : {Route::Seq, Route::Graph}) {
    const auto a = attribute_dataset(m, recs, route, 60);
    const auto b = attribute_dataset(m, recs, route, 60);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].id, recs[i].id);
      EXPECT_EQ(a[i].scores.size(), recs[i].sequence.size());
      EXPECT_NEAR(profile_sum(a[i]), 1.0, 1e-6);
      EXPECT_EQ(a[i].scores, b[i].scores);
    }
  }
}

TEST(AttributeDataset, LinearProfilesIndependentOfStepCount) {
  std::mt19937_64 gen(6);
  const Tensor h = testing_support::random_tensor(gen, {4, 3}, 0.1, 1.0);
  const Tensor w = testing_support::random_tensor(gen, {4, 3}, 0.1, 1.0);
  const std::vector<std::uint32_t> rows{0, 1, 2, 3};
  const auto a = aggregate_to_residues(integrated_gradients(linear_loss(w), h, 50), rows, "WFCW");
  const auto b = aggregate_to_residues(integrated_gradients(linear_loss(w), h, 300), rows, "WFCW");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.scores[i], b.scores[i], 1e-14);
}

TEST(AttributeDataset, RouteErrors) {
  auto cfg = small_config();
  cfg.arch = model::Architecture::SeqOnly;
  const model::CoModel seq_only(cfg, 1);
  const data::PeptideRecord rec{"1", "GA", 0.0};
  EXPECT_NO_THROW(attribute_record(seq_only, rec, Route::Seq, 5));
  EXPECT_THROW(attribute_record(seq_only, rec, Route::Graph, 5), ContractError);

  auto concat = small_config();
  concat.fusion.kind = fusion::FusionKind::Concat;
  const model::CoModel baseline(concat, 1);
  EXPECT_THROW(attribute_record(baseline, rec, Route::Seq, 5), ContractError);

  EXPECT_EQ(parse_route("graph"), Route::Graph);
  EXPECT_THROW(parse_route("atoms"), ConfigError);
}

TEST(ProfilesCsv, FormatAndRoundTrip) {
  const std::vector<AttributionProfile> ps = {{"wfcw", "WFCW", {0.28, 0.28, 0.07, 0.37}}, {"k", "K", {1.0}}};
  const std::string csv = format_profiles_csv(ps);
  EXPECT_EQ(csv.rfind("id,position,residue,score\nwfcw,1,W,", 0), 0u);
  const auto back = parse_profiles_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].residues, "WFCW");
  EXPECT_EQ(back[1].id, "k");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back[0].scores[i], ps[0].scores[i], 1e-9);
  EXPECT_THROW(parse_profiles_csv("id,pos,residue,score\n"), ParseError);
  EXPECT_THROW(parse_profiles_csv("id,position,residue,score\na,2,W,1.0\n"), ParseError);
}

TEST(ProfilesCsv, TrainedStyleWfcwProfile) {
  const model::CoModel m(small_config(), 3);
  const auto p = attribute_record(m, {"wfcw", "WFCW", 0.0}, Route::Seq);
  ASSERT_EQ(p.scores.size(), 4u);
  EXPECT_NEAR(profile_sum(p), 1.0, 1e-6);
  const auto csv = format_profiles_csv({p});
  EXPECT_NE(csv.find("wfcw,4,W,"), std::string::npos);
}
