#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include <string>

#include "pepco/autodiff.hpp"
#include "pepco/training.hpp"
#include "support.hpp"

namespace testing_support {

using pepco::ad::Param;
using pepco::ad::Shape;
using pepco::ad::Tape;
using pepco::ad::Tensor;
using pepco::ad::Var;

using UnaryOp = std::function<Var(Tape&, Var)>;

// Reduces an op's output to a scalar with fixed random weights so every
// output entry contributes to the gradient.
inline double max_error(const UnaryOp& op, const Tensor& point, std::mt19937_64& gen) {
  Tensor probe_out;
  {
    Tape t;
    probe_out = op(t, t.constant(point)).value();
  }
  const Tensor weights = random_tensor(gen, probe_out.shape());
  auto loss = [&](Tape& t, Var x) {
    Var y = op(t, x);
    return sum(elementwise_mul(y, t.constant(weights)));
  };
  Param p("x", point);
  Tape t;
  t.backward(loss(t, t.watch(p)));
  const auto numeric = numeric_gradient(
      [&](const Tensor& x) {
        Tape tt;
        return loss(tt, tt.constant(x)).value().item();
      },
      point);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) worst = std::max(worst, relative_error(p.grad[i], numeric[i]));
  return worst;
}

struct OpCase {
  const char* name;
  Shape shape;
  UnaryOp op;
  double lo = -1.0, hi = 1.0;
};

inline std::vector<OpCase> op_cases(std::mt19937_64& gen) {
  const Tensor w = random_tensor(gen, {4, 3});
  const Tensor row = random_tensor(gen, {1, 4});
  const Tensor other = random_tensor(gen, {3, 4});
  std::vector<OpCase> cases;
  cases.push_back({"matmul_left", {3, 4}, [w](Tape& t, Var x) { return matmul(x, t.constant(w)); }});
  cases.push_back({"matmul_right", {3, 4}, [other](Tape& t, Var x) { return matmul(t.constant(other), transpose(x)); }});
  cases.push_back({"add_broadcast", {1, 4}, [other](Tape& t, Var x) { return add(t.constant(other), x); }});
  cases.push_back({"sub", {3, 4}, [other](Tape& t, Var x) { return sub(x, t.constant(other)); }});
  cases.push_back({"sub_broadcast", {1, 4}, [other](Tape& t, Var x) { return sub(t.constant(other), x); }});
  cases.push_back({"mul_broadcast", {1, 4}, [other](Tape& t, Var x) { return elementwise_mul(t.constant(other), x); }});
  cases.push_back({"mul_self", {3, 4}, [](Tape&, Var x) { return elementwise_mul(x, x); }});
  cases.push_back({"scale", {3, 4}, [](Tape&, Var x) { return scale(x, -2.5); }});
  cases.push_back({"leaky_relu", {3, 4}, [](Tape&, Var x) { return leaky_relu(x); }});
  cases.push_back({"abs", {3, 4}, [](Tape&, Var x) { return abs(x); }});
  cases.push_back({"exp", {3, 4}, [](Tape&, Var x) { return exp(x); }});
  cases.push_back({"log", {3, 4}, [](Tape&, Var x) { return log(x); }, 0.5, 2.0});
  cases.push_back({"softmax_rows", {3, 4}, [](Tape&, Var x) { return softmax(x, 1); }});
  cases.push_back({"softmax_cols", {3, 4}, [](Tape&, Var x) { return softmax(x, 0); }});
  cases.push_back({"layer_norm", {3, 4}, [](Tape&, Var x) { return layer_norm(x, 1); }});
  cases.push_back({"layer_norm_small_eps", {3, 4}, [](Tape&, Var x) { return layer_norm(x, 1, 1e-5); }});
  cases.push_back({"embedding_gather", {5, 4}, [](Tape&, Var x) {
                     static const std::vector<std::uint32_t> ids{3, 0, 3, 4};
                     return embedding_gather(x, ids);
                   }});
  cases.push_back({"mean_pool_rows", {3, 4}, [](Tape&, Var x) { return mean_pool(x, 0); }});
  cases.push_back({"mean_pool_cols", {3, 4}, [](Tape&, Var x) { return mean_pool(x, 1); }});
  cases.push_back({"concat_cols", {3, 4}, [other](Tape& t, Var x) { return pepco::ad::concat({x, t.constant(other), x}, 1); }});
  cases.push_back({"concat_rows", {3, 4}, [other](Tape& t, Var x) { return pepco::ad::concat({t.constant(other), x}, 0); }});
  cases.push_back({"transpose", {3, 4}, [](Tape&, Var x) { return transpose(x); }});
  cases.push_back({"slice_cols", {3, 4}, [](Tape&, Var x) { return slice_cols(x, 1, 3); }});
  cases.push_back({"slice_rows", {3, 4}, [](Tape&, Var x) { return slice_rows(x, 1, 3); }});
  cases.push_back({"l2_normalize_rows", {3, 4}, [](Tape&, Var x) { return l2_normalize_rows(x); }});
  cases.push_back({"sum", {3, 4}, [](Tape&, Var x) { return sum(x); }});
  cases.push_back({"mean", {3, 4}, [](Tape&, Var x) { return mean(x); }});
  cases.push_back({"dot", {1, 4}, [row](Tape& t, Var x) { return dot(x, t.constant(row)); }});
  cases.push_back({"mse_loss", {3, 4}, [other](Tape& t, Var x) { return mse_loss(x, t.constant(other)); }});
  cases.push_back({"cross_entropy", {3, 4}, [](Tape&, Var x) {
                     static const std::vector<int> labels{2, 0, 3};
                     return cross_entropy_loss(x, labels);
                   }});
  return cases;
}


struct CompositeError {
  double worst = 0.0;
  std::string where;
};

// Total training loss of a two-sample batch on a tiny co-model whose
// parameters are drawn from `point_seed`, checked parameter by parameter
// against central differences. Random points rather than the init: zero
// biases put activations on the leaky-relu kink.
inline CompositeError composite_gradient_error(pepco::fusion::FusionKind kind, std::uint64_t point_seed) {
  using namespace pepco;
  model::ModelConfig cfg;
  cfg.hidden = 4;
  cfg.heads = 2;
  cfg.ff_hidden = 6;
  cfg.seq_layers = 1;
  cfg.graph_layers = 2;
  cfg.max_length = 8;
  cfg.fusion.lambda = 0.7;
  cfg.fusion.kind = kind;
  const auto recs = std::vector<data::PeptideRecord>{{"a", "WFK", 0.6}, {"b", "GAY", 0.3}};
  model::CoModel m(cfg, 5);
  std::mt19937_64 gen(point_seed);
  for (auto& p : m.params().all()) p.value = random_tensor(gen, p.value.shape(), -0.6, 0.6);
  const auto samples = train::prepare_samples(recs, true);
  const std::vector<const train::Sample*> batch{&samples[0], &samples[1]};
  auto eval = [&]() {
    Tape t;
    model::Binder bind(t, false);
    return train::batch_loss(bind, m, batch).total.value().item();
  };
  m.params().zero_grad();
  {
    Tape t;
    model::Binder bind(t, true);
    t.backward(train::batch_loss(bind, m, batch).total);
  }
  CompositeError r;
  for (auto& p : m.params().all()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + 1e-5;
      const double up = eval();
      p.value[i] = orig - 1e-5;
      const double down = eval();
      p.value[i] = orig;
      const double numeric = (up - down) / 2e-5;
      const double err = relative_error(p.grad[i], numeric);
      if (err > r.worst) {
        r.worst = err;
        r.where = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(p.grad[i]) + " numeric " +
                  std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace testing_support
