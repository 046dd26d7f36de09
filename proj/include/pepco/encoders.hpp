#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pepco/autodiff.hpp"
#include "pepco/data.hpp"
#include "pepco/fusion.hpp"

namespace pepco::model {

// Which routes a model carries. Backbone models train one route alone and
// are the reference points for attribution comparisons.
enum class Architecture { CoModel, SeqOnly, GraphOnly };

Architecture parse_architecture(std::string_view text);
std::string_view to_string(Architecture arch);

struct ModelConfig {
  data::TaskKind task = data::TaskKind::Regression;
  std::size_t num_classes = 2;  // classification only
  std::size_t hidden = 64;
  std::size_t seq_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 128;
  std::size_t graph_layers = 3;
  std::size_t pred_layers = 2;
  std::size_t max_length = data::kDefaultMaxLength;
  Architecture arch = Architecture::CoModel;
  fusion::FusionConfig fusion;

  std::size_t output_width() const { return task == data::TaskKind::Regression ? 1 : num_classes; }
  bool has_seq_route() const { return arch != Architecture::GraphOnly; }
  bool has_graph_route() const { return arch != Architecture::SeqOnly; }
  // Baselines feed a fused vector to one shared predictor.
  bool uses_fused_predictor() const {
    return arch == Architecture::CoModel && fusion.kind != fusion::FusionKind::RepCon;
  }
  void validate() const;
};

// Named parameters with stable addresses.
class ParameterSet {
 public:
  ad::Param& add(std::string name, ad::Tensor value);
  ad::Param& get(const std::string& name);
  const ad::Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::deque<ad::Param>& all() { return params_; }
  const std::deque<ad::Param>& all() const { return params_; }
  std::vector<const ad::Param*> pointers() const;
  void zero_grad();

 private:
  std::deque<ad::Param> params_;
  std::map<std::string, std::size_t> index_;
};

struct AttentionBlockParams {
  ad::Param* ln1_gain;
  ad::Param* ln1_bias;
  ad::Param* wq;
  ad::Param* wk;
  ad::Param* wv;
  ad::Param* wo;
  ad::Param* ln2_gain;
  ad::Param* ln2_bias;
  ad::Param* ff1_w;
  ad::Param* ff1_b;
  ad::Param* ff2_w;
  ad::Param* ff2_b;
};

struct SeqEncoderParams {
  ad::Param* token_embedding;
  ad::Param* position_embedding;
  std::vector<AttentionBlockParams> blocks;
  ad::Param* final_gain;
  ad::Param* final_bias;
  std::size_t heads;
};

struct GraphLayerParams {
  ad::Param* weight;  // (2d, d)
  ad::Param* bias;    // (d)
};

struct GraphEncoderParams {
  ad::Param* bead_embedding;
  std::vector<GraphLayerParams> layers;
};

struct DenseParams {
  ad::Param* weight;
  ad::Param* bias;
};

struct PredictorParams {
  std::vector<DenseParams> layers;
  std::size_t input_width;
};

// Parameter bundle for one model: encoders, predictors and fusion settings.
class CoModel {
 public:
  // Fresh model with seeded uniform(+-sqrt(1/fan_in)) weights and zero biases.
  CoModel(ModelConfig cfg, std::uint64_t seed);
  // Rebuilds a model from stored parameters; every expected name must exist
  // with the expected shape.
  CoModel(ModelConfig cfg, std::vector<ad::Param> stored);

  CoModel(const CoModel& other);
  CoModel& operator=(const CoModel& other);
  CoModel(CoModel&&) = default;
  CoModel& operator=(CoModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  const SeqEncoderParams& seq() const;
  const GraphEncoderParams& graph() const;
  const PredictorParams& pred_seq() const;
  const PredictorParams& pred_graph() const;
  const PredictorParams& pred_fused() const;

  // Copies parameter values (not gradients) from a model of identical layout.
  void load_values(const CoModel& other);

 private:
  void build(std::optional<std::uint64_t> seed);

  ModelConfig cfg_;
  ParameterSet params_;
  std::optional<SeqEncoderParams> seq_;
  std::optional<GraphEncoderParams> graph_;
  std::optional<PredictorParams> pred_seq_, pred_graph_, pred_fused_;
};

void save_model(const std::filesystem::path& path, const CoModel& model);
CoModel load_model(const std::filesystem::path& path);
// Sidecar holding the architecture next to a checkpoint.
std::filesystem::path model_meta_path(const std::filesystem::path& checkpoint);

// ---------------------------------------------------------------------------
// Forward passes.

// Brings parameters onto a tape once per tape: watched (gradient flows back
// into Param::grad) when training, constant otherwise.
class Binder {
 public:
  Binder(ad::Tape& tape, bool track_gradients) : tape_(tape), track_(track_gradients) {}

  ad::Var operator()(ad::Param* p);
  ad::Tape& tape() { return tape_; }

 private:
  ad::Tape& tape_;
  bool track_;
  std::unordered_map<ad::Param*, ad::Var> bound_;
};

// Row-normalized adjacency: row i holds 1/deg(i) at each neighbor, zeros for
// isolated nodes, so product with node features gives neighbor means.
ad::Tensor neighbor_mean_matrix(const data::BeadGraph& graph);

// Token plus position embeddings, (n, d).
ad::Var seq_embed(Binder& bind, const SeqEncoderParams& p, const data::TokenSequence& seq);
// Attention blocks and mean readout on an embedded sequence, (1, d).
ad::Var transformer_from_embedding(Binder& bind, const SeqEncoderParams& p, ad::Var embedded);
ad::Var transformer_encode(Binder& bind, const SeqEncoderParams& p, const data::TokenSequence& seq);

ad::Var graph_embed(Binder& bind, const GraphEncoderParams& p, const data::BeadGraph& graph);
ad::Var graphsage_from_embedding(Binder& bind, const GraphEncoderParams& p, ad::Var embedded,
                                 const ad::Tensor& neighbor_mean);
ad::Var graphsage_encode(Binder& bind, const GraphEncoderParams& p, const data::BeadGraph& graph);

// Number of graph-encoder forward passes in this process.
std::uint64_t graph_encode_count();

ad::Var mlp_predict(Binder& bind, const PredictorParams& p, ad::Var h);

}  // namespace pepco::model
