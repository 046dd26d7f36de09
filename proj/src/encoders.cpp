#include "pepco/encoders.hpp"

#include <atomic>
#include <cmath>

#include "pepco/checkpoint.hpp"
#include "pepco/error.hpp"
#include "pepco/random.hpp"
#include "pepco/text.hpp"

namespace pepco::model {

using ad::Param;
using ad::Tensor;
using ad::Var;

namespace {

std::atomic<std::uint64_t> g_graph_encodes{0};

enum class Init { Uniform, Zeros, Ones };

}  // namespace

Architecture parse_architecture(std::string_view text) {
  if (text == "co") return Architecture::CoModel;
  if (text == "seq") return Architecture::SeqOnly;
  if (text == "graph") return Architecture::GraphOnly;
  throw ConfigError("unknown model '" + std::string(text) + "' (expected co|seq|graph)");
}

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::CoModel: return "co";
    case Architecture::SeqOnly: return "seq";
    case Architecture::GraphOnly: return "graph";
  }
  return "co";
}

void ModelConfig::validate() const {
  if (hidden == 0) throw ConfigError("hidden must be positive");
  if (heads == 0 || hidden % heads != 0) throw ConfigError("heads must divide hidden");
  if (seq_layers == 0 || graph_layers == 0) throw ConfigError("layer counts must be >= 1");
  if (pred_layers == 0) throw ConfigError("pred_layers must be >= 1");
  if (ff_hidden == 0) throw ConfigError("ff_hidden must be positive");
  if (max_length == 0) throw ConfigError("max_length must be positive");
  if (task == data::TaskKind::Classification && num_classes < 2) {
    throw ConfigError("classification needs num_classes >= 2");
  }
  fusion.validate();
}

// ---------------------------------------------------------------------------

Param& ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

Param& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return params_[it->second];
}

const Param& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return params_[it->second];
}

std::vector<const Param*> ParameterSet::pointers() const {
  std::vector<const Param*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------

CoModel::CoModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build(seed);
}

CoModel::CoModel(ModelConfig cfg, std::vector<Param> stored) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t count = stored.size();
  for (auto& p : stored) params_.add(std::move(p.name), std::move(p.value));
  build(std::nullopt);
  if (params_.all().size() != count) {
    throw ParseError("checkpoint holds parameters this architecture does not use");
  }
}

CoModel::CoModel(const CoModel& other) : cfg_(other.cfg_) {
  for (const auto& p : other.params_.all()) params_.add(p.name, p.value);
  build(std::nullopt);
}

CoModel& CoModel::operator=(const CoModel& other) {
  if (this != &other) {
    CoModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void CoModel::load_values(const CoModel& other) {
  for (auto& p : params_.all()) {
    const Param& src = other.params_.get(p.name);
    if (src.value.shape() != p.value.shape()) throw ShapeError("layout mismatch at '" + p.name + "'");
    p.value = src.value;
  }
}

void CoModel::build(std::optional<std::uint64_t> seed) {
  auto make = [&](const std::string& name, ad::Shape shape, Init init, std::size_t fan_in) -> Param* {
    if (params_.contains(name)) {
      Param& p = params_.get(name);
      if (p.value.shape() != shape) {
        throw ParseError("parameter '" + name + "' has shape " + ad::shape_string(p.value.shape()) +
                         ", expected " + ad::shape_string(shape));
      }
      p.zero_grad();
      return &p;
    }
    if (!seed) throw ParseError("checkpoint is missing parameter '" + name + "'");
    Tensor t(std::move(shape));
    if (init == Init::Ones) t.fill(1.0);
    if (init == Init::Uniform) {
      Rng rng(derive_seed(*seed, name));
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (double& v : t.values()) v = rng.uniform(-bound, bound);
    }
    return &params_.add(name, std::move(t));
  };
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    return DenseParams{make(prefix + ".weight", {in, out}, Init::Uniform, in),
                       make(prefix + ".bias", {out}, Init::Zeros, in)};
  };
  auto predictor = [&](const std::string& prefix, std::size_t in) {
    PredictorParams p{{}, in};
    std::size_t width = in;
    for (std::size_t l = 0; l < cfg_.pred_layers; ++l) {
      const bool last = l + 1 == cfg_.pred_layers;
      const std::size_t out = last ? cfg_.output_width() : cfg_.hidden;
      p.layers.push_back(dense(prefix + ".layer" + std::to_string(l), width, out));
      width = out;
    }
    return p;
  };

  const std::size_t d = cfg_.hidden;
  if (cfg_.has_seq_route()) {
    SeqEncoderParams s{};
    s.heads = cfg_.heads;
    s.token_embedding = make("seq.token_embedding", {data::kAlphabetSize, d}, Init::Uniform, d);
    s.position_embedding = make("seq.position_embedding", {cfg_.max_length, d}, Init::Uniform, d);
    for (std::size_t l = 0; l < cfg_.seq_layers; ++l) {
      const std::string b = "seq.block" + std::to_string(l);
      AttentionBlockParams blk{};
      blk.ln1_gain = make(b + ".ln1.gain", {d}, Init::Ones, d);
      blk.ln1_bias = make(b + ".ln1.bias", {d}, Init::Zeros, d);
      blk.wq = make(b + ".attn.wq", {d, d}, Init::Uniform, d);
      blk.wk = make(b + ".attn.wk", {d, d}, Init::Uniform, d);
      blk.wv = make(b + ".attn.wv", {d, d}, Init::Uniform, d);
      blk.wo = make(b + ".attn.wo", {d, d}, Init::Uniform, d);
      blk.ln2_gain = make(b + ".ln2.gain", {d}, Init::Ones, d);
      blk.ln2_bias = make(b + ".ln2.bias", {d}, Init::Zeros, d);
      auto ff1 = dense(b + ".ff1", d, cfg_.ff_hidden);
      auto ff2 = dense(b + ".ff2", cfg_.ff_hidden, d);
      blk.ff1_w = ff1.weight;
      blk.ff1_b = ff1.bias;
      blk.ff2_w = ff2.weight;
      blk.ff2_b = ff2.bias;
      s.blocks.push_back(blk);
    }
    s.final_gain = make("seq.final_ln.gain", {d}, Init::Ones, d);
    s.final_bias = make("seq.final_ln.bias", {d}, Init::Zeros, d);
    seq_ = s;
  }
  if (cfg_.has_graph_route()) {
    GraphEncoderParams g{};
    g.bead_embedding = make("graph.bead_embedding", {data::kBeadVocabulary, d}, Init::Uniform, d);
    for (std::size_t l = 0; l < cfg_.graph_layers; ++l) {
      auto layer = dense("graph.layer" + std::to_string(l), 2 * d, d);
      g.layers.push_back({layer.weight, layer.bias});
    }
    graph_ = g;
  }
  if (cfg_.uses_fused_predictor()) {
    pred_fused_ = predictor("pred_fused", fusion::fused_width(cfg_.fusion.kind, d));
  } else {
    if (cfg_.has_seq_route()) pred_seq_ = predictor("pred_seq", d);
    if (cfg_.has_graph_route()) pred_graph_ = predictor("pred_graph", d);
  }
}

const SeqEncoderParams& CoModel::seq() const {
  if (!seq_) throw ContractError("model has no sequence route");
  return *seq_;
}

const GraphEncoderParams& CoModel::graph() const {
  if (!graph_) throw ContractError("model has no graph route");
  return *graph_;
}

const PredictorParams& CoModel::pred_seq() const {
  if (!pred_seq_) throw ContractError("model has no sequence-route predictor");
  return *pred_seq_;
}

const PredictorParams& CoModel::pred_graph() const {
  if (!pred_graph_) throw ContractError("model has no graph-route predictor");
  return *pred_graph_;
}

const PredictorParams& CoModel::pred_fused() const {
  if (!pred_fused_) throw ContractError("model has no fused predictor");
  return *pred_fused_;
}

// ---------------------------------------------------------------------------

std::filesystem::path model_meta_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".meta";
  return p;
}

void save_model(const std::filesystem::path& path, const CoModel& model) {
  ad::save_checkpoint(path, model.params().pointers());
  const ModelConfig& c = model.config();
  std::string meta;
  auto kv = [&](std::string_view k, const std::string& v) {
    meta += k;
    meta += " = ";
    meta += v;
    meta += '\n';
  };
  kv("task", std::string(data::to_string(c.task)));
  kv("num_classes", std::to_string(c.num_classes));
  kv("hidden", std::to_string(c.hidden));
  kv("seq_layers", std::to_string(c.seq_layers));
  kv("heads", std::to_string(c.heads));
  kv("ff_hidden", std::to_string(c.ff_hidden));
  kv("graph_layers", std::to_string(c.graph_layers));
  kv("pred_layers", std::to_string(c.pred_layers));
  kv("max_length", std::to_string(c.max_length));
  kv("model", std::string(to_string(c.arch)));
  kv("fusion", std::string(fusion::to_string(c.fusion.kind)));
  kv("delta", text::exact(c.fusion.delta));
  kv("lambda", text::exact(c.fusion.lambda));
  kv("tau", text::exact(c.fusion.tau));
  kv("normalize_reps", c.fusion.normalize ? "true" : "false");
  data::write_file(model_meta_path(path), meta);
}

CoModel load_model(const std::filesystem::path& path) {
  ModelConfig c;
  const std::string meta = data::read_file(model_meta_path(path));
  for (auto line : text::lines(meta)) {
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("model metadata line without '=': " + std::string(line));
    const auto key = text::trim(line.substr(0, eq));
    const auto val = text::trim(line.substr(eq + 1));
    auto count = [&] { return static_cast<std::size_t>(text::parse_int(val)); };
    if (key == "task") c.task = data::parse_task(val);
    else if (key == "num_classes") c.num_classes = count();
    else if (key == "hidden") c.hidden = count();
    else if (key == "seq_layers") c.seq_layers = count();
    else if (key == "heads") c.heads = count();
    else if (key == "ff_hidden") c.ff_hidden = count();
    else if (key == "graph_layers") c.graph_layers = count();
    else if (key == "pred_layers") c.pred_layers = count();
    else if (key == "max_length") c.max_length = count();
    else if (key == "model") c.arch = parse_architecture(val);
    else if (key == "fusion") c.fusion.kind = fusion::parse_fusion_kind(val);
    else if (key == "delta") c.fusion.delta = text::parse_double(val);
    else if (key == "lambda") c.fusion.lambda = text::parse_double(val);
    else if (key == "tau") c.fusion.tau = text::parse_double(val);
    else if (key == "normalize_reps") c.fusion.normalize = text::parse_bool(val);
    else throw ParseError("unknown model metadata key '" + std::string(key) + "'");
  }
  return CoModel(c, ad::load_checkpoint(path));
}

// ---------------------------------------------------------------------------

Var Binder::operator()(Param* p) {
  auto it = bound_.find(p);
  if (it != bound_.end()) return it->second;
  Var v = track_ ? tape_.watch(*p) : tape_.constant(p->value);
  bound_.emplace(p, v);
  return v;
}

Tensor neighbor_mean_matrix(const data::BeadGraph& graph) {
  const std::size_t n = graph.node_count();
  Tensor m({n, n});
  const auto adj = graph.neighbors();
  for (std::size_t i = 0; i < n; ++i) {
    if (adj[i].empty()) continue;
    const double w = 1.0 / static_cast<double>(adj[i].size());
    for (auto j : adj[i]) m.at(i, j) += w;
  }
  return m;
}

Var seq_embed(Binder& bind, const SeqEncoderParams& p, const data::TokenSequence& seq) {
  if (seq.size() == 0) throw ContractError("cannot encode an empty sequence");
  if (seq.size() > p.position_embedding->value.rows()) {
    throw ContractError("sequence of length " + std::to_string(seq.size()) + " exceeds positional table of " +
                        std::to_string(p.position_embedding->value.rows()));
  }
  Var tok = ad::embedding_gather(bind(p.token_embedding), seq.tokens);
  Var pos = ad::embedding_gather(bind(p.position_embedding), seq.positions);
  return ad::add(tok, pos);
}

namespace {

Var affine(Binder& bind, Var x, ad::Param* w, ad::Param* b) {
  return ad::add(ad::matmul(x, bind(w)), bind(b));
}

Var norm(Binder& bind, Var x, ad::Param* gain, ad::Param* bias) {
  return ad::add(ad::elementwise_mul(ad::layer_norm(x, 1), bind(gain)), bind(bias));
}

Var attention(Binder& bind, const AttentionBlockParams& blk, std::size_t heads, Var y) {
  Var q = ad::matmul(y, bind(blk.wq));
  Var k = ad::matmul(y, bind(blk.wk));
  Var v = ad::matmul(y, bind(blk.wv));
  const std::size_t d = q.value().cols();
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * dh, hi = lo + dh;
    Var qh = ad::slice_cols(q, lo, hi);
    Var kh = ad::slice_cols(k, lo, hi);
    Var vh = ad::slice_cols(v, lo, hi);
    Var weights = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt), 1);
    outs.push_back(ad::matmul(weights, vh));
  }
  return ad::matmul(ad::concat(outs, 1), bind(blk.wo));
}

}  // namespace

Var transformer_from_embedding(Binder& bind, const SeqEncoderParams& p, Var x) {
  for (const auto& blk : p.blocks) {
    x = ad::add(x, attention(bind, blk, p.heads, norm(bind, x, blk.ln1_gain, blk.ln1_bias)));
    Var y = norm(bind, x, blk.ln2_gain, blk.ln2_bias);
    Var ff = affine(bind, ad::leaky_relu(affine(bind, y, blk.ff1_w, blk.ff1_b)), blk.ff2_w, blk.ff2_b);
    x = ad::add(x, ff);
  }
  return ad::mean_pool(norm(bind, x, p.final_gain, p.final_bias), 0);
}

Var transformer_encode(Binder& bind, const SeqEncoderParams& p, const data::TokenSequence& seq) {
  return transformer_from_embedding(bind, p, seq_embed(bind, p, seq));
}

Var graph_embed(Binder& bind, const GraphEncoderParams& p, const data::BeadGraph& graph) {
  if (graph.node_count() == 0) throw ContractError("cannot encode an empty graph");
  return ad::embedding_gather(bind(p.bead_embedding), graph.node_types);
}

Var graphsage_from_embedding(Binder& bind, const GraphEncoderParams& p, Var h, const Tensor& neighbor_mean) {
  g_graph_encodes.fetch_add(1, std::memory_order_relaxed);
  if (h.value().rows() == 0) throw ContractError("cannot encode an empty graph");
  if (neighbor_mean.rows() != h.value().rows() || neighbor_mean.cols() != h.value().rows()) {
    throw ShapeError("neighbor matrix " + ad::shape_string(neighbor_mean.shape()) + " does not match " +
                     std::to_string(h.value().rows()) + " nodes");
  }
  Var agg = bind.tape().constant(neighbor_mean);
  for (const auto& layer : p.layers) {
    Var nbr = ad::matmul(agg, h);
    h = ad::leaky_relu(affine(bind, ad::concat({h, nbr}, 1), layer.weight, layer.bias));
  }
  return ad::mean_pool(h, 0);
}

Var graphsage_encode(Binder& bind, const GraphEncoderParams& p, const data::BeadGraph& graph) {
  return graphsage_from_embedding(bind, p, graph_embed(bind, p, graph), neighbor_mean_matrix(graph));
}

std::uint64_t graph_encode_count() { return g_graph_encodes.load(std::memory_order_relaxed); }

Var mlp_predict(Binder& bind, const PredictorParams& p, Var h) {
  if (h.value().cols() != p.input_width) {
    throw ShapeError("predictor layer 0 expects width " + std::to_string(p.input_width) + ", got " +
                     std::to_string(h.value().cols()));
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    if (h.value().cols() != layer.weight->value.rows()) {
      throw ShapeError("predictor layer " + std::to_string(l) + " expects width " +
                       std::to_string(layer.weight->value.rows()) + ", got " + std::to_string(h.value().cols()));
    }
    h = affine(bind, h, layer.weight, layer.bias);
    if (l + 1 < p.layers.size()) h = ad::leaky_relu(h);
  }
  return h;
}

}  // namespace pepco::model
