#include "pepco/config.hpp"

#include <algorithm>

#include "pepco/error.hpp"
#include "pepco/text.hpp"

namespace pepco::config {

namespace {

// "auto" lambda means the task default.
const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"dataset", ""},          {"task", "regression"},   {"num_classes", "2"},   {"max_length", "50"},
      {"train_ratio", "0.8"},   {"val_ratio", "0.1"},     {"test_ratio", "0.1"},  {"seed", "5"},
      {"epochs", "30"},         {"batch_size", "32"},     {"learning_rate", "0.001"},
      {"beta1", "0.9"},         {"beta2", "0.999"},       {"epsilon", "1e-08"},   {"model", "co"},
      {"fusion", "repcon"},     {"delta", "0.5"},         {"lambda", "auto"},     {"tau", "0.5"},
      {"normalize_reps", "false"}, {"hidden", "64"},      {"seq_layers", "2"},    {"heads", "4"},
      {"ff_hidden", "128"},     {"graph_layers", "3"},    {"pred_layers", "2"},   {"out_dir", "out"},
  };
  return d;
}

std::size_t parse_count(const RunConfig& c, std::string_view key) {
  const auto v = text::parse_int(c.get(key));
  if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
  return static_cast<std::size_t>(v);
}

double parse_real(const RunConfig& c, std::string_view key) {
  try {
    return text::parse_double(c.get(key));
  } catch (const ParseError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig::RunConfig() : entries_(defaults()) {}

RunConfig RunConfig::from_text(std::string_view content) {
  RunConfig c;
  std::size_t line_no = 0;
  for (auto line : text::lines(content)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = text::trim(line.substr(0, eq));
    if (!c.known(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
    c.set(key, text::trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) { return from_text(data::read_file(path)); }

bool RunConfig::known(std::string_view key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = std::string(value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set(text::trim(assignment.substr(0, eq)), text::trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(std::string_view key) const {
  for (const auto& e : entries_) {
    if (e.first == key) return e.second;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string RunConfig::to_text() const {
  const auto cfg = train_config();
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key + " = " + (key == "lambda" ? text::exact(cfg.model.fusion.lambda) : value) + "\n";
  }
  return out;
}

std::filesystem::path RunConfig::dataset() const {
  const auto& path = get("dataset");
  if (path.empty()) throw ConfigError("config key 'dataset' is not set");
  return path;
}

std::filesystem::path RunConfig::out_dir() const {
  const auto& path = get("out_dir");
  if (path.empty()) throw ConfigError("config key 'out_dir' is empty");
  return path;
}

data::TaskKind RunConfig::task() const { return data::parse_task(get("task")); }

data::SplitRatios RunConfig::ratios() const {
  return {parse_real(*this, "train_ratio"), parse_real(*this, "val_ratio"), parse_real(*this, "test_ratio")};
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  auto& m = t.model;
  m.task = task();
  m.num_classes = parse_count(*this, "num_classes");
  m.max_length = parse_count(*this, "max_length");
  m.hidden = parse_count(*this, "hidden");
  m.seq_layers = parse_count(*this, "seq_layers");
  m.heads = parse_count(*this, "heads");
  m.ff_hidden = parse_count(*this, "ff_hidden");
  m.graph_layers = parse_count(*this, "graph_layers");
  m.pred_layers = parse_count(*this, "pred_layers");
  m.arch = model::parse_architecture(get("model"));
  m.fusion.kind = fusion::parse_fusion_kind(get("fusion"));
  m.fusion.delta = parse_real(*this, "delta");
  m.fusion.lambda = get("lambda") == "auto" ? train::default_lambda(m.task) : parse_real(*this, "lambda");
  m.fusion.tau = parse_real(*this, "tau");
  m.fusion.normalize = text::parse_bool(get("normalize_reps"));
  t.epochs = parse_count(*this, "epochs");
  t.batch_size = parse_count(*this, "batch_size");
  t.learning_rate = parse_real(*this, "learning_rate");
  t.seed = static_cast<std::uint64_t>(parse_count(*this, "seed"));
  t.adam.beta1 = parse_real(*this, "beta1");
  t.adam.beta2 = parse_real(*this, "beta2");
  t.adam.epsilon = parse_real(*this, "epsilon");
  t.validate();
  return t;
}

}  // namespace pepco::config
