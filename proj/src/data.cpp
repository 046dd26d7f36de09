#include "pepco/data.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pepco/error.hpp"
#include "pepco/random.hpp"
#include "pepco/text.hpp"

namespace pepco::data {

namespace {

std::atomic<std::uint64_t> g_graph_builds{0};

std::string row_prefix(std::size_t row) { return "row " + std::to_string(row) + ": "; }

}  // namespace

int residue_index(char letter) {
  const auto pos = kAlphabet.find(letter);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

TaskKind parse_task(std::string_view text) {
  if (text == "regression") return TaskKind::Regression;
  if (text == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task '" + std::string(text) + "' (expected regression|classification)");
}

std::string_view to_string(TaskKind task) {
  return task == TaskKind::Regression ? "regression" : "classification";
}

void validate_record(const PeptideRecord& record, std::size_t max_length) {
  if (record.sequence.empty()) throw ParseError("empty sequence");
  if (record.sequence.size() > max_length) {
    throw ParseError("peptide of length " + std::to_string(record.sequence.size()) +
                     " exceeds max length " + std::to_string(max_length));
  }
  for (std::size_t i = 0; i < record.sequence.size(); ++i) {
    if (residue_index(record.sequence[i]) < 0) {
      throw ParseError("invalid residue '" + std::string(1, record.sequence[i]) +
                       "' at position " + std::to_string(i + 1));
    }
  }
}

TokenSequence encode_sequence(std::string_view sequence) {
  TokenSequence out;
  out.tokens.reserve(sequence.size());
  out.positions.reserve(sequence.size());
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const int id = residue_index(sequence[i]);
    if (id < 0) {
      throw ParseError("invalid residue '" + std::string(1, sequence[i]) + "' at position " +
                       std::to_string(i + 1));
    }
    out.tokens.push_back(static_cast<std::uint32_t>(id));
    out.positions.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

TokenSequence encode_sequence(const PeptideRecord& record) { return encode_sequence(record.sequence); }

// ---------------------------------------------------------------------------

std::size_t side_bead_count(char letter) {
  switch (letter) {
    case 'G':
    case 'A':
      return 0;
    case 'F':
    case 'H':
    case 'R':
    case 'Y':
      return 2;
    case 'W':
      return 3;
    default:
      if (residue_index(letter) < 0) {
        throw ParseError("invalid residue '" + std::string(1, letter) + "'");
      }
      return 1;
  }
}

std::uint32_t side_bead_type(char letter, std::size_t slot) {
  const int idx = residue_index(letter);
  if (idx < 0 || slot >= side_bead_count(letter)) {
    throw ContractError("no side bead " + std::to_string(slot) + " for residue '" +
                        std::string(1, letter) + "'");
  }
  return static_cast<std::uint32_t>(1 + idx * kMaxSideBeads + slot);
}

std::size_t BeadGraph::residue_count() const {
  return residue_of_node.empty() ? 0 : residue_of_node.back() + 1;
}

std::vector<std::vector<std::uint32_t>> BeadGraph::neighbors() const {
  std::vector<std::vector<std::uint32_t>> adj(node_count());
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

BeadGraph build_graph(std::string_view sequence) {
  g_graph_builds.fetch_add(1, std::memory_order_relaxed);
  BeadGraph g;
  std::uint32_t prev_backbone = 0;
  for (std::size_t r = 0; r < sequence.size(); ++r) {
    const char letter = sequence[r];
    const std::size_t sides = side_bead_count(letter);
    const auto backbone = static_cast<std::uint32_t>(g.node_types.size());
    g.node_types.push_back(kBackboneBeadType);
    g.residue_of_node.push_back(static_cast<std::uint32_t>(r));
    if (r > 0) g.edges.emplace_back(prev_backbone, backbone);
    std::uint32_t prev = backbone;
    for (std::size_t s = 0; s < sides; ++s) {
      const auto node = static_cast<std::uint32_t>(g.node_types.size());
      g.node_types.push_back(side_bead_type(letter, s));
      g.residue_of_node.push_back(static_cast<std::uint32_t>(r));
      g.edges.emplace_back(prev, node);
      prev = node;
    }
    prev_backbone = backbone;
  }
  return g;
}

BeadGraph build_graph(const PeptideRecord& record) { return build_graph(record.sequence); }

std::uint64_t graph_build_count() { return g_graph_builds.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------

std::vector<PeptideRecord> parse_csv(std::string_view content, TaskKind task, std::size_t max_length) {
  if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);
  const auto rows = text::lines(content);
  if (rows.empty() || rows.front() != "sequence,label") {
    throw ParseError("malformed header: expected 'sequence,label'");
  }
  std::vector<PeptideRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t row = i;
    if (text::trim(rows[i]).empty()) continue;
    const auto fields = text::split(rows[i], ',');
    if (fields.size() != 2) {
      throw ParseError(row_prefix(row) + "expected 2 fields, found " + std::to_string(fields.size()));
    }
    PeptideRecord rec;
    rec.id = std::to_string(row);
    rec.sequence = std::string(text::trim(fields[0]));
    try {
      validate_record(rec, max_length);
    } catch (const ParseError& e) {
      throw ParseError(row_prefix(row) + e.what());
    }
    try {
      if (task == TaskKind::Regression) {
        rec.label = text::parse_double(fields[1]);
      } else {
        const long long c = text::parse_int(fields[1]);
        if (c < 0) throw ParseError("class index must be non-negative");
        rec.label = static_cast<double>(c);
      }
    } catch (const ParseError& e) {
      throw ParseError(row_prefix(row) + "label unparsable: " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<PeptideRecord> parse_fasta(std::string_view content, std::size_t max_length) {
  std::vector<PeptideRecord> records;
  std::size_t line_no = 0;
  for (auto line : text::lines(content)) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    if (line.front() == '>') {
      PeptideRecord rec;
      auto header = text::trim(line.substr(1));
      rec.id = std::string(header.substr(0, header.find_first_of(" \t")));
      if (rec.id.empty()) rec.id = std::to_string(records.size() + 1);
      records.push_back(std::move(rec));
      continue;
    }
    if (records.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": sequence data before first '>' header");
    }
    for (char c : line) {
      records.back().sequence.push_back(
          static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  for (const auto& rec : records) {
    try {
      validate_record(rec, max_length);
    } catch (const ParseError& e) {
      throw ParseError("record '" + rec.id + "': " + e.what());
    }
  }
  return records;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<PeptideRecord> parse_dataset(const std::filesystem::path& path, TaskKind task,
                                         std::size_t max_length) {
  const std::string content = read_file(path);
  const auto body = text::trim(content);
  if (!body.empty() && body.front() == '>') return parse_fasta(content, max_length);
  return parse_csv(content, task, max_length);
}

// ---------------------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<PeptideRecord>& records, SplitRatios ratios,
                           std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0) {
    throw ContractError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ContractError("split ratios must sum to 1");
  }
  const std::size_t n = records.size();
  if (n < 3) throw ContractError("need at least 3 records to split, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span(order));

  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
  n_val = std::max<std::size_t>(n_val, 1);
  n_test = std::max<std::size_t>(n_test, 1);
  while (n_val + n_test > n - 1) {
    if (n_val >= n_test) --n_val; else --n_test;
  }
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = records[order[i]];
    if (i < n_train) split.train.push_back(rec);
    else if (i < n_train + n_val) split.validation.push_back(rec);
    else split.test.push_back(rec);
  }
  return split;
}

std::vector<Batch> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw ContractError("batch_size must be >= 2 for in-batch negatives");
  if (count < 2) throw ContractError("need at least 2 records to form a batch");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "batches"));
  rng.shuffle(std::span(order));

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start < 2) {
      batches.back().insert(batches.back().end(), order.begin() + static_cast<long>(start),
                            order.end());
      break;
    }
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

double aromatic_fraction(std::string_view sequence) {
  if (sequence.empty()) return 0.0;
  std::size_t aromatic = 0;
  for (char c : sequence) aromatic += (c == 'F' || c == 'W' || c == 'Y');
  return static_cast<double>(aromatic) / static_cast<double>(sequence.size());
}

std::vector<PeptideRecord> generate_synthetic(std::size_t count, std::size_t max_length,
                                              std::uint64_t seed) {
  if (count < 10) throw ContractError("synthetic dataset needs n >= 10");
  if (max_length < 1 || max_length > kDefaultMaxLength) {
    throw ContractError("synthetic max_len must be in 1.." + std::to_string(kDefaultMaxLength));
  }
  Rng rng(derive_seed(seed, "synthetic"));
  std::vector<PeptideRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PeptideRecord rec;
    rec.id = std::to_string(i + 1);
    const std::size_t len = 1 + rng.below(max_length);
    for (std::size_t k = 0; k < len; ++k) rec.sequence.push_back(kAlphabet[rng.below(kAlphabetSize)]);
    rec.label = aromatic_fraction(rec.sequence);
    records.push_back(std::move(rec));
  }
  return records;
}

std::string format_dataset_csv(const std::vector<PeptideRecord>& records, TaskKind task) {
  std::string out = "sequence,label\n";
  for (const auto& rec : records) {
    out += rec.sequence;
    out += ',';
    out += task == TaskKind::Regression ? text::fixed(rec.label) : std::to_string(rec.class_label());
    out += '\n';
  }
  return out;
}

}  // namespace pepco::data
