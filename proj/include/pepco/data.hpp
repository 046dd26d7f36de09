#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pepco::data {

inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kAlphabetSize = 20;
inline constexpr std::size_t kDefaultMaxLength = 50;

// Index of `letter` in kAlphabet, or -1 when it is not one of the 20 residues.
int residue_index(char letter);

enum class TaskKind { Regression, Classification };

TaskKind parse_task(std::string_view text);
std::string_view to_string(TaskKind task);

struct PeptideRecord {
  std::string id;
  std::string sequence;
  // Regression target, or class index stored as an exact small integer.
  double label = 0.0;

  int class_label() const { return static_cast<int>(label); }
};

// Throws ParseError when the sequence is empty, too long, or contains a
// letter outside the alphabet.
void validate_record(const PeptideRecord& record, std::size_t max_length = kDefaultMaxLength);

struct TokenSequence {
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> positions;

  std::size_t size() const { return tokens.size(); }
};

TokenSequence encode_sequence(const PeptideRecord& record);
TokenSequence encode_sequence(std::string_view sequence);

// ---------------------------------------------------------------------------
// Coarse-grained bead graphs.
//
// One backbone bead per residue plus a fixed number of side-chain beads per
// letter. Backbone beads are bonded in sequence order, each backbone bead to
// its first side bead, and side beads to each other in a chain.

inline constexpr std::uint32_t kBackboneBeadType = 0;
inline constexpr std::size_t kMaxSideBeads = 3;
// Backbone type plus one type per (letter, side slot).
inline constexpr std::size_t kBeadVocabulary = 1 + kAlphabetSize * kMaxSideBeads;

std::size_t side_bead_count(char letter);
std::uint32_t side_bead_type(char letter, std::size_t slot);

struct BeadGraph {
  std::vector<std::uint32_t> node_types;
  // Undirected edges stored once with first < second.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::uint32_t> residue_of_node;

  std::size_t node_count() const { return node_types.size(); }
  std::size_t residue_count() const;
  // Symmetric neighbor lists built from `edges`.
  std::vector<std::vector<std::uint32_t>> neighbors() const;
};

BeadGraph build_graph(const PeptideRecord& record);
BeadGraph build_graph(std::string_view sequence);

// Number of build_graph calls made by this process. Used to prove that
// sequence-only inference never touches graph construction.
std::uint64_t graph_build_count();

// ---------------------------------------------------------------------------
// Files.

std::vector<PeptideRecord> parse_csv(std::string_view text, TaskKind task,
                                     std::size_t max_length = kDefaultMaxLength);
std::vector<PeptideRecord> parse_fasta(std::string_view text,
                                       std::size_t max_length = kDefaultMaxLength);

// CSV or FASTA, chosen by the first non-blank character ('>' means FASTA).
// FASTA records carry label 0.
std::vector<PeptideRecord> parse_dataset(const std::filesystem::path& path, TaskKind task,
                                         std::size_t max_length = kDefaultMaxLength);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// ---------------------------------------------------------------------------
// Splits and batches.

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<PeptideRecord> train;
  std::vector<PeptideRecord> validation;
  std::vector<PeptideRecord> test;
  std::uint64_t seed = 0;
};

DatasetSplit split_dataset(const std::vector<PeptideRecord>& records, SplitRatios ratios,
                           std::uint64_t seed);

using Batch = std::vector<std::size_t>;

// Shuffled index batches over `count` records. A trailing batch smaller than
// two is folded into the previous one.
std::vector<Batch> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed);

// Uniform random peptides of length 1..max_length labelled with their
// aromatic (F, W, Y) fraction.
std::vector<PeptideRecord> generate_synthetic(std::size_t count, std::size_t max_length,
                                              std::uint64_t seed);
double aromatic_fraction(std::string_view sequence);

std::string format_dataset_csv(const std::vector<PeptideRecord>& records, TaskKind task);

}  // namespace pepco::data
