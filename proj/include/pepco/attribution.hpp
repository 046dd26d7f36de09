#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pepco/autodiff.hpp"
#include "pepco/data.hpp"
#include "pepco/encoders.hpp"

namespace pepco::attr {

enum class Route { Seq, Graph };

Route parse_route(std::string_view text);
std::string_view to_string(Route route);

inline constexpr std::size_t kDefaultSteps = 300;

// Per-residue importance normalized to sum to one.
struct AttributionProfile {
  std::string id;
  std::string residues;
  std::vector<double> scores;
};

// |f(X)| for regression; cross-entropy against the originally predicted
// class for classification.
ad::Var attribution_loss(ad::Var output, data::TaskKind task, std::optional<int> original_class = std::nullopt);

// Scalar loss as a function of the embedded input.
using EmbeddingLoss = std::function<ad::Var(ad::Tape&, ad::Var embedded)>;

// H * (1/m) * sum_{k=1..m} dL/dH evaluated at (k/m) H, i.e. the right Riemann
// sum of the path integral from the zero embedding to H.
ad::Tensor integrated_gradients(const EmbeddingLoss& loss, const ad::Tensor& embedded, std::size_t steps);

struct Completeness {
  double saliency_sum = 0.0;
  double loss_delta = 0.0;  // L(H) - L(0)
  double relative_gap = 0.0;
};

Completeness completeness(const EmbeddingLoss& loss, const ad::Tensor& embedded, const ad::Tensor& saliency);

// Sums every saliency entry owned by a residue and divides by the signed
// grand total. Throws NumericError when |total| < 1e-9.
AttributionProfile aggregate_to_residues(const ad::Tensor& saliency, std::span<const std::uint32_t> residue_of_row,
                                         std::string_view residues, std::string id = {});

// One peptide prepared for attribution under one route of a model.
struct AttributionProblem {
  ad::Tensor embedded;
  std::vector<std::uint32_t> residue_of_row;
  EmbeddingLoss loss;
};

AttributionProblem make_problem(const model::CoModel& m, const data::PeptideRecord& record, Route route);

AttributionProfile attribute_record(const model::CoModel& m, const data::PeptideRecord& record, Route route,
                                    std::size_t steps = kDefaultSteps);
std::vector<AttributionProfile> attribute_dataset(const model::CoModel& m,
                                                  const std::vector<data::PeptideRecord>& records, Route route,
                                                  std::size_t steps = kDefaultSteps);

// Header `id,position,residue,score`; positions are 1-based.
std::string format_profiles_csv(const std::vector<AttributionProfile>& profiles);
std::vector<AttributionProfile> parse_profiles_csv(std::string_view content);

}  // namespace pepco::attr
