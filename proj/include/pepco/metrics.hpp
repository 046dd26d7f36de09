#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pepco/attribution.hpp"
#include "pepco/data.hpp"
#include "pepco/encoders.hpp"

namespace pepco::metrics {

// Tau-a: (concordant - discordant) / (n(n-1)/2); pairs tied in either input
// count as neither.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// Descending-score ranks, ties broken by ascending position.
std::vector<std::size_t> ranks(std::span<const double> scores);

// 1 - sum_i |rank_a(i) - rank_b(i)| / floor(n^2 / 2).
double spearman_footrule(std::span<const double> a, std::span<const double> b);

// Positions of the i highest scores (ties by ascending position).
std::vector<std::size_t> top_positions(std::span<const double> scores, std::size_t i);
bool top_i_overlaps(std::span<const double> a, std::span<const double> b, std::size_t i);
double top_i_overlap(const std::vector<attr::AttributionProfile>& a, const std::vector<attr::AttributionProfile>& b,
                     std::size_t i);

// Natural-log Jensen-Shannon divergence. Negative entries are clamped to zero
// and both inputs renormalized first.
double js_divergence(std::span<const double> p, std::span<const double> q);

double cosine_similarity(std::span<const double> p, std::span<const double> q);

struct Summary {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

Summary summarize(std::span<const double> values);

struct SimilarityReport {
  Summary kendall_tau;
  Summary spearman_footrule;
  std::array<double, 2> top_overlap{};  // i = 1, 2
  Summary js_divergence;
  Summary cosine_similarity;

  // Rows `metric,statistic,value`.
  std::string to_csv() const;
};

// Profiles must be paired by id in identical order over identical peptides.
SimilarityReport compare_models(const std::vector<attr::AttributionProfile>& a,
                                const std::vector<attr::AttributionProfile>& b);

struct ResidueStat {
  char residue = 'A';
  std::size_t occurrences = 0;
  double mean_attribution = 0.0;
  double top_frequency = 0.0;
};

// One entry per alphabet letter. mean_attribution averages over every
// occurrence; top_frequency is the share of profiles in which the letter
// holds the maximum score, ties splitting the credit.
std::vector<ResidueStat> residue_stats(const std::vector<attr::AttributionProfile>& profiles);

// Per-letter MAE over peptides containing the letter; nullopt when no record
// contains it.
std::array<std::optional<double>, data::kAlphabetSize> residue_mae(std::span<const double> predictions,
                                                                   const std::vector<data::PeptideRecord>& records);
std::array<std::optional<double>, data::kAlphabetSize> residue_mae(const model::CoModel& m,
                                                                   const std::vector<data::PeptideRecord>& records);

}  // namespace pepco::metrics
