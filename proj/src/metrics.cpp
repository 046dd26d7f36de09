#include "pepco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pepco/error.hpp"
#include "pepco/text.hpp"
#include "pepco/training.hpp"

namespace pepco::metrics {

namespace {

void require_pair(const char* op, std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) {
    throw ContractError(std::string(op) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (a.size() < min_len) {
    throw ContractError(std::string(op) + ": needs at least " + std::to_string(min_len) + " entries");
  }
}

// Counts inversions of v while merge-sorting it.
std::uint64_t count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = count_swaps(v, buf, lo, mid) + count_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi), v.begin() + static_cast<long>(lo));
  return swaps;
}

// Sum over runs of equal values of run*(run-1)/2, for a sorted range.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq&& equal) {
  std::uint64_t ties = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (equal(i - 1, i)) {
      ++run;
    } else {
      ties += run * (run - 1) / 2;
      run = 1;
    }
  }
  return ties + run * (run - 1) / 2;
}

void normalize_clamped(std::span<const double> in, std::vector<double>& out) {
  out.assign(in.begin(), in.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::max(v, 0.0);
    total += v;
  }
  if (!(total > 0.0)) throw NumericError("js_divergence: profile has no positive mass");
  for (double& v : out) v /= total;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  require_pair("kendall_tau", a, b, 2);
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] != a[j] ? a[i] < a[j] : b[i] < b[j];
  });
  const std::uint64_t ties_a = tied_pairs(n, [&](std::size_t i, std::size_t j) { return a[order[i]] == a[order[j]]; });
  const std::uint64_t ties_ab = tied_pairs(
      n, [&](std::size_t i, std::size_t j) { return a[order[i]] == a[order[j]] && b[order[i]] == b[order[j]]; });
  std::vector<double> bs(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = b[order[i]];
  const std::uint64_t swaps = count_swaps(bs, buf, 0, n);
  const std::uint64_t ties_b = tied_pairs(n, [&](std::size_t i, std::size_t j) { return bs[i] == bs[j]; });
  const double total = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double numerator = total - static_cast<double>(ties_a) - static_cast<double>(ties_b) +
                           static_cast<double>(ties_ab) - 2.0 * static_cast<double>(swaps);
  return numerator / total;
}

std::vector<std::size_t> ranks(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

double spearman_footrule(std::span<const double> a, std::span<const double> b) {
  require_pair("spearman_footrule", a, b, 2);
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  std::size_t distance = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) distance += ra[i] > rb[i] ? ra[i] - rb[i] : rb[i] - ra[i];
  const std::size_t n = a.size();
  return 1.0 - static_cast<double>(distance) / static_cast<double>(n * n / 2);
}

std::vector<std::size_t> top_positions(std::span<const double> scores, std::size_t i) {
  if (i < 1) throw ContractError("top-i overlap needs i >= 1");
  if (i > scores.size()) {
    throw ContractError("top-" + std::to_string(i) + " requested for a peptide of length " +
                        std::to_string(scores.size()));
  }
  const auto r = ranks(scores);
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < r.size(); ++p) {
    if (r[p] < i) out.push_back(p);
  }
  return out;
}

bool top_i_overlaps(std::span<const double> a, std::span<const double> b, std::size_t i) {
  require_pair("top_i_overlap", a, b, 1);
  const auto ta = top_positions(a, i);
  const auto tb = top_positions(b, i);
  for (auto p : ta) {
    if (std::find(tb.begin(), tb.end(), p) != tb.end()) return true;
  }
  return false;
}

double top_i_overlap(const std::vector<attr::AttributionProfile>& a, const std::vector<attr::AttributionProfile>& b,
                     std::size_t i) {
  if (a.size() != b.size() || a.empty()) throw ContractError("top_i_overlap: profiles must be paired and non-empty");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < a.size(); ++k) hits += top_i_overlaps(a[k].scores, b[k].scores, i);
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  require_pair("js_divergence", p, q, 1);
  std::vector<double> pn, qn;
  normalize_clamped(p, pn);
  normalize_clamped(q, qn);
  double js = 0.0;
  for (std::size_t i = 0; i < pn.size(); ++i) {
    const double m = 0.5 * (pn[i] + qn[i]);
    if (pn[i] > 0.0) js += 0.5 * pn[i] * std::log(pn[i] / m);
    if (qn[i] > 0.0) js += 0.5 * qn[i] * std::log(qn[i] / m);
  }
  return std::max(js, 0.0);
}

double cosine_similarity(std::span<const double> p, std::span<const double> q) {
  require_pair("cosine_similarity", p, q, 1);
  double pq = 0.0, pp = 0.0, qq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pq += p[i] * q[i];
    pp += p[i] * p[i];
    qq += q[i] * q[i];
  }
  if (pp == 0.0 || qq == 0.0) throw NumericError("cosine_similarity: zero vector");
  return std::clamp(pq / (std::sqrt(pp) * std::sqrt(qq)), -1.0, 1.0);
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.var += (v - s.mean) * (v - s.mean);
  s.var /= static_cast<double>(values.size());
  return s;
}

std::string SimilarityReport::to_csv() const {
  std::string out = "metric,statistic,value\n";
  auto row = [&](std::string_view metric, std::string_view stat, double v) {
    out += metric;
    out += ',';
    out += stat;
    out += ',';
    out += text::fixed(v);
    out += '\n';
  };
  row("kendall_tau", "mean", kendall_tau.mean);
  row("kendall_tau", "var", kendall_tau.var);
  row("spearman_footrule", "mean", spearman_footrule.mean);
  row("spearman_footrule", "var", spearman_footrule.var);
  row("top_1_overlap", "fraction", top_overlap[0]);
  row("top_2_overlap", "fraction", top_overlap[1]);
  row("js_divergence", "mean", js_divergence.mean);
  row("js_divergence", "var", js_divergence.var);
  row("cosine_similarity", "mean", cosine_similarity.mean);
  row("cosine_similarity", "var", cosine_similarity.var);
  return out;
}

SimilarityReport compare_models(const std::vector<attr::AttributionProfile>& a,
                                const std::vector<attr::AttributionProfile>& b) {
  if (a.empty() || a.size() != b.size()) {
    throw ContractError("compare_models: profile lists must be non-empty and of equal size");
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].id != b[k].id || a[k].residues != b[k].residues) {
      throw ContractError("compare_models: profile " + std::to_string(k + 1) + " is unpaired ('" + a[k].id +
                          "' vs '" + b[k].id + "')");
    }
  }
  std::vector<double> tau, foot, js, cos;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& sa = a[k].scores;
    const auto& sb = b[k].scores;
    // Rank statistics are undefined on a single residue; such peptides
    // still count for the distribution and overlap metrics.
    if (sa.size() >= 2) {
      tau.push_back(kendall_tau(sa, sb));
      foot.push_back(spearman_footrule(sa, sb));
    }
    js.push_back(js_divergence(sa, sb));
    cos.push_back(cosine_similarity(sa, sb));
  }
  SimilarityReport r;
  r.kendall_tau = summarize(tau);
  r.spearman_footrule = summarize(foot);
  r.js_divergence = summarize(js);
  r.cosine_similarity = summarize(cos);
  for (std::size_t i = 1; i <= 2; ++i) {
    std::size_t eligible = 0, hits = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k].scores.size() < i) continue;
      ++eligible;
      hits += top_i_overlaps(a[k].scores, b[k].scores, i);
    }
    r.top_overlap[i - 1] = eligible == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(eligible);
  }
  return r;
}

std::vector<ResidueStat> residue_stats(const std::vector<attr::AttributionProfile>& profiles) {
  if (profiles.empty()) throw ContractError("residue_stats needs at least one profile");
  std::vector<ResidueStat> stats(data::kAlphabetSize);
  std::vector<double> sums(data::kAlphabetSize, 0.0), top(data::kAlphabetSize, 0.0);
  for (std::size_t l = 0; l < data::kAlphabetSize; ++l) stats[l].residue = data::kAlphabet[l];
  for (const auto& p : profiles) {
    if (p.scores.empty()) continue;
    const double mx = *std::max_element(p.scores.begin(), p.scores.end());
    std::vector<std::size_t> winners;
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
      const int l = data::residue_index(p.residues[i]);
      if (l < 0) throw ContractError("profile '" + p.id + "' contains an unknown residue");
      stats[static_cast<std::size_t>(l)].occurrences += 1;
      sums[static_cast<std::size_t>(l)] += p.scores[i];
      if (p.scores[i] == mx) winners.push_back(static_cast<std::size_t>(l));
    }
    for (auto l : winners) top[l] += 1.0 / static_cast<double>(winners.size());
  }
  for (std::size_t l = 0; l < data::kAlphabetSize; ++l) {
    if (stats[l].occurrences) stats[l].mean_attribution = sums[l] / static_cast<double>(stats[l].occurrences);
    stats[l].top_frequency = top[l] / static_cast<double>(profiles.size());
  }
  return stats;
}

std::array<std::optional<double>, data::kAlphabetSize> residue_mae(std::span<const double> predictions,
                                                                   const std::vector<data::PeptideRecord>& records) {
  if (predictions.size() != records.size()) throw ContractError("residue_mae: one prediction per record required");
  std::array<double, data::kAlphabetSize> sums{};
  std::array<std::size_t, data::kAlphabetSize> counts{};
  for (std::size_t k = 0; k < records.size(); ++k) {
    const double err = std::fabs(predictions[k] - records[k].label);
    std::array<bool, data::kAlphabetSize> present{};
    for (char c : records[k].sequence) {
      const int l = data::residue_index(c);
      if (l >= 0) present[static_cast<std::size_t>(l)] = true;
    }
    for (std::size_t l = 0; l < data::kAlphabetSize; ++l) {
      if (!present[l]) continue;
      sums[l] += err;
      counts[l] += 1;
    }
  }
  std::array<std::optional<double>, data::kAlphabetSize> out;
  for (std::size_t l = 0; l < data::kAlphabetSize; ++l) {
    if (counts[l]) out[l] = sums[l] / static_cast<double>(counts[l]);
  }
  return out;
}

std::array<std::optional<double>, data::kAlphabetSize> residue_mae(const model::CoModel& m,
                                                                   const std::vector<data::PeptideRecord>& records) {
  if (m.config().task != data::TaskKind::Regression) throw ContractError("residue_mae needs a regression model");
  std::vector<double> preds;
  const bool graphs = train::inference_needs_graph(m);
  for (const auto& rec : records) {
    const auto tokens = data::encode_sequence(rec);
    if (graphs) {
      const auto g = data::build_graph(rec);
      preds.push_back(train::infer(m, tokens, &g).value());
    } else {
      preds.push_back(train::infer(m, tokens).value());
    }
  }
  return residue_mae(preds, records);
}

}  // namespace pepco::metrics
