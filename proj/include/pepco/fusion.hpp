#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "pepco/autodiff.hpp"

namespace pepco::fusion {

enum class FusionKind { WS, Concat, CA, CBP, RepCon };

FusionKind parse_fusion_kind(std::string_view text);
std::string_view to_string(FusionKind kind);

struct FusionConfig {
  FusionKind kind = FusionKind::RepCon;
  double delta = 0.5;   // WS balance
  double lambda = 1e-4; // contrastive weight
  double tau = 0.5;     // InfoNCE temperature
  bool normalize = false;  // L2-normalize representations before the InfoNCE dot products

  void validate() const;
};

// All fusion operators work row-wise on (B, d) batches of representations.
ad::Var fuse_ws(ad::Var h_seq, ad::Var h_graph, double delta);
ad::Var fuse_concat(ad::Var h_seq, ad::Var h_graph);
// softmax(h_g^T h_g / sqrt(d)) applied to h_s, per row.
ad::Var fuse_ca(ad::Var h_seq, ad::Var h_graph);
// Circular convolution of each row pair, computed through the DFT.
ad::Var fuse_cbp(ad::Var h_seq, ad::Var h_graph);

// Width of the fused vector for representations of width d.
std::size_t fused_width(FusionKind kind, std::size_t d);

// Dispatch for the shared-predictor baselines. RepCon has no fused vector.
ad::Var fuse_for_predictor(ad::Var h_seq, ad::Var h_graph, const FusionConfig& cfg);

// Symmetric InfoNCE over a batch. For each anchor (either route of sample i)
// the positive is the other route of sample i and the negatives are both
// routes of every other sample, 2(B-1) terms. Returns the mean over all 2B
// anchors.
ad::Var infonce_loss(ad::Var batch_h_seq, ad::Var batch_h_graph, double tau, bool normalize = false);

// DFT-based circular convolution of two equal-length vectors.
std::vector<double> circular_convolution(std::span<const double> a, std::span<const double> b);

}  // namespace pepco::fusion
