#include "pepco/fusion.hpp"

#include <cmath>
#include <complex>

#include <fftw3.h>

#include "pepco/error.hpp"

namespace pepco::fusion {

using ad::Tensor;
using ad::Var;

FusionKind parse_fusion_kind(std::string_view text) {
  if (text == "ws") return FusionKind::WS;
  if (text == "concat") return FusionKind::Concat;
  if (text == "ca") return FusionKind::CA;
  if (text == "cbp") return FusionKind::CBP;
  if (text == "repcon") return FusionKind::RepCon;
  throw ConfigError("unknown fusion '" + std::string(text) + "' (expected ws|concat|ca|cbp|repcon)");
}

std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::WS: return "ws";
    case FusionKind::Concat: return "concat";
    case FusionKind::CA: return "ca";
    case FusionKind::CBP: return "cbp";
    case FusionKind::RepCon: return "repcon";
  }
  return "repcon";
}

void FusionConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
}

namespace {

using Complex = std::complex<double>;

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": dimension mismatch " + ad::shape_string(a.shape()) + " vs " +
                     ad::shape_string(b.shape()));
  }
}

// Half spectrum (n/2 + 1 bins) of a real vector.
std::vector<Complex> forward_dft(std::span<const double> v) {
  std::vector<double> in(v.begin(), v.end());
  std::vector<Complex> out(v.size() / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(in.size()), in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

// Real length-n signal from a half spectrum, including the 1/n factor.
std::vector<double> inverse_real(std::vector<Complex> x, std::size_t n) {
  std::vector<double> out(n);
  fftw_plan plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(x.data()), out.data(),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return out;
}

// out[j] = sum_k g[k] * b[(k - j) mod n]: the adjoint of convolving with b.
std::vector<double> circular_correlation(std::span<const double> g, std::span<const double> b) {
  auto G = forward_dft(g);
  const auto B = forward_dft(b);
  for (std::size_t i = 0; i < G.size(); ++i) G[i] *= std::conj(B[i]);
  return inverse_real(std::move(G), g.size());
}

}  // namespace

std::vector<double> circular_convolution(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("circular_convolution: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  auto A = forward_dft(a);
  const auto B = forward_dft(b);
  for (std::size_t i = 0; i < A.size(); ++i) A[i] *= B[i];
  return inverse_real(std::move(A), a.size());
}

Var fuse_ws(Var h_seq, Var h_graph, double delta) {
  require_same("fuse_ws", h_seq.value(), h_graph.value());
  return ad::add(ad::scale(h_seq, delta), ad::scale(h_graph, 1.0 - delta));
}

Var fuse_concat(Var h_seq, Var h_graph) { return ad::concat({h_seq, h_graph}, 1); }

Var fuse_ca(Var h_seq, Var h_graph) {
  require_same("fuse_ca", h_seq.value(), h_graph.value());
  const std::size_t rows = h_seq.value().rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(h_seq.value().cols()));
  std::vector<Var> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Var s = ad::slice_rows(h_seq, r, r + 1);
    Var g = ad::slice_rows(h_graph, r, r + 1);
    Var weights = ad::softmax(ad::scale(ad::matmul(ad::transpose(g), g), inv_sqrt), 1);
    out.push_back(ad::transpose(ad::matmul(weights, ad::transpose(s))));
  }
  return rows == 1 ? out.front() : ad::concat(out, 0);
}

Var fuse_cbp(Var h_seq, Var h_graph) {
  const Tensor& S = h_seq.value();
  const Tensor& G = h_graph.value();
  require_same("fuse_cbp", S, G);
  const std::size_t rows = S.rows(), d = S.cols();
  Tensor out({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto conv = circular_convolution(S.values().subspan(r * d, d), G.values().subspan(r * d, d));
    std::copy(conv.begin(), conv.end(), out.data() + r * d);
  }
  return h_seq.tape->record(std::move(out), {h_seq, h_graph}, [h_seq, h_graph, rows, d](ad::Tape& t, const Tensor& g) {
    const Tensor& S = t.value(h_seq);
    const Tensor& G = t.value(h_graph);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto gr = g.values().subspan(r * d, d);
      if (t.requires_grad(h_seq)) {
        const auto ds = circular_correlation(gr, G.values().subspan(r * d, d));
        Tensor& gs = t.grad(h_seq);
        for (std::size_t j = 0; j < d; ++j) gs[r * d + j] += ds[j];
      }
      if (t.requires_grad(h_graph)) {
        const auto dg = circular_correlation(gr, S.values().subspan(r * d, d));
        Tensor& gg = t.grad(h_graph);
        for (std::size_t j = 0; j < d; ++j) gg[r * d + j] += dg[j];
      }
    }
  });
}

std::size_t fused_width(FusionKind kind, std::size_t d) {
  switch (kind) {
    case FusionKind::Concat: return 2 * d;
    case FusionKind::RepCon:
      throw ContractError("RepCon keeps one predictor per route and has no fused representation");
    default: return d;
  }
}

Var fuse_for_predictor(Var h_seq, Var h_graph, const FusionConfig& cfg) {
  switch (cfg.kind) {
    case FusionKind::WS: return fuse_ws(h_seq, h_graph, cfg.delta);
    case FusionKind::Concat: return fuse_concat(h_seq, h_graph);
    case FusionKind::CA: return fuse_ca(h_seq, h_graph);
    case FusionKind::CBP: return fuse_cbp(h_seq, h_graph);
    case FusionKind::RepCon: break;
  }
  throw ContractError(
      "RepCon has no fused vector: predict each route with its own predictor and use infonce_loss for "
      "the contrastive term");
}

Var infonce_loss(Var batch_h_seq, Var batch_h_graph, double tau, bool normalize) {
  const Tensor& S = batch_h_seq.value();
  const Tensor& G = batch_h_graph.value();
  require_same("infonce_loss", S, G);
  const std::size_t b = S.rows();
  if (b < 2) throw ContractError("infonce_loss needs at least 2 samples for in-batch negatives");
  if (!(tau > 0.0)) throw ContractError("infonce_loss needs tau > 0");

  Var z = ad::concat({batch_h_seq, batch_h_graph}, 0);
  if (normalize) z = ad::l2_normalize_rows(z);
  Var sims = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / tau);
  // Removes each anchor's similarity with itself from its softmax.
  Tensor mask({2 * b, 2 * b});
  for (std::size_t i = 0; i < 2 * b; ++i) mask.at(i, i) = -1e300;
  Var logits = ad::add(sims, batch_h_seq.tape->constant(std::move(mask)));
  std::vector<int> positives(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    positives[i] = static_cast<int>(i + b);
    positives[i + b] = static_cast<int>(i);
  }
  return ad::cross_entropy_loss(logits, positives);
}

}  // namespace pepco::fusion
