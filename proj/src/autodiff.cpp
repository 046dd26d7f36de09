#include "pepco/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pepco/error.hpp"

namespace pepco::ad {

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::watch(Param& param) {
  nodes_.push_back(Node{param.value, {}, {}, &param, true});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward fn) {
  bool needs = false;
  for (Var v : inputs) {
    if (v.tape != this) throw ContractError("operand recorded on a different tape");
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, nullptr, needs});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(Var v) {
  Node& node = nodes_[v.id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  run_backward(loss, Tensor(value(loss).shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (seed.size() != value(output).size()) {
    throw ShapeError("backward seed shape " + shape_string(seed.shape()) + " does not match output " +
                     shape_string(value(output).shape()));
  }
  run_backward(output, seed);
}

void Tape::run_backward(Var output, const Tensor& seed) {
  if (nodes_.empty()) throw ContractError("backward() on an empty tape");
  grad(output) += seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.sink != nullptr) {
      if (node.sink->grad.size() != node.grad.size()) node.sink->zero_grad();
      node.sink->grad += node.grad;
    }
  }
  clear();
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() > 2) throw ShapeError(std::string(op) + ": expected rank <= 2, got " + shape_string(t.shape()));
}

void require_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

enum class Broadcast { Same, Row };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  require_matrix(op, a);
  require_matrix(op, b);
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == a.cols() && a.rank() == 2) return Broadcast::Row;
  if (a.size() == b.size() && a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  shape_fail(op, a, b);
}

// Adds g (shaped like the left operand) into the gradient of a broadcast
// right operand.
void reduce_into(Tensor& dst, const Tensor& g, Broadcast kind, double factor = 1.0) {
  if (kind == Broadcast::Same) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
    return;
  }
  const std::size_t n = g.rows(), m = g.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) dst[c] += factor * g[r * m + c];
}

template <typename F>
Var unary(Var a, Tensor out, F&& grad_fn) {
  return a.tape->record(std::move(out), {a}, [a, grad_fn = std::forward<F>(grad_fn)](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad(a);
    grad_fn(ga, g);
  });
}

// Strided iteration over the lines of a rank-2 tensor along `axis`.
struct Lines {
  std::size_t count, length, line_stride, elem_stride;
};

Lines lines_along(const Tensor& t, int axis, const char* op) {
  require_matrix(op, t);
  const std::size_t r = t.rows(), c = t.cols();
  if (axis == 1 || axis == -1) return {r, c, c, 1};
  if (axis == 0) return {c, r, 1, c};
  throw ShapeError(std::string(op) + ": axis must be 0 or 1");
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix("matmul", A);
  require_matrix("matmul", B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) shape_fail("matmul", A, B);
  Tensor C({m, n});
  const double* pa = A.data();
  const double* pb = B.data();
  double* pc = C.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return a.tape->record(std::move(C), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    const double* pg = g.data();
    if (t.requires_grad(a)) {
      const double* pb = t.value(b).data();
      double* ga = t.grad(a).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = pg + i * n;
          const double* brow = pb + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (t.requires_grad(b)) {
      const double* pa = t.value(a).data();
      double* gb = t.grad(b).data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb + p * n;
          const double* grow = pg + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("add", A, B);
  Tensor out = A;
  const std::size_t m = A.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += kind == Broadcast::Same ? B[i] : B[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b, kind](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) reduce_into(t.grad(b), g, kind);
  });
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("sub", A, B);
  Tensor out = A;
  const std::size_t m = A.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= kind == Broadcast::Same ? B[i] : B[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b, kind](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) reduce_into(t.grad(b), g, kind, -1.0);
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return unary(a, std::move(out), [factor](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var elementwise_mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("elementwise_mul", A, B);
  const std::size_t m = A.cols();
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= kind == Broadcast::Same ? B[i] : B[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b, kind, m](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (kind == Broadcast::Same ? B[i] : B[i % m]);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[kind == Broadcast::Same ? i : i % m] += g[i] * A[i];
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : slope * v;
  return a.tape->record(std::move(out), {a}, [a, slope](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += A[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var abs(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::fabs(v);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += A[i] > 0.0 ? g[i] : (A[i] < 0.0 ? -g[i] : 0.0);
  });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  Tensor saved = out;
  return unary(a, std::move(out), [y = std::move(saved)](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  const Tensor& A = a.value();
  require_finite("log", A);
  Tensor out = A;
  for (double& v : out.values()) {
    if (v <= 0.0) throw NumericError("log: non-positive input");
    v = std::log(v);
  }
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
  });
}

Var softmax(Var a, int axis) {
  const Tensor& A = a.value();
  require_finite("softmax", A);
  const Lines L = lines_along(A, axis, "softmax");
  Tensor out(A.shape());
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.line_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < L.length; ++e) mx = std::max(mx, A[base + e * L.elem_stride]);
    double total = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) {
      const double v = std::exp(A[base + e * L.elem_stride] - mx);
      out[base + e * L.elem_stride] = v;
      total += v;
    }
    for (std::size_t e = 0; e < L.length; ++e) out[base + e * L.elem_stride] /= total;
  }
  Tensor saved = out;
  return a.tape->record(std::move(out), {a}, [a, L, y = std::move(saved)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t l = 0; l < L.count; ++l) {
      const std::size_t base = l * L.line_stride;
      double inner = 0.0;
      for (std::size_t e = 0; e < L.length; ++e) {
        const std::size_t i = base + e * L.elem_stride;
        inner += g[i] * y[i];
      }
      for (std::size_t e = 0; e < L.length; ++e) {
        const std::size_t i = base + e * L.elem_stride;
        ga[i] += y[i] * (g[i] - inner);
      }
    }
  });
}

Var layer_norm(Var a, int axis, double eps) {
  const Tensor& A = a.value();
  const Lines L = lines_along(A, axis, "layer_norm");
  Tensor out(A.shape());
  std::vector<double> inv_std(L.count);
  const double n = static_cast<double>(L.length);
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.line_stride;
    double mu = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) mu += A[base + e * L.elem_stride];
    mu /= n;
    double var = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) {
      const double d = A[base + e * L.elem_stride] - mu;
      var += d * d;
    }
    var /= n;
    inv_std[l] = 1.0 / std::sqrt(var + eps);
    for (std::size_t e = 0; e < L.length; ++e) {
      const std::size_t i = base + e * L.elem_stride;
      out[i] = (A[i] - mu) * inv_std[l];
    }
  }
  Tensor saved = out;
  return a.tape->record(std::move(out), {a},
                        [a, L, n, y = std::move(saved), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
                          Tensor& ga = t.grad(a);
                          for (std::size_t l = 0; l < L.count; ++l) {
                            const std::size_t base = l * L.line_stride;
                            double mean_g = 0.0, mean_gy = 0.0;
                            for (std::size_t e = 0; e < L.length; ++e) {
                              const std::size_t i = base + e * L.elem_stride;
                              mean_g += g[i];
                              mean_gy += g[i] * y[i];
                            }
                            mean_g /= n;
                            mean_gy /= n;
                            for (std::size_t e = 0; e < L.length; ++e) {
                              const std::size_t i = base + e * L.elem_stride;
                              ga[i] += inv_std[l] * (g[i] - mean_g - y[i] * mean_gy);
                            }
                          }
                        });
}

Var embedding_gather(Var table, std::span<const std::uint32_t> ids) {
  const Tensor& T = table.value();
  if (T.rank() != 2) throw ShapeError("embedding_gather: table must be rank 2, got " + shape_string(T.shape()));
  const std::size_t d = T.cols();
  Tensor out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= T.rows()) {
      throw ShapeError("embedding_gather: id " + std::to_string(ids[r]) + " out of range for table " +
                       shape_string(T.shape()));
    }
    std::copy_n(T.data() + ids[r] * d, d, out.data() + r * d);
  }
  std::vector<std::uint32_t> saved(ids.begin(), ids.end());
  return unary(table, std::move(out), [d, ids = std::move(saved)](Tensor& gt, const Tensor& g) {
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gt[ids[r] * d + c] += g[r * d + c];
  });
}

Var mean_pool(Var a, int axis) {
  const Tensor& A = a.value();
  const Lines L = lines_along(A, axis, "mean_pool");
  if (L.length == 0) throw ShapeError("mean_pool: empty axis");
  Tensor out = axis == 0 ? Tensor({1, A.cols()}) : Tensor({A.rows(), 1});
  const double inv = 1.0 / static_cast<double>(L.length);
  for (std::size_t l = 0; l < L.count; ++l) {
    double acc = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) acc += A[l * L.line_stride + e * L.elem_stride];
    out[l] = acc * inv;
  }
  return unary(a, std::move(out), [L, inv](Tensor& ga, const Tensor& g) {
    for (std::size_t l = 0; l < L.count; ++l)
      for (std::size_t e = 0; e < L.length; ++e) ga[l * L.line_stride + e * L.elem_stride] += g[l] * inv;
  });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape* tape = parts.front().tape;
  const Tensor& first = parts.front().value();
  std::vector<std::size_t> extents;
  std::size_t rows = 0, cols = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    require_matrix("concat", v);
    if (axis == 0) {
      if (v.cols() != first.cols()) shape_fail("concat", first, v);
      rows += v.rows();
      cols = v.cols();
      extents.push_back(v.rows());
    } else {
      if (v.rows() != first.rows()) shape_fail("concat", first, v);
      cols += v.cols();
      rows = v.rows();
      extents.push_back(v.cols());
    }
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out.at(offset + r, c) = v.at(r, c);
        else out.at(r, offset + c) = v.at(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [inputs, axis, cols](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (Var p : inputs) {
      const Tensor& v = t.value(p);
      const std::size_t pr = v.rows(), pc = v.cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad(p);
        for (std::size_t r = 0; r < pr; ++r)
          for (std::size_t c = 0; c < pc; ++c) {
            gp[r * pc + c] += axis == 0 ? g[(offset + r) * cols + c] : g[r * cols + offset + c];
          }
      }
      offset += axis == 0 ? pr : pc;
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_matrix("transpose", A);
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  return unary(a, std::move(out), [r, c](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_matrix("slice_cols", A);
  const std::size_t r = A.rows(), c = A.cols();
  if (begin >= end || end > c) throw ShapeError("slice_cols: range out of bounds for " + shape_string(A.shape()));
  const std::size_t w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i) std::copy_n(A.data() + i * c + begin, w, out.data() + i * w);
  return unary(a, std::move(out), [r, c, w, begin](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = a.value();
  require_matrix("slice_rows", A);
  const std::size_t c = A.cols();
  if (begin >= end || end > A.rows()) throw ShapeError("slice_rows: range out of bounds for " + shape_string(A.shape()));
  Tensor out({end - begin, c});
  std::copy(A.data() + begin * c, A.data() + end * c, out.data());
  return unary(a, std::move(out), [c, begin](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& A = a.value();
  require_matrix("l2_normalize_rows", A);
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(A.shape());
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += A[i * c + j] * A[i * c + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = A[i * c + j] / norms[i];
  }
  Tensor saved = out;
  return unary(a, std::move(out), [r, c, y = std::move(saved), norms = std::move(norms)](Tensor& ga, const Tensor& g) {
    for (std::size_t i = 0; i < r; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < c; ++j) inner += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += (g[i * c + j] - y[i * c + j] * inner) / norms[i];
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return unary(a, Tensor::scalar(acc), [](Tensor& ga, const Tensor& g) {
    const double s = g[0];
    for (double& v : ga.values()) v += s;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dot(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.size() != B.size()) shape_fail("dot", A, B);
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * B[i];
  return a.tape->record(Tensor::scalar(acc), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const double s = g[0];
    if (t.requires_grad(a)) {
      const Tensor& B = t.value(b);
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < B.size(); ++i) ga[i] += s * B[i];
    }
    if (t.requires_grad(b)) {
      const Tensor& A = t.value(a);
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < A.size(); ++i) gb[i] += s * A[i];
    }
  });
}

Var mse_loss(Var pred, Var target) {
  const Tensor& P = pred.value();
  const Tensor& T = target.value();
  if (P.size() != T.size() || P.size() == 0) shape_fail("mse_loss", P, T);
  const double n = static_cast<double>(P.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double d = P[i] - T[i];
    acc += d * d;
  }
  return pred.tape->record(Tensor::scalar(acc / n), {pred, target}, [pred, target, n](Tape& t, const Tensor& g) {
    const Tensor& P = t.value(pred);
    const Tensor& T = t.value(target);
    const double s = 2.0 * g[0] / n;
    if (t.requires_grad(pred)) {
      Tensor& gp = t.grad(pred);
      for (std::size_t i = 0; i < P.size(); ++i) gp[i] += s * (P[i] - T[i]);
    }
    if (t.requires_grad(target)) {
      Tensor& gt = t.grad(target);
      for (std::size_t i = 0; i < P.size(); ++i) gt[i] -= s * (P[i] - T[i]);
    }
  });
}

Var cross_entropy_loss(Var logits, std::span<const int> labels) {
  const Tensor& Z = logits.value();
  require_matrix("cross_entropy_loss", Z);
  require_finite("cross_entropy_loss", Z);
  const std::size_t b = Z.rows(), c = Z.cols();
  if (labels.size() != b) {
    throw ShapeError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(Z.shape()));
  }
  Tensor probs({b, c});
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ShapeError("cross_entropy_loss: label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(c) + " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, Z[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(Z[i * c + j] - mx);
      s += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    total += mx + std::log(s) - Z[i * c + static_cast<std::size_t>(labels[i])];
  }
  std::vector<int> saved(labels.begin(), labels.end());
  const double inv_b = 1.0 / static_cast<double>(b);
  return unary(logits, Tensor::scalar(total * inv_b),
               [b, c, inv_b, probs = std::move(probs), labels = std::move(saved)](Tensor& gz, const Tensor& g) {
                 const double s = g[0] * inv_b;
                 for (std::size_t i = 0; i < b; ++i)
                   for (std::size_t j = 0; j < c; ++j) {
                     const double onehot = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
                     gz[i * c + j] += s * (probs[i * c + j] - onehot);
                   }
               });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double eps, double tol) {
  Param x("x", point);
  {
    Tape tape;
    Var loss = fn(tape, tape.watch(x));
    tape.backward(loss);
  }
  auto evaluate = [&](const Tensor& at) {
    Tape tape;
    return fn(tape, tape.constant(at)).value().item();
  };
  GradCheckReport report;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = evaluate(probe);
    probe[i] = orig - eps;
    const double down = evaluate(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = x.grad[i];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
    const double rel = std::fabs(analytic - numeric) / denom;
    if (i == 0 || !(rel <= report.max_rel_error)) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace pepco::ad
