#include "evocap/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "evocap/errors.hpp"
#include "evocap/kernels/kernels.hpp"

namespace evocap {

Tape::Tape(const ParamStore* params, bool grad_enabled)
    : params_(params), grad_enabled_(grad_enabled), bound_(params ? params->size() : 0, -1) {
  nodes_.reserve(256);
}

Var Tape::constant(Matrix m) {
  Node n;
  n.owned = std::move(m);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Matrix m) {
  Var v = constant(std::move(m));
  nodes_.back().needs_grad = grad_enabled_;
  return v;
}

Var Tape::param(ParamId id) {
  if (!params_) throw ValidationError("tape has no parameter store");
  auto& slot = bound_.at(id);
  if (slot >= 0) return {this, static_cast<std::uint32_t>(slot)};
  Node n;
  n.ref = &params_->value(id);
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  slot = static_cast<std::int64_t>(nodes_.size() - 1);
  return {this, static_cast<std::uint32_t>(slot)};
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward fn) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (Var p : parents) {
      if (p.tape != this) throw ValidationError("op mixes variables from different tapes");
      if (nodes_[p.id].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.owned;
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) {
    const Matrix& val = n.ref ? *n.ref : n.owned;
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!nodes_[v.id].needs_grad) return;
  Matrix& buf = grad_buffer(v);
  if (!buf.same_shape(g)) throw ShapeError("gradient shape mismatch in backward");
  buf += g;
}

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  return nodes_[v.id].grad.empty() ? empty : nodes_[v.id].grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw ShapeError("backward root must be 1x1, got " + value(root).shape_string());
  if (!nodes_[root.id].needs_grad) return;
  grad_buffer(root)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only touch parents (lower ids), so n stays put.
    n.backward(*this, n.grad, n.owned);
  }
}

void Tape::collect_param_grads(Gradients& out) const {
  for (std::size_t id = 0; id < bound_.size(); ++id) {
    if (bound_[id] < 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(bound_[id])];
    if (!n.grad.empty()) out.add(static_cast<ParamId>(id), n.grad);
  }
}

namespace ad {
namespace {

void same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": " + a.value().shape_string() + " vs " + b.value().shape_string());
}

Matrix map(const Matrix& x, double (*f)(double)) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = evocap::matmul(a.value(), b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    const auto& k = kernels::active();
    if (t.needs_grad(a)) k.gemm_nt(g.rows(), av.cols(), g.cols(), g.data(), bv.data(), t.grad_buffer(a).data());
    if (t.needs_grad(b)) k.gemm_tn(bv.rows(), bv.cols(), av.rows(), av.data(), g.data(), t.grad_buffer(b).data());
  });
}

Var matmul_nt(Var a, Var b) {
  Matrix out = evocap::matmul_nt(a.value(), b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    const auto& k = kernels::active();
    // out = a b^T: da = g b, db = g^T a
    if (t.needs_grad(a)) k.gemm_nn(g.rows(), av.cols(), g.cols(), g.data(), bv.data(), t.grad_buffer(a).data());
    if (t.needs_grad(b)) k.gemm_tn(bv.rows(), bv.cols(), g.rows(), g.data(), av.data(), t.grad_buffer(b).data());
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Matrix out = a.value();
  out += b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Matrix out = a.value();
  kernels::active().axpy(-1.0, b.value().data(), out.data(), out.size());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) kernels::active().axpy(-1.0, g.data(), t.grad_buffer(b).data(), g.size());
  });
}

Var hadamard(Var a, Var b) {
  same_shape(a, b, "hadamard");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.needs_grad(a)) {
      Matrix& ga = t.grad_buffer(a);
      const Matrix& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      Matrix& gb = t.grad_buffer(b);
      const Matrix& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  out *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) {
    kernels::active().axpy(s, g.data(), t.grad_buffer(a).data(), g.size());
  });
}

Var add_row(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ShapeError("add_row: bias " + bv.shape_string() + " for " + av.shape_string());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::active().axpy(1.0, bv.data(), out.row(r).data(), out.cols());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) {
      Matrix& gb = t.grad_buffer(b);
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::active().axpy(1.0, g.row(r).data(), gb.data(), g.cols());
    }
  });
}

Var scale_rows(Var a, Var s) {
  const Matrix& av = a.value();
  const Matrix& sv = s.value();
  if (sv.rows() != av.rows() || sv.cols() != 1)
    throw ShapeError("scale_rows: scales " + sv.shape_string() + " for " + av.shape_string());
  Matrix out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = sv[r] * av(r, c);
  return a.tape->record(std::move(out), {a, s}, [a, s](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& av = t.value(a);
    const Matrix& sv = t.value(s);
    if (t.needs_grad(a)) {
      Matrix& ga = t.grad_buffer(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        kernels::active().axpy(sv[r], g.row(r).data(), ga.row(r).data(), g.cols());
    }
    if (t.needs_grad(s)) {
      Matrix& gs = t.grad_buffer(s);
      for (std::size_t r = 0; r < g.rows(); ++r)
        gs[r] += kernels::active().dot(g.row(r).data(), av.row(r).data(), g.cols());
    }
  });
}

Var group_scale(Var x, Var s) {
  const Matrix& xv = x.value();
  const Matrix& sv = s.value();
  const std::size_t groups = sv.cols();
  if (sv.rows() != xv.rows() || groups == 0 || xv.cols() % groups != 0)
    throw ShapeError("group_scale: scales " + sv.shape_string() + " for " + xv.shape_string());
  const std::size_t width = xv.cols() / groups;
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) * sv(r, c / width);
  return x.tape->record(std::move(out), {x, s}, [x, s, width](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& xv = t.value(x);
    const Matrix& sv = t.value(s);
    if (t.needs_grad(x)) {
      Matrix& gx = t.grad_buffer(x);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) += g(r, c) * sv(r, c / width);
    }
    if (t.needs_grad(s)) {
      Matrix& gs = t.grad_buffer(s);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gs(r, c / width) += g(r, c) * xv(r, c);
    }
  });
}

Var transpose(Var a) {
  return a.tape->record(a.value().transposed(), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.transposed());
  });
}

Var tanh(Var a) {
  Matrix out = map(a.value(), [](double v) { return std::tanh(v); });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& yv) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var sigmoid(Var a) {
  Matrix out = map(a.value(), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& yv) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var relu(Var a) {
  Matrix out = map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& ga = t.grad_buffer(a);
    const Matrix& av = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  });
}

Var softmax_rows(Var a, const Matrix* mask) {
  const Matrix& x = a.value();
  if (mask && !mask->same_shape(x))
    throw ShapeError("softmax mask " + mask->shape_string() + " for " + x.shape_string());
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double v = x(r, c);
      if (std::isnan(v)) throw NumericError("softmax input contains NaN");
      if (mask && (*mask)(r, c) == 0.0) continue;
      any = true;
      mx = std::max(mx, v);
    }
    if (!any) throw NumericError("softmax row " + std::to_string(r) + " is fully masked");
    double sum = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (mask && (*mask)(r, c) == 0.0) continue;
      out(r, c) = std::exp(x(r, c) - mx);
      sum += out(r, c);
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) *= inv;
  }
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& yv) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double inner = kernels::active().dot(g.row(r).data(), yv.row(r).data(), g.cols());
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += yv(r, c) * (g(r, c) - inner);
    }
  });
}

Var mean_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw ShapeError("mean_rows of empty matrix");
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) kernels::active().axpy(1.0, x.row(r).data(), out.data(), x.cols());
  out *= 1.0 / static_cast<double>(x.rows());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& ga = t.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(ga.rows());
    for (std::size_t r = 0; r < ga.rows(); ++r) kernels::active().axpy(inv, g.data(), ga.row(r).data(), g.cols());
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->record(Matrix(1, 1, s), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& ga = t.grad_buffer(a);
    for (double& v : ga.values()) v += g[0];
  });
}

Var weighted_sum(Var a, const Matrix& w) {
  if (!a.value().same_shape(w)) throw ShapeError("weighted_sum weight shape");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += a.value()[i] * w[i];
  return a.tape->record(Matrix(1, 1, s), {a}, [a, w](Tape& t, const Matrix& g, const Matrix&) {
    kernels::active().axpy(g[0], w.data(), t.grad_buffer(a).data(), w.size());
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  Tape* tape = parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + at * cols);
    at += v.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [keep, cols](Tape& t, const Matrix& g, const Matrix&) {
    std::size_t row = 0;
    for (Var p : keep) {
      const std::size_t n = t.value(p).rows();
      if (t.needs_grad(p)) {
        Matrix& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < n * cols; ++i) gp[i] += g[row * cols + i];
      }
      row += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape* tape = parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, at + c) = v(r, c);
    at += v.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [keep](Tape& t, const Matrix& g, const Matrix&) {
    std::size_t col = 0;
    for (Var p : keep) {
      const std::size_t w = t.value(p).cols();
      if (t.needs_grad(p)) {
        Matrix& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, col + c);
      }
      col += w;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t len) {
  const Matrix& x = a.value();
  if (start + len > x.cols()) throw ShapeError("slice_cols out of range");
  Matrix out(x.rows(), len);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < len; ++c) out(r, c) = x(r, start + c);
  return a.tape->record(std::move(out), {a}, [a, start](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) throw ShapeError("gather_rows index " + std::to_string(ids[i]) + " out of range");
    std::copy(tv.row(ids[i]).begin(), tv.row(ids[i]).end(), out.row(i).begin());
  }
  std::vector<std::size_t> keep(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {table}, [table, keep](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& gt = t.grad_buffer(table);
    for (std::size_t i = 0; i < keep.size(); ++i)
      kernels::active().axpy(1.0, g.row(i).data(), gt.row(keep[i]).data(), g.cols());
  });
}

Var repeat_rows(Var a, std::size_t n) {
  const Matrix& x = a.value();
  if (x.rows() != 1) throw ShapeError("repeat_rows expects a row vector");
  Matrix out(n, x.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data(), x.data() + x.cols(), out.row(r).data());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r) kernels::active().axpy(1.0, g.row(r).data(), ga.data(), g.cols());
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw ShapeError("layer_norm affine shape");
  Matrix normed(n, d);
  Matrix inv_std(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) normed(r, c) = (xv(r, c) - mean) * inv_std[r];
  }
  Matrix out(n, d);
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = normed(r, c) * gv[c] + bv[c];
  return x.tape->record(std::move(out), {x, gain, bias},
                        [x, gain, bias, normed, inv_std](Tape& t, const Matrix& g, const Matrix&) {
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    const Matrix& gv = t.value(gain);
    if (t.needs_grad(gain)) {
      Matrix& gg = t.grad_buffer(gain);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gg[c] += g(r, c) * normed(r, c);
    }
    if (t.needs_grad(bias)) {
      Matrix& gb = t.grad_buffer(bias);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += g(r, c);
    }
    if (t.needs_grad(x)) {
      Matrix& gx = t.grad_buffer(x);
      for (std::size_t r = 0; r < n; ++r) {
        double mean_dn = 0.0;
        double mean_dn_n = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double dn = g(r, c) * gv[c];
          mean_dn += dn;
          mean_dn_n += dn * normed(r, c);
        }
        mean_dn /= static_cast<double>(d);
        mean_dn_n /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
          const double dn = g(r, c) * gv[c];
          gx(r, c) += inv_std[r] * (dn - mean_dn - normed(r, c) * mean_dn_n);
        }
      }
    }
  });
}

Var additive_scores(Var yw, Var sh, Var b, Var v) {
  const Matrix& y = yw.value();
  const Matrix& s = sh.value();
  const Matrix& bv = b.value();
  const Matrix& vv = v.value();
  const std::size_t h = y.cols();
  if (s.cols() != h || bv.rows() != 1 || bv.cols() != h || vv.rows() != 1 || vv.cols() != h)
    throw ShapeError("additive_scores projection widths disagree");
  const std::size_t len = y.rows();
  const std::size_t n = s.rows();
  Matrix out(n, len);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < len; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < h; ++a) acc += vv[a] * std::tanh(y(i, a) + s(j, a) + bv[a]);
      out(j, i) = acc;
    }
  return yw.tape->record(std::move(out), {yw, sh, b, v}, [yw, sh, b, v](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& y = t.value(yw);
    const Matrix& s = t.value(sh);
    const Matrix& bv = t.value(b);
    const Matrix& vv = t.value(v);
    const std::size_t h = y.cols();
    Matrix gy(y.rows(), h), gs(s.rows(), h), gb(1, h), gv(1, h);
    for (std::size_t j = 0; j < s.rows(); ++j)
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double go = g(j, i);
        for (std::size_t a = 0; a < h; ++a) {
          const double th = std::tanh(y(i, a) + s(j, a) + bv[a]);
          gv[a] += go * th;
          const double dz = go * vv[a] * (1.0 - th * th);
          gy(i, a) += dz;
          gs(j, a) += dz;
          gb[a] += dz;
        }
      }
    t.accumulate(yw, gy);
    t.accumulate(sh, gs);
    t.accumulate(b, gb);
    t.accumulate(v, gv);
  });
}

Var weighted_nll(Var probs, std::span<const std::size_t> targets, std::span<const double> weights, double eps) {
  const Matrix& p = probs.value();
  if (targets.size() != p.rows() || weights.size() != p.rows())
    throw ShapeError("weighted_nll: " + std::to_string(targets.size()) + " targets for " + p.shape_string());
  double loss = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (targets[r] >= p.cols()) throw ShapeError("weighted_nll target out of range");
    loss -= weights[r] * std::log(std::max(p(r, targets[r]), eps));
  }
  std::vector<std::size_t> tk(targets.begin(), targets.end());
  std::vector<double> wk(weights.begin(), weights.end());
  return probs.tape->record(Matrix(1, 1, loss), {probs}, [probs, tk, wk, eps](Tape& t, const Matrix& g, const Matrix&) {
    Matrix& gp = t.grad_buffer(probs);
    const Matrix& p = t.value(probs);
    for (std::size_t r = 0; r < tk.size(); ++r) {
      const double pv = p(r, tk[r]);
      if (pv > eps) gp(r, tk[r]) -= g[0] * wk[r] / pv;
    }
  });
}

}  // namespace ad
}  // namespace evocap
