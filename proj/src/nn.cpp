#include "evocap/nn.hpp"

#include <cmath>

#include "evocap/errors.hpp"

namespace evocap::nn {

Matrix softmax_rows(const Matrix& x) {
  Tape tape(nullptr, false);
  return ad::softmax_rows(tape.constant(x)).value();
}

Matrix weighted_pool(const Matrix& c, const Matrix& w1, const Matrix& w2) {
  Tape tape(nullptr, false);
  return weighted_pool(tape.constant(c), tape.constant(w1), tape.constant(w2)).value();
}

Var weighted_pool(Var c, Var w1, Var w2) {
  if (c.cols() != w1.rows() || c.cols() != w2.rows())
    throw ShapeError("weighted_pool: C " + c.value().shape_string() + " with W1 " + w1.value().shape_string() +
                     " and W2 " + w2.value().shape_string());
  // Each of the M pooled rows is a convex combination of the rows of C W2.
  Var pool_weights = ad::softmax_rows(ad::transpose(ad::matmul(c, w1)));  // M x L
  return ad::matmul(pool_weights, ad::matmul(c, w2));
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = bias;
  l.weight = store.add(name + ".weight", uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (bias) l.bias = store.add(name + ".bias", Matrix(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = ad::matmul(x, tape.param(weight));
  return has_bias ? ad::add_row(y, tape.param(bias)) : y;
}

void Linear::zero(ParamStore& store) const {
  store.value(weight) = Matrix(in, out);
  if (has_bias) store.value(bias) = Matrix(1, out);
}

AttentionParams AttentionParams::create(ParamStore& store, const std::string& name, std::size_t q_dim,
                                        std::size_t kv_dim, std::size_t inner, std::size_t out_dim, std::size_t heads,
                                        Rng& rng) {
  if (heads == 0 || inner % heads != 0)
    throw ValidationError(name + ": inner width " + std::to_string(inner) + " not divisible by " +
                          std::to_string(heads) + " heads");
  AttentionParams p;
  p.heads = heads;
  p.inner = inner;
  p.query = Linear::create(store, name + ".query", q_dim, inner, rng);
  p.key = Linear::create(store, name + ".key", kv_dim, inner, rng);
  p.value = Linear::create(store, name + ".value", kv_dim, inner, rng);
  p.output = Linear::create(store, name + ".output", inner, out_dim, rng);
  return p;
}

Var cross_attention(Tape& tape, Var queries, Var keys_values, const AttentionParams& p, const Matrix* mask,
                    std::vector<Matrix>* weights_out) {
  if (queries.cols() != p.query.in || keys_values.cols() != p.key.in)
    throw ShapeError("cross_attention: sources " + queries.value().shape_string() + " / " +
                     keys_values.value().shape_string() + " do not match projections");
  if (mask && (mask->rows() != queries.rows() || mask->cols() != keys_values.rows()))
    throw ShapeError("cross_attention: mask " + mask->shape_string() + " for " + std::to_string(queries.rows()) +
                     " queries and " + std::to_string(keys_values.rows()) + " keys");
  Var q = p.query(tape, queries);
  Var k = p.key(tape, keys_values);
  Var v = p.value(tape, keys_values);
  const std::size_t head_dim = p.inner / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Var qh = p.heads == 1 ? q : ad::slice_cols(q, h * head_dim, head_dim);
    Var kh = p.heads == 1 ? k : ad::slice_cols(k, h * head_dim, head_dim);
    Var vh = p.heads == 1 ? v : ad::slice_cols(v, h * head_dim, head_dim);
    Var w = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale), mask);
    if (weights_out) weights_out->push_back(w.value());
    heads.push_back(ad::matmul(w, vh));
  }
  Var mixed = p.heads == 1 ? heads[0] : ad::concat_cols(heads);
  return p.output(tape, mixed);
}

SelfAttentionBlock SelfAttentionBlock::create(ParamStore& store, const std::string& name, std::size_t dim,
                                              std::size_t ffn_dim, std::size_t heads, Rng& rng) {
  SelfAttentionBlock b;
  b.ln1_gain = store.add(name + ".ln1.gain", Matrix(1, dim, 1.0));
  b.ln1_bias = store.add(name + ".ln1.bias", Matrix(1, dim));
  b.attention = AttentionParams::create(store, name + ".attn", dim, dim, dim, dim, heads, rng);
  b.ln2_gain = store.add(name + ".ln2.gain", Matrix(1, dim, 1.0));
  b.ln2_bias = store.add(name + ".ln2.bias", Matrix(1, dim));
  b.ffn_in = Linear::create(store, name + ".ffn_in", dim, ffn_dim, rng);
  b.ffn_out = Linear::create(store, name + ".ffn_out", ffn_dim, dim, rng);
  return b;
}

Var SelfAttentionBlock::operator()(Tape& tape, Var x, std::vector<Matrix>* weights_out) const {
  Var n1 = ad::layer_norm(x, tape.param(ln1_gain), tape.param(ln1_bias));
  Var h = ad::add(x, cross_attention(tape, n1, n1, attention, nullptr, weights_out));
  Var n2 = ad::layer_norm(h, tape.param(ln2_gain), tape.param(ln2_bias));
  return ad::add(h, ffn_out(tape, ad::relu(ffn_in(tape, n2))));
}

void SelfAttentionBlock::zero_branches(ParamStore& store) const {
  attention.output.zero(store);
  ffn_out.zero(store);
}

Matrix sinusoidal_positions(std::size_t n, std::size_t dim) {
  Matrix pe(n, dim);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * rate) : std::cos(static_cast<double>(pos) * rate);
    }
  return pe;
}

}  // namespace evocap::nn
