#pragma once

#include <string>
#include <vector>

#include "evocap/autograd.hpp"
#include "evocap/params.hpp"

// Shared differentiable building blocks.

namespace evocap::nn {

// Non-differentiable reference forms; throw NumericError on NaN input.
Matrix softmax_rows(const Matrix& x);
// softmax over each column of (c * w1), transposed, times (c * w2): M x d_e.
Matrix weighted_pool(const Matrix& c, const Matrix& w1, const Matrix& w2);
Var weighted_pool(Var c, Var w1, Var w2);

// y = x W (+ b). W is in x out, b is 1 x out.
struct Linear {
  ParamId weight = 0;
  ParamId bias = 0;
  bool has_bias = true;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool bias = true);
  Var operator()(Tape& tape, Var x) const;
  void zero(ParamStore& store) const;
};

struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;
  std::size_t inner = 0;

  // q_dim/kv_dim: source widths; inner: projected width (split over heads);
  // out_dim: width after the output projection.
  static AttentionParams create(ParamStore& store, const std::string& name, std::size_t q_dim, std::size_t kv_dim,
                                std::size_t inner, std::size_t out_dim, std::size_t heads, Rng& rng);
};

// Scaled dot-product attention of projected queries over projected keys.
// mask (N_q x N_k, 0/1) removes keys per query; masked keys get exactly zero
// weight. `weights_out`, if given, receives one N_q x N_k matrix per head.
Var cross_attention(Tape& tape, Var queries, Var keys_values, const AttentionParams& p, const Matrix* mask = nullptr,
                    std::vector<Matrix>* weights_out = nullptr);

// Pre-norm encoder block: x + Attn(LN(x)); then h + FFN(LN(h)).
struct SelfAttentionBlock {
  ParamId ln1_gain = 0, ln1_bias = 0;
  ParamId ln2_gain = 0, ln2_bias = 0;
  AttentionParams attention;
  Linear ffn_in;
  Linear ffn_out;

  static SelfAttentionBlock create(ParamStore& store, const std::string& name, std::size_t dim, std::size_t ffn_dim,
                                   std::size_t heads, Rng& rng);
  Var operator()(Tape& tape, Var x, std::vector<Matrix>* weights_out = nullptr) const;
  // Zeroes the attention and FFN output projections, making the block an identity.
  void zero_branches(ParamStore& store) const;
};

Matrix sinusoidal_positions(std::size_t n, std::size_t dim);

}  // namespace evocap::nn
