#pragma once

#include <vector>

#include "evocap/model_config.hpp"
#include "evocap/nn.hpp"

// Dynamic emotion perception: one evolution step E^{t-1} -> E^t per
// generated word, driven by the video tokens and the caption prefix.

namespace evocap {

struct EvolutionParams {
  nn::Linear video_projection;  // d_v -> d_t, no bias
  ParamId pool_logits = 0;      // d_t x M
  ParamId pool_values = 0;      // d_t x d_e
  nn::Linear element_gate;      // [e_i ; context] (2 d_e) -> 1
  std::vector<std::size_t> subspaces;
  std::vector<nn::AttentionParams> modulators;  // output width k_j
  std::vector<nn::AttentionParams> scorers;     // output width 1

  static EvolutionParams create(ParamStore& store, const ModelConfig& cfg, Rng& rng);
  // Zeroes every modulator output projection, so each recomposed candidate is 0.
  void zero_subspace_outputs(ParamStore& store) const;
};

// Values captured from one step, for inspection and tests.
struct EvolutionTrace {
  Matrix combined;                  // C, (N + t) x d_t
  Matrix extended;                  // Y-bar, M x d_e
  Matrix alignment;                 // A', 1 x M
  Matrix element_factors;           // R_be, N x 1
  Matrix gated;                     // E-bar, N x d_e
  std::vector<Matrix> modulations;  // O_j, N x k_j
  std::vector<Matrix> candidates;   // E_j^t, N x d_e
  Matrix subspace_weights;          // R_aft, 1 x N_k
  Matrix evolved;                   // E^t
};

struct ExtendedFeatures {
  Var combined;
  Var extended;
};

struct ElementEvolution {
  Var alignment;
  Var factors;
  Var gated;
};

struct SubspaceRecomposition {
  std::vector<Var> modulations;
  std::vector<Var> candidates;
  Var weights;
  Var delta;    // sum_j R_aft[j] E_j^t
  Var evolved;  // E_prev + delta
};

// C = [V W_v ; Y_prev], Y-bar = weighted_pool(C, W_c1, W_c2).
ExtendedFeatures extend_features(Tape& tape, const EvolutionParams& p, Var video, Var prefix);

// A' = softmax(mean_rows(E_prev Y-bar^T)); R_be[i] = relu(gate([E_prev_i ; A' Y-bar]));
// E-bar = diag(R_be) E_prev.
ElementEvolution element_evolve(Tape& tape, const EvolutionParams& p, Var prev, Var extended);

// Per subspace j: O_j = tanh(Atten_e^j(gated, Y-bar)); E_j = gated scaled groupwise by O_j.
// R_aft = softmax(mean_rows([Atten_w^j(gated, Y-bar)]_j)); E^t = residual + sum_j R_aft[j] E_j.
SubspaceRecomposition subspace_recompose(Tape& tape, const EvolutionParams& p, Var gated, Var extended, Var residual);

Var evolve_step(Tape& tape, const EvolutionParams& p, Var prev, Var video, Var prefix, EvolutionOrder order,
                EvolutionMode mode = EvolutionMode::full, EvolutionTrace* trace = nullptr);

}  // namespace evocap
