#pragma once

#include <optional>
#include <vector>

#include "evocap/model_config.hpp"
#include "evocap/nn.hpp"

// Adaptive caption generation: correlated text features, the emotion
// intensity gate and one recurrent decoding step.

namespace evocap {

// Additive attention of each conditioning row over the caption prefix:
//   score(j, i) = v . tanh(W_r y_i + H_r s_j + b_r), softmax over i,
//   out_j = sum_i a(j, i) y_i.
struct TextCorrelator {
  ParamId caption_proj = 0;  // W_r, d_t x h
  ParamId cond_proj = 0;     // H_r, d_s x h
  ParamId bias = 0;          // b_r, 1 x h
  ParamId score = 0;         // v, 1 x h

  static TextCorrelator create(ParamStore& store, const std::string& name, std::size_t d_text, std::size_t d_cond,
                               std::size_t width, Rng& rng);
  // prefix: L x d_t, cond: N x d_s -> N x d_t. `attention_out` receives N x L weights.
  Var operator()(Tape& tape, Var prefix, Var cond, Matrix* attention_out = nullptr) const;
};

struct DecoderParams {
  ParamId word_embeddings = 0;  // D x d_t
  TextCorrelator visual;
  TextCorrelator emotional;
  nn::Linear gate;              // d_t -> 1
  nn::Linear cell_input;        // cell input -> 4H (with bias)
  ParamId cell_recurrent = 0;   // H x 4H
  nn::Linear head;              // H -> D
  std::size_t hidden = 0;
  bool prev_word_input = true;
  std::size_t max_prefix_words = 15;

  static DecoderParams create(ParamStore& store, const ModelConfig& cfg, Rng& rng);
};

struct DecoderState {
  // Token ids fed so far; prefix[0] is BOS.
  std::vector<std::size_t> prefix;
  Var hidden;  // 1 x H
  Var cell;    // 1 x H
};

struct DecodeOptions {
  // Replaces g^t by this constant (test harness hook).
  std::optional<double> gate_override;
};

struct DecodeStep {
  Var probabilities;   // 1 x D
  Var gate;            // N x 1
  Var text_visual;     // T_v, N x d_t
  Var text_emotional;  // T_e, N x d_t
  DecoderState next;   // prefix not yet extended: the caller appends the chosen word
};

DecoderState initial_state(Tape& tape, const DecoderParams& p, std::size_t bos_id);

// g = sigmoid(T_e W_g + b_g), N x 1.
Var emotion_gate(Tape& tape, const DecoderParams& p, Var text_emotional);

// Caption prefix features Y_prev (L x d_t) for the current state.
Var prefix_features(Tape& tape, const DecoderParams& p, const DecoderState& state);

DecodeStep decode_step(Tape& tape, const DecoderParams& p, Var video, Var emotion, const DecoderState& state,
                       const DecodeOptions& options = {});

}  // namespace evocap
