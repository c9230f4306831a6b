#include "evocap/decoder.hpp"

#include <cmath>

#include "evocap/errors.hpp"

namespace evocap {

TextCorrelator TextCorrelator::create(ParamStore& store, const std::string& name, std::size_t d_text,
                                      std::size_t d_cond, std::size_t width, Rng& rng) {
  TextCorrelator t;
  t.caption_proj =
      store.add(name + ".caption_proj", uniform_matrix(d_text, width, 1.0 / std::sqrt(static_cast<double>(d_text)), rng));
  t.cond_proj =
      store.add(name + ".cond_proj", uniform_matrix(d_cond, width, 1.0 / std::sqrt(static_cast<double>(d_cond)), rng));
  t.bias = store.add(name + ".bias", Matrix(1, width));
  t.score = store.add(name + ".score", uniform_matrix(1, width, 1.0 / std::sqrt(static_cast<double>(width)), rng));
  return t;
}

Var TextCorrelator::operator()(Tape& tape, Var prefix, Var cond, Matrix* attention_out) const {
  Var yw = ad::matmul(prefix, tape.param(caption_proj));
  Var sh = ad::matmul(cond, tape.param(cond_proj));
  Var weights = ad::softmax_rows(ad::additive_scores(yw, sh, tape.param(bias), tape.param(score)));  // N x L
  if (attention_out) *attention_out = weights.value();
  return ad::matmul(weights, prefix);
}

DecoderParams DecoderParams::create(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  DecoderParams p;
  p.hidden = cfg.hidden;
  p.prev_word_input = cfg.prev_word_input;
  p.max_prefix_words = cfg.max_len;
  p.word_embeddings = store.add("decoder.word_embeddings", uniform_matrix(cfg.vocab_size, cfg.d_text, cfg.embedding_init, rng));
  p.visual = TextCorrelator::create(store, "decoder.text_visual", cfg.d_text, cfg.d_video, cfg.attn_dim(), rng);
  p.emotional = TextCorrelator::create(store, "decoder.text_emotion", cfg.d_text, cfg.d_emotion, cfg.attn_dim(), rng);
  p.gate = nn::Linear::create(store, "decoder.gate", cfg.d_text, 1, rng);
  const std::size_t in = cfg.d_video + cfg.d_text + cfg.d_emotion + (cfg.prev_word_input ? cfg.d_text : 0);
  p.cell_input = nn::Linear::create(store, "decoder.cell_input", in, 4 * cfg.hidden, rng);
  p.cell_recurrent = store.add("decoder.cell_recurrent",
                               uniform_matrix(cfg.hidden, 4 * cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)), rng));
  // Forget-gate bias starts at 1.
  Matrix& b = store.value(p.cell_input.bias);
  for (std::size_t i = cfg.hidden; i < 2 * cfg.hidden; ++i) b[i] = 1.0;
  p.head = nn::Linear::create(store, "decoder.head", cfg.hidden, cfg.vocab_size, rng);
  return p;
}

DecoderState initial_state(Tape& tape, const DecoderParams& p, std::size_t bos_id) {
  DecoderState s;
  s.prefix = {bos_id};
  s.hidden = tape.constant(Matrix(1, p.hidden));
  s.cell = tape.constant(Matrix(1, p.hidden));
  return s;
}

Var emotion_gate(Tape& tape, const DecoderParams& p, Var text_emotional) {
  return ad::sigmoid(p.gate(tape, text_emotional));
}

Var prefix_features(Tape& tape, const DecoderParams& p, const DecoderState& state) {
  if (state.prefix.empty()) throw ValidationError("decoder prefix must start with BOS");
  return ad::gather_rows(tape.param(p.word_embeddings), state.prefix);
}

DecodeStep decode_step(Tape& tape, const DecoderParams& p, Var video, Var emotion, const DecoderState& state,
                       const DecodeOptions& options) {
  if (state.prefix.size() > p.max_prefix_words + 1)
    throw ValidationError("caption prefix already holds " + std::to_string(state.prefix.size() - 1) +
                          " words (max " + std::to_string(p.max_prefix_words) + ")");
  if (video.rows() != emotion.rows())
    throw ShapeError("decode_step: video has " + std::to_string(video.rows()) + " tokens, emotion has " +
                     std::to_string(emotion.rows()));
  DecodeStep out;
  Var prefix = prefix_features(tape, p, state);
  out.text_visual = p.visual(tape, prefix, video);
  out.text_emotional = p.emotional(tape, prefix, emotion);
  out.gate = options.gate_override ? tape.constant(Matrix(emotion.rows(), 1, *options.gate_override))
                                   : emotion_gate(tape, p, out.text_emotional);

  const Var blocks[] = {video, out.text_visual, ad::scale_rows(emotion, out.gate)};
  Var pooled = ad::mean_rows(ad::concat_cols(blocks));  // 1 x (d_v + d_t + d_e)
  Var cell_in = pooled;
  if (p.prev_word_input) {
    const std::size_t last[] = {state.prefix.back()};
    const Var parts[] = {pooled, ad::gather_rows(tape.param(p.word_embeddings), last)};
    cell_in = ad::concat_cols(parts);
  }

  const std::size_t h = p.hidden;
  Var z = ad::add(p.cell_input(tape, cell_in), ad::matmul(state.hidden, tape.param(p.cell_recurrent)));
  Var in_gate = ad::sigmoid(ad::slice_cols(z, 0, h));
  Var forget_gate = ad::sigmoid(ad::slice_cols(z, h, h));
  Var candidate = ad::tanh(ad::slice_cols(z, 2 * h, h));
  Var out_gate = ad::sigmoid(ad::slice_cols(z, 3 * h, h));
  Var cell = ad::add(ad::hadamard(forget_gate, state.cell), ad::hadamard(in_gate, candidate));
  Var hidden = ad::hadamard(out_gate, ad::tanh(cell));

  out.probabilities = ad::softmax_rows(p.head(tape, hidden));
  out.next.prefix = state.prefix;
  out.next.hidden = hidden;
  out.next.cell = cell;
  return out;
}

}  // namespace evocap
