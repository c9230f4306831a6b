#include "evocap/evolution.hpp"

#include <cmath>

#include "evocap/errors.hpp"

namespace evocap {

EvolutionParams EvolutionParams::create(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  EvolutionParams p;
  const std::size_t de = cfg.d_emotion;
  if (cfg.extension == 0) throw ValidationError("extension size M must be positive");
  p.video_projection = nn::Linear::create(store, "evolve.video_proj", cfg.d_video, cfg.d_text, rng, false);
  const double limit = 1.0 / std::sqrt(static_cast<double>(cfg.d_text));
  p.pool_logits = store.add("evolve.pool_logits", uniform_matrix(cfg.d_text, cfg.extension, limit, rng));
  p.pool_values = store.add("evolve.pool_values", uniform_matrix(cfg.d_text, de, limit, rng));
  p.element_gate = nn::Linear::create(store, "evolve.element_gate", 2 * de, 1, rng);
  // Start with the gate open (R_be near 1) rather than near the ReLU kink.
  store.value(p.element_gate.bias)[0] = 1.0;
  p.subspaces = cfg.subspaces;
  for (std::size_t j = 0; j < p.subspaces.size(); ++j) {
    const std::size_t k = p.subspaces[j];
    if (k == 0 || de % k != 0)
      throw ValidationError("subspace count " + std::to_string(k) + " does not divide d_e=" + std::to_string(de));
    const std::string tag = "evolve.subspace" + std::to_string(j);
    p.modulators.push_back(
        nn::AttentionParams::create(store, tag + ".modulate", de, de, cfg.attn_dim(), k, cfg.heads, rng));
    p.scorers.push_back(nn::AttentionParams::create(store, tag + ".score", de, de, cfg.attn_dim(), 1, cfg.heads, rng));
  }
  return p;
}

void EvolutionParams::zero_subspace_outputs(ParamStore& store) const {
  for (const auto& m : modulators) m.output.zero(store);
}

ExtendedFeatures extend_features(Tape& tape, const EvolutionParams& p, Var video, Var prefix) {
  if (prefix.rows() == 0) throw ShapeError("extend_features: caption prefix must hold at least the BOS row");
  ExtendedFeatures out;
  const Var rows[] = {p.video_projection(tape, video), prefix};
  out.combined = ad::concat_rows(rows);
  out.extended = nn::weighted_pool(out.combined, tape.param(p.pool_logits), tape.param(p.pool_values));
  return out;
}

ElementEvolution element_evolve(Tape& tape, const EvolutionParams& p, Var prev, Var extended) {
  if (prev.cols() != extended.cols())
    throw ShapeError("element_evolve: E " + prev.value().shape_string() + " vs Y-bar " +
                     extended.value().shape_string());
  ElementEvolution out;
  out.alignment = ad::softmax_rows(ad::mean_rows(ad::matmul_nt(prev, extended)));  // 1 x M
  Var context = ad::matmul(out.alignment, extended);                               // 1 x d_e
  const Var parts[] = {prev, ad::repeat_rows(context, prev.rows())};
  out.factors = ad::relu(p.element_gate(tape, ad::concat_cols(parts)));  // N x 1
  out.gated = ad::scale_rows(prev, out.factors);
  return out;
}

SubspaceRecomposition subspace_recompose(Tape& tape, const EvolutionParams& p, Var gated, Var extended, Var residual) {
  if (!gated.value().same_shape(residual.value()))
    throw ShapeError("subspace_recompose: gated and residual shapes differ");
  SubspaceRecomposition out;
  std::vector<Var> scores;
  for (std::size_t j = 0; j < p.subspaces.size(); ++j) {
    Var o = ad::tanh(nn::cross_attention(tape, gated, extended, p.modulators[j]));  // N x k_j
    out.modulations.push_back(o);
    out.candidates.push_back(ad::group_scale(gated, o));
    scores.push_back(nn::cross_attention(tape, gated, extended, p.scorers[j]));  // N x 1
  }
  out.weights = ad::softmax_rows(ad::mean_rows(ad::concat_cols(scores)));  // 1 x N_k
  Var delta;
  for (std::size_t j = 0; j < out.candidates.size(); ++j) {
    Var w = ad::slice_cols(out.weights, j, 1);
    Var term = ad::scale_rows(out.candidates[j], ad::repeat_rows(w, gated.rows()));
    delta = j == 0 ? term : ad::add(delta, term);
  }
  out.delta = delta;
  out.evolved = ad::add(residual, delta);
  return out;
}

namespace {

void fill(EvolutionTrace& t, const ExtendedFeatures& x) {
  t.combined = x.combined.value();
  t.extended = x.extended.value();
}

void fill(EvolutionTrace& t, const ElementEvolution& e) {
  t.alignment = e.alignment.value();
  t.element_factors = e.factors.value();
  t.gated = e.gated.value();
}

void fill(EvolutionTrace& t, const SubspaceRecomposition& s) {
  for (Var v : s.modulations) t.modulations.push_back(v.value());
  for (Var v : s.candidates) t.candidates.push_back(v.value());
  t.subspace_weights = s.weights.value();
}

}  // namespace

Var evolve_step(Tape& tape, const EvolutionParams& p, Var prev, Var video, Var prefix, EvolutionOrder order,
                EvolutionMode mode, EvolutionTrace* trace) {
  const ExtendedFeatures ext = extend_features(tape, p, video, prefix);
  if (trace) {
    *trace = EvolutionTrace{};
    fill(*trace, ext);
  }
  Var evolved = prev;
  switch (mode) {
    case EvolutionMode::none:
      break;
    case EvolutionMode::element_only: {
      const ElementEvolution el = element_evolve(tape, p, prev, ext.extended);
      if (trace) fill(*trace, el);
      evolved = el.gated;
      break;
    }
    case EvolutionMode::subspace_only: {
      const SubspaceRecomposition sub = subspace_recompose(tape, p, prev, ext.extended, prev);
      if (trace) fill(*trace, sub);
      evolved = sub.evolved;
      break;
    }
    case EvolutionMode::full:
      if (order == EvolutionOrder::element_then_subspace) {
        const ElementEvolution el = element_evolve(tape, p, prev, ext.extended);
        const SubspaceRecomposition sub = subspace_recompose(tape, p, el.gated, ext.extended, prev);
        if (trace) {
          fill(*trace, el);
          fill(*trace, sub);
        }
        evolved = sub.evolved;
      } else {
        // Recompose first, then let the element factors gate the update.
        const SubspaceRecomposition sub = subspace_recompose(tape, p, prev, ext.extended, prev);
        const ElementEvolution el = element_evolve(tape, p, prev, ext.extended);
        Var gated_delta = ad::scale_rows(sub.delta, el.factors);
        evolved = ad::add(prev, gated_delta);
        if (trace) {
          fill(*trace, sub);
          trace->alignment = el.alignment.value();
          trace->element_factors = el.factors.value();
          trace->gated = gated_delta.value();
        }
      }
      break;
  }
  if (trace) trace->evolved = evolved.value();
  return evolved;
}

}  // namespace evocap
