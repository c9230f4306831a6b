#include "evocap/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evocap/errors.hpp"

namespace evocap {

std::string to_string(EvolutionOrder o) {
  return o == EvolutionOrder::element_then_subspace ? "element_then_subspace" : "subspace_then_element";
}

std::string to_string(EvolutionMode m) {
  switch (m) {
    case EvolutionMode::full: return "full";
    case EvolutionMode::element_only: return "element_only";
    case EvolutionMode::subspace_only: return "subspace_only";
    case EvolutionMode::none: return "none";
  }
  return "full";
}

EvolutionOrder parse_evolution_order(std::string_view s) {
  if (s == "element_then_subspace" || s == "E->S" || s == "es") return EvolutionOrder::element_then_subspace;
  if (s == "subspace_then_element" || s == "S->E" || s == "se") return EvolutionOrder::subspace_then_element;
  throw ValidationError("unknown evolution order: " + std::string(s));
}

EvolutionMode parse_evolution_mode(std::string_view s) {
  if (s == "full") return EvolutionMode::full;
  if (s == "element_only") return EvolutionMode::element_only;
  if (s == "subspace_only") return EvolutionMode::subspace_only;
  if (s == "none") return EvolutionMode::none;
  throw ValidationError("unknown evolution mode: " + std::string(s));
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ValidationError(std::string(what) + " must be positive");
  };
  positive(d_appearance, "d_appearance");
  positive(d_motion, "d_motion");
  positive(d_video, "d_video");
  positive(d_text, "d_text");
  positive(d_emotion, "d_emotion");
  positive(hidden, "hidden");
  positive(ffn_dim, "ffn_dim");
  positive(heads, "heads");
  positive(extension, "extension");
  positive(vocab_size, "vocab_size");
  positive(n_categories, "n_categories");
  positive(n_words, "n_words");
  if (d_video % 2 != 0) throw ValidationError("d_video must be even");
  if (d_video % heads != 0 || attn_dim() % heads != 0) throw ValidationError("head count must divide attention widths");
  if (top_k == 0 || top_k > n_categories)
    throw ValidationError("top_k must be in [1, " + std::to_string(n_categories) + "]");
  if (subspaces.empty() && (mode == EvolutionMode::full || mode == EvolutionMode::subspace_only))
    throw ValidationError("subspace list is empty");
  for (std::size_t k : subspaces)
    if (k == 0 || d_emotion % k != 0)
      throw ValidationError("subspace count " + std::to_string(k) + " does not divide d_emotion=" +
                            std::to_string(d_emotion));
}

Model::Model(ModelConfig config, EmotionTaxonomy taxonomy) : config_(std::move(config)), taxonomy_(std::move(taxonomy)) {
  config_.validate();
  if (taxonomy_.num_categories() != config_.n_categories || taxonomy_.num_words() != config_.n_words)
    throw ValidationError("taxonomy sizes do not match the model configuration");
  Rng rng(config_.init_seed);
  video_ = VideoEncoder::create(params_, config_, rng);
  emotion_ = EmotionEncoder::create(params_, config_, taxonomy_, rng);
  evolution_ = EvolutionParams::create(params_, config_, rng);
  decoder_ = DecoderParams::create(params_, config_, rng);
}

Model::Encoded Model::encode(Tape& tape, const Matrix& appearance, const Matrix& motion, const Matrix* fixed_mask) const {
  Encoded e;
  e.video = video_.encode(tape, tape.constant(appearance), tape.constant(motion));
  e.emotion = encode_emotion(tape, emotion_, e.video, taxonomy_, config_.top_k, fixed_mask);
  return e;
}

std::vector<std::size_t> caption_targets(const std::vector<std::size_t>& caption) {
  std::vector<std::size_t> t = caption;
  t.push_back(Vocabulary::kEos);
  return t;
}

Model::TeacherForced Model::teacher_forced(Tape& tape, const Matrix& appearance, const Matrix& motion,
                                           const std::vector<std::size_t>& caption, const DecodeOptions& options,
                                           const Matrix* fixed_mask, std::vector<EvolutionTrace>* traces) const {
  if (caption.size() > config_.max_len)
    throw ValidationError("caption of " + std::to_string(caption.size()) + " tokens exceeds max_len");
  TeacherForced out;
  out.encoded = encode(tape, appearance, motion, fixed_mask);
  Var video = out.encoded.video;
  Var emotion = out.encoded.emotion.words.emotion;
  DecoderState state = initial_state(tape, decoder_, Vocabulary::kBos);
  std::vector<Var> probs;
  for (std::size_t t = 0; t <= caption.size(); ++t) {
    Var prefix = prefix_features(tape, decoder_, state);
    EvolutionTrace trace;
    emotion = evolve_step(tape, evolution_, emotion, video, prefix, config_.order, config_.mode,
                          traces ? &trace : nullptr);
    if (traces) traces->push_back(std::move(trace));
    DecodeStep step = decode_step(tape, decoder_, video, emotion, state, options);
    probs.push_back(step.probabilities);
    out.gates.push_back(step.gate);
    out.emotions.push_back(emotion);
    state = std::move(step.next);
    if (t < caption.size()) state.prefix.push_back(caption[t]);
  }
  out.step_probs = ad::concat_rows(probs);
  return out;
}

Model::StepResult Model::run_step(const Matrix& video, const Matrix& emotion, const std::vector<std::size_t>& prefix,
                                  const Matrix& hidden, const Matrix& cell, const DecodeOptions& options) const {
  Tape tape(&params_, false);
  Var v = tape.constant(video);
  DecoderState state;
  state.prefix = prefix;
  state.hidden = tape.constant(hidden);
  state.cell = tape.constant(cell);
  StepResult r;
  Var e = evolve_step(tape, evolution_, tape.constant(emotion), v, prefix_features(tape, decoder_, state), config_.order,
                      config_.mode, &r.trace.evolution);
  DecodeStep step = decode_step(tape, decoder_, v, e, state, options);
  r.probs = step.probabilities.value();
  r.emotion = e.value();
  r.hidden = step.next.hidden.value();
  r.cell = step.next.cell.value();
  r.trace.t = prefix.size();
  r.trace.gate = step.gate.value();
  return r;
}

Generation Model::generate(const Matrix& appearance, const Matrix& motion, const GenerateOptions& options) const {
  Tape tape(&params_, false);
  Encoded enc = encode(tape, appearance, motion);
  const Matrix video = enc.video.value();
  const Matrix emotion0 = enc.emotion.words.emotion.value();
  return options.beam_size == 0 ? greedy(video, emotion0, options) : beam(video, emotion0, options);
}

Generation Model::greedy(const Matrix& video, const Matrix& emotion0, const GenerateOptions& options) const {
  Generation g;
  std::vector<std::size_t> prefix{Vocabulary::kBos};
  Matrix emotion = emotion0;
  Matrix hidden(1, decoder_.hidden), cell(1, decoder_.hidden);
  for (std::size_t t = 0; t < options.max_len; ++t) {
    StepResult r = run_step(video, emotion, prefix, hidden, cell, options.decode);
    const auto probs = r.probs.values();
    const std::size_t best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    r.trace.token = best;
    r.trace.token_prob = probs[best];
    g.log_prob += std::log(probs[best]);
    g.steps.push_back(std::move(r.trace));
    if (best == Vocabulary::kEos) break;
    g.tokens.push_back(best);
    prefix.push_back(best);
    emotion = std::move(r.emotion);
    hidden = std::move(r.hidden);
    cell = std::move(r.cell);
  }
  return g;
}

Generation Model::beam(const Matrix& video, const Matrix& emotion0, const GenerateOptions& options) const {
  struct Hyp {
    std::vector<std::size_t> prefix;
    Matrix emotion, hidden, cell;
    double log_prob = 0.0;
    std::vector<StepTrace> steps;
  };
  struct Candidate {
    double score;
    double prob;
    std::size_t beam;
    std::size_t token;
  };
  const std::size_t k = options.beam_size;
  std::vector<Hyp> beams(1);
  beams[0].prefix = {Vocabulary::kBos};
  beams[0].emotion = emotion0;
  beams[0].hidden = Matrix(1, decoder_.hidden);
  beams[0].cell = Matrix(1, decoder_.hidden);
  std::vector<Generation> finished;
  auto finish = [&](const Hyp& h) {
    Generation g;
    g.tokens.assign(h.prefix.begin() + 1, h.prefix.end());
    g.steps = h.steps;
    g.log_prob = h.log_prob;
    finished.push_back(std::move(g));
  };

  for (std::size_t t = 0; t < options.max_len && !beams.empty(); ++t) {
    std::vector<StepResult> results;
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const Hyp& h = beams[b];
      results.push_back(run_step(video, h.emotion, h.prefix, h.hidden, h.cell, options.decode));
      const Matrix& p = results.back().probs;
      for (std::size_t v = 0; v < p.size(); ++v) cands.push_back({h.log_prob + std::log(p[v]), p[v], b, v});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.prob != b.prob) return a.prob > b.prob;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < std::min(k, cands.size()); ++i) {
      const Candidate& c = cands[i];
      const Hyp& parent = beams[c.beam];
      const StepResult& r = results[c.beam];
      Hyp h;
      h.prefix = parent.prefix;
      h.log_prob = c.score;
      h.steps = parent.steps;
      StepTrace tr = r.trace;
      tr.token = c.token;
      tr.token_prob = c.prob;
      h.steps.push_back(std::move(tr));
      if (c.token == Vocabulary::kEos) {
        finish(h);
        continue;
      }
      h.prefix.push_back(c.token);
      h.emotion = r.emotion;
      h.hidden = r.hidden;
      h.cell = r.cell;
      next.push_back(std::move(h));
    }
    beams = std::move(next);
    if (finished.size() >= k) break;
  }
  for (const Hyp& h : beams) finish(h);
  if (finished.empty()) return {};

  // Length-normalized log-probability; the EOS step counts toward length.
  auto normalized = [](const Generation& g) {
    return g.log_prob / static_cast<double>(std::max<std::size_t>(1, g.steps.size()));
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (normalized(finished[i]) > normalized(finished[best])) best = i;
  return finished[best];
}

Var sample_objective(Tape& tape, const Model& model, const VideoSample& sample, const std::vector<std::size_t>& caption,
                     const std::vector<bool>& is_emotion, const LossConfig& loss, LossParts* parts) {
  Model::TeacherForced tf = model.teacher_forced(tape, sample.appearance, sample.motion, caption);
  const std::vector<std::size_t> targets = caption_targets(caption);
  Var le = emotion_focused_ce(tf.step_probs, targets, is_emotion, loss.beta);
  Var lc = hierarchical_cls_loss(tf.encoded.emotion.categories.probabilities, tf.encoded.emotion.words.probabilities,
                                 sample.gt_category_ids, sample.gt_emotion_word_ids);
  Var total = total_loss(le, lc, loss);
  if (parts) {
    parts->emotion_ce = le.value()[0];
    parts->cls = lc.value()[0];
    parts->total = total.value()[0];
  }
  return total;
}

}  // namespace evocap
