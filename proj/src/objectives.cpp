#include "evocap/objectives.hpp"

#include <atomic>
#include <cmath>

#include "evocap/corpus.hpp"
#include "evocap/errors.hpp"

namespace evocap {

namespace {

std::atomic<std::size_t> g_clamps{0};

void note_clamps(const Matrix& probs, std::span<const std::size_t> rows_targets, bool by_row) {
  for (std::size_t i = 0; i < rows_targets.size(); ++i) {
    const double p = by_row ? probs(i, rows_targets[i]) : probs(0, rows_targets[i]);
    if (!(p > kProbClamp)) g_clamps.fetch_add(1, std::memory_order_relaxed);
  }
}

struct Kept {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
  std::vector<double> weights;
};

Kept keep_non_pad(std::span<const std::size_t> targets, const std::vector<bool>& is_emotion, double beta) {
  Kept k;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == Vocabulary::kPad) continue;
    k.rows.push_back(t);
    k.targets.push_back(targets[t]);
    const bool emo = targets[t] < is_emotion.size() && is_emotion[targets[t]];
    k.weights.push_back(emo ? 1.0 + beta : 1.0);
  }
  return k;
}

}  // namespace

void LossConfig::validate() const {
  if (!(beta >= 0.0) || !(lambda_e >= 0.0) || !(lambda_cls >= 0.0))
    throw ValidationError("loss weights must be non-negative");
}

std::size_t clamp_warnings() { return g_clamps.load(); }
void reset_clamp_warnings() { g_clamps.store(0); }

double emotion_focused_ce(const Matrix& step_probs, std::span<const std::size_t> targets,
                          const std::vector<bool>& is_emotion, double beta) {
  if (targets.size() != step_probs.rows())
    throw ShapeError("emotion_focused_ce: " + std::to_string(targets.size()) + " targets for " +
                     step_probs.shape_string() + " probabilities");
  const Kept k = keep_non_pad(targets, is_emotion, beta);
  double loss = 0.0;
  for (std::size_t i = 0; i < k.rows.size(); ++i) {
    if (k.targets[i] >= step_probs.cols()) throw ShapeError("target id out of range");
    const double p = step_probs(k.rows[i], k.targets[i]);
    if (!(p > kProbClamp)) g_clamps.fetch_add(1, std::memory_order_relaxed);
    loss += -k.weights[i] * std::log(std::max(p, kProbClamp));
  }
  return loss;
}

Var emotion_focused_ce(Var step_probs, std::span<const std::size_t> targets, const std::vector<bool>& is_emotion,
                       double beta) {
  if (targets.size() != step_probs.rows())
    throw ShapeError("emotion_focused_ce: " + std::to_string(targets.size()) + " targets for " +
                     step_probs.value().shape_string() + " probabilities");
  Kept k = keep_non_pad(targets, is_emotion, beta);
  Var rows = step_probs;
  if (k.rows.size() != targets.size()) {
    std::vector<Var> picked;
    for (std::size_t r : k.rows) {
      // Select row r via a one-hot product to keep the op set small.
      Matrix sel(1, step_probs.rows());
      sel[r] = 1.0;
      picked.push_back(ad::matmul(step_probs.tape->constant(std::move(sel)), step_probs));
    }
    if (picked.empty()) return step_probs.tape->constant(Matrix(1, 1));
    rows = ad::concat_rows(picked);
  }
  note_clamps(rows.value(), k.targets, true);
  return ad::weighted_nll(rows, k.targets, k.weights, kProbClamp);
}

double hierarchical_cls_loss(const Matrix& category_probs, const Matrix& word_probs,
                             std::span<const std::size_t> gt_categories, std::span<const std::size_t> gt_words) {
  if (gt_categories.empty() || gt_words.empty())
    throw ValidationError("hierarchical classification loss needs non-empty ground truth");
  double loss = 0.0;
  for (std::size_t c : gt_categories) {
    const double p = category_probs.at(0, c);
    if (!(p > kProbClamp)) g_clamps.fetch_add(1, std::memory_order_relaxed);
    loss -= std::log(std::max(p, kProbClamp));
  }
  for (std::size_t w : gt_words) {
    const double p = word_probs.at(0, w);
    if (!(p > kProbClamp)) g_clamps.fetch_add(1, std::memory_order_relaxed);
    loss -= std::log(std::max(p, kProbClamp));
  }
  return loss;
}

Var hierarchical_cls_loss(Var category_probs, Var word_probs, std::span<const std::size_t> gt_categories,
                          std::span<const std::size_t> gt_words) {
  if (gt_categories.empty() || gt_words.empty())
    throw ValidationError("hierarchical classification loss needs non-empty ground truth");
  note_clamps(category_probs.value(), gt_categories, false);
  note_clamps(word_probs.value(), gt_words, false);
  const std::vector<double> wc(gt_categories.size(), 1.0);
  const std::vector<double> ww(gt_words.size(), 1.0);
  Var lc = ad::weighted_nll(ad::repeat_rows(category_probs, gt_categories.size()), gt_categories, wc, kProbClamp);
  Var lw = ad::weighted_nll(ad::repeat_rows(word_probs, gt_words.size()), gt_words, ww, kProbClamp);
  return ad::add(lc, lw);
}

double total_loss(double emotion_ce, double cls, const LossConfig& cfg) {
  return cfg.lambda_e * emotion_ce + cfg.lambda_cls * cls;
}

Var total_loss(Var emotion_ce, Var cls, const LossConfig& cfg) {
  return ad::add(ad::scale(emotion_ce, cfg.lambda_e), ad::scale(cls, cfg.lambda_cls));
}

}  // namespace evocap
