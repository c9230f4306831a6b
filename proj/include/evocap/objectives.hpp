#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evocap/autograd.hpp"

namespace evocap {

struct LossConfig {
  double beta = 0.1;        // extra weight on emotion-word targets
  double lambda_e = 1.0;
  double lambda_cls = 0.2;
  void validate() const;
};

inline constexpr double kProbClamp = 1e-12;

// Counts clamped probabilities across calls (process-wide, thread-safe).
std::size_t clamp_warnings();
void reset_clamp_warnings();

// sum_t -(1 + beta [y_t is an emotion word]) log P_t(y_t); PAD targets skipped.
double emotion_focused_ce(const Matrix& step_probs, std::span<const std::size_t> targets,
                          const std::vector<bool>& is_emotion, double beta);
Var emotion_focused_ce(Var step_probs, std::span<const std::size_t> targets, const std::vector<bool>& is_emotion,
                       double beta);

// -sum_{c in gt_c} log P_c(c) - sum_{w in gt_w} log P_w(w). Empty sets throw.
double hierarchical_cls_loss(const Matrix& category_probs, const Matrix& word_probs,
                             std::span<const std::size_t> gt_categories, std::span<const std::size_t> gt_words);
Var hierarchical_cls_loss(Var category_probs, Var word_probs, std::span<const std::size_t> gt_categories,
                          std::span<const std::size_t> gt_words);

double total_loss(double emotion_ce, double cls, const LossConfig& cfg);
Var total_loss(Var emotion_ce, Var cls, const LossConfig& cfg);

}  // namespace evocap
