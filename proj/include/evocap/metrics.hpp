#pragma once

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace evocap {

using Tokens = std::vector<std::string>;

struct EmotionAccuracy {
  double acc_sw = 0.0;
  double acc_c = 0.0;
  std::size_t emotion_tokens = 0;
  std::size_t correct_tokens = 0;
  std::size_t correct_sentences = 0;
};

// acc_sw: generated emotion-word tokens found in the video's reference
// emotion-word union, over all generated emotion-word tokens.
// acc_c: candidates with >= 1 emotion word, all of them in that union.
EmotionAccuracy emotion_accuracy(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                                 const std::set<std::string>& emotion_words);

struct NgramScores {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
  std::vector<double> rouge_per_video;
  std::vector<double> cider_per_video;
};

inline constexpr double kRougeBeta2 = 1.2;
inline constexpr double kCiderSigma = 6.0;

NgramScores ngram_metrics(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);

struct HybridScores {
  double bfs = 0.0;
  double cfs = 0.0;
};

// bfs = (1 - w) bleu4 + w acc_sw; cfs = (1 - w) min(cider, 1) + w acc_sw.
HybridScores hybrid_scores(double bleu4, double cider, double acc_sw, double w = 0.5);

struct MetricReport {
  EmotionAccuracy emotion;
  NgramScores ngram;
  HybridScores hybrid;
  double hybrid_weight = 0.5;
  std::vector<std::string> ids;
  std::vector<Tokens> candidates;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<Tokens>& candidates,
                      const std::vector<std::vector<Tokens>>& references, const std::set<std::string>& emotion_words,
                      double hybrid_weight = 0.5);

// JSON lines: {"id", "caption"} for candidates, {"id", "captions": [...]} for
// references. Candidates are aligned to references by id.
struct EvalInputs {
  std::vector<std::string> ids;
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
};
EvalInputs load_eval_inputs(const std::filesystem::path& candidates, const std::filesystem::path& references);

}  // namespace evocap
