#pragma once

#include <optional>
#include <vector>

#include "evocap/corpus.hpp"
#include "evocap/decoder.hpp"
#include "evocap/encoders.hpp"
#include "evocap/evolution.hpp"
#include "evocap/model_config.hpp"
#include "evocap/objectives.hpp"

namespace evocap {

struct StepTrace {
  std::size_t t = 0;  // 1-based generation step
  EvolutionTrace evolution;
  Matrix gate;  // N x 1
  std::size_t token = 0;
  double token_prob = 0.0;
};

struct Generation {
  std::vector<std::size_t> tokens;  // without BOS/EOS
  std::vector<StepTrace> steps;
  double log_prob = 0.0;
};

struct GenerateOptions {
  std::size_t beam_size = 0;  // 0: greedy; k >= 1: beam search of width k
  std::size_t max_len = kMaxCaptionLen;
  DecodeOptions decode;
};

// Full dual-path network: video encoder, tree-structured emotion encoder,
// emotion evolution path and adaptive decoder, sharing one ParamStore.
class Model {
 public:
  Model(ModelConfig config, EmotionTaxonomy taxonomy);

  const ModelConfig& config() const { return config_; }
  const EmotionTaxonomy& taxonomy() const { return taxonomy_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const VideoEncoder& video_encoder() const { return video_; }
  const EmotionEncoder& emotion_encoder() const { return emotion_; }
  const EvolutionParams& evolution() const { return evolution_; }
  const DecoderParams& decoder() const { return decoder_; }

  struct Encoded {
    Var video;
    EmotionEncoding emotion;
  };
  Encoded encode(Tape& tape, const Matrix& appearance, const Matrix& motion, const Matrix* fixed_mask = nullptr) const;

  struct TeacherForced {
    Encoded encoded;
    Var step_probs;  // T x D, T = caption length + 1 (EOS)
    std::vector<Var> gates;
    std::vector<Var> emotions;  // E^1 .. E^T
  };
  // Feeds the ground-truth prefix at every step.
  TeacherForced teacher_forced(Tape& tape, const Matrix& appearance, const Matrix& motion,
                               const std::vector<std::size_t>& caption, const DecodeOptions& options = {},
                               const Matrix* fixed_mask = nullptr, std::vector<EvolutionTrace>* traces = nullptr) const;

  struct StepResult {
    Matrix probs;  // 1 x D
    Matrix emotion;
    Matrix hidden;
    Matrix cell;
    StepTrace trace;
  };
  // One synchronized evolve + decode step outside of any training tape.
  StepResult run_step(const Matrix& video, const Matrix& emotion, const std::vector<std::size_t>& prefix,
                      const Matrix& hidden, const Matrix& cell, const DecodeOptions& options) const;

  Generation generate(const Matrix& appearance, const Matrix& motion, const GenerateOptions& options = {}) const;

 private:
  Generation greedy(const Matrix& video, const Matrix& emotion0, const GenerateOptions& options) const;
  Generation beam(const Matrix& video, const Matrix& emotion0, const GenerateOptions& options) const;

  ModelConfig config_;
  EmotionTaxonomy taxonomy_;
  ParamStore params_;
  VideoEncoder video_;
  EmotionEncoder emotion_;
  EvolutionParams evolution_;
  DecoderParams decoder_;
};

struct LossParts {
  double total = 0.0;
  double emotion_ce = 0.0;
  double cls = 0.0;
};

// Teacher-forced training objective for one caption of one sample.
Var sample_objective(Tape& tape, const Model& model, const VideoSample& sample, const std::vector<std::size_t>& caption,
                     const std::vector<bool>& is_emotion, const LossConfig& loss, LossParts* parts = nullptr);

// Caption + EOS.
std::vector<std::size_t> caption_targets(const std::vector<std::size_t>& caption);

}  // namespace evocap
