#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evocap/corpus.hpp"
#include "evocap/grad_check.hpp"
#include "evocap/model_config.hpp"
#include "evocap/training.hpp"

// Flat dotted-key run configuration ("model.d_video": 32, "train.lr": 7e-4, ...).

namespace evocap {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
  GradCheckConfig grad_check;
  std::size_t beam_size = 0;
  std::size_t max_len = kMaxCaptionLen;
  double hybrid_weight = 0.5;
};

// Settings used by the bundled desk-scale experiments.
RunConfig desk_config();

nlohmann::ordered_json to_flat_json(const RunConfig& cfg);
// Unknown keys and ill-typed values raise ValidationError.
void apply_flat_json(RunConfig& cfg, const nlohmann::json& flat);
// "key=value"; the value is parsed as JSON, falling back to a plain string.
void apply_override(RunConfig& cfg, std::string_view assignment);
const std::vector<std::string>& config_keys();

nlohmann::ordered_json to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace evocap
