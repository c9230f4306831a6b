#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "evocap/corpus.hpp"
#include "evocap/model.hpp"
#include "evocap/objectives.hpp"

namespace evocap {

struct TrainConfig {
  double learning_rate = 7e-4;
  std::size_t batch_size = 8;
  std::size_t steps = 500;
  unsigned long long seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossConfig loss;
  double clip_norm = 0.0;       // global gradient norm clip; 0 disables
  bool linear_decay = false;    // decay the learning rate linearly to 0 over `steps`
  bool shuffle = false;         // reshuffle (seeded) at every epoch boundary
  std::size_t threads = 1;

  void validate() const;
};

// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& params, double beta1, double beta2, double epsilon);

  void step(ParamStore& params, const Gradients& grads, double lr);
  std::size_t steps() const { return t_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct LossRecord {
  std::size_t step = 0;
  double total = 0.0;
  double emotion_ce = 0.0;
  double cls = 0.0;
};

// One (sample, caption) pair of the training stream.
struct TrainItem {
  std::size_t sample = 0;
  std::size_t caption = 0;
};

std::vector<TrainItem> training_items(const DatasetManifest& data);

struct Trainer {
  Trainer(Model& model, const DatasetManifest& data, const Vocabulary& vocab, TrainConfig config);

  // Runs one optimizer step on the next batch and returns its mean losses.
  LossRecord step();
  // Runs until `config.steps` total steps have been taken.
  const std::vector<LossRecord>& run(const std::function<void(const LossRecord&)>& on_step = {});

  // Mean batch loss and gradients at the current parameters (no update).
  LossRecord evaluate_batch(const std::vector<TrainItem>& batch, Gradients* grads) const;

  const std::vector<LossRecord>& curve() const { return curve_; }
  Adam& optimizer() { return adam_; }
  std::size_t step_count() const { return step_; }
  void set_step_count(std::size_t s);

 private:
  std::vector<TrainItem> next_batch();

  Model& model_;
  const DatasetManifest& data_;
  const Vocabulary& vocab_;
  TrainConfig config_;
  Adam adam_;
  std::vector<TrainItem> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::vector<LossRecord> curve_;
};

// Mean teacher-forced L_e over every training caption.
double mean_emotion_ce(const Model& model, const DatasetManifest& data, const Vocabulary& vocab, double beta);

// True when argmax decoding under teacher forcing reproduces every caption + EOS.
bool teacher_forced_exact(const Model& model, const DatasetManifest& data);

std::string loss_curve_csv(const std::vector<LossRecord>& curve);

// Directory layout: params/<name>.{f64,json}, optimizer/, config.json,
// taxonomy.json, vocab.json, loss_curve.csv, state.json.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const Vocabulary& vocab,
                     const TrainConfig& train, const std::vector<LossRecord>& curve, const Adam* adam = nullptr,
                     std::size_t step = 0);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  Vocabulary vocab;
  TrainConfig train;
  std::size_t step = 0;
  Adam adam;
  bool has_optimizer = false;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace evocap
