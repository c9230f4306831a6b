#include "evocap/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "evocap/config.hpp"
#include "evocap/errors.hpp"
#include "evocap/io.hpp"

namespace evocap {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace io;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be >= 0");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (clip_norm < 0.0) throw ValidationError("clip norm must be >= 0");
  if (threads == 0) throw ValidationError("threads must be positive");
  loss.validate();
}

Adam::Adam(const ParamStore& params, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (ParamId id = 0; id < params.size(); ++id) {
    const Matrix& p = params.value(id);
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step(ParamStore& params, const Gradients& grads, double lr) {
  if (m_.size() != params.size()) throw ValidationError("optimizer state does not match the parameter store");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (ParamId id = 0; id < params.size(); ++id) {
    const Matrix* g = grads.get(id);
    Matrix& p = params.value(id);
    Matrix& m = m_[id];
    Matrix& v = v_[id];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g ? (*g)[k] : 0.0;
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
    }
  }
}

std::vector<TrainItem> training_items(const DatasetManifest& data) {
  std::vector<TrainItem> items;
  for (std::size_t s = 0; s < data.samples.size(); ++s)
    for (std::size_t c = 0; c < data.samples[s].captions.size(); ++c) items.push_back({s, c});
  return items;
}

Trainer::Trainer(Model& model, const DatasetManifest& data, const Vocabulary& vocab, TrainConfig config)
    : model_(model), data_(data), vocab_(vocab), config_(std::move(config)) {
  config_.validate();
  if (vocab_.size() != model_.config().vocab_size) throw ValidationError("vocabulary size does not match the model");
  adam_ = Adam(model_.params(), config_.beta1, config_.beta2, config_.epsilon);
  order_ = training_items(data_);
  if (order_.empty()) throw ValidationError("training corpus has no captions");
}

void Trainer::set_step_count(std::size_t s) {
  step_ = s;
  cursor_ = (s * config_.batch_size) % order_.size();
  epoch_ = (s * config_.batch_size) / order_.size();
  if (config_.shuffle) {
    order_ = training_items(data_);
    for (std::size_t e = 0; e < epoch_; ++e) {
      Rng rng(config_.seed + e + 1);
      std::shuffle(order_.begin(), order_.end(), rng);
    }
  }
}

std::vector<TrainItem> Trainer::next_batch() {
  std::vector<TrainItem> batch;
  const std::size_t n = std::min(config_.batch_size, order_.size());
  while (batch.size() < n) {
    if (cursor_ == order_.size()) {
      cursor_ = 0;
      ++epoch_;
      if (config_.shuffle) {
        Rng rng(config_.seed + epoch_);
        std::shuffle(order_.begin(), order_.end(), rng);
      }
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

LossRecord Trainer::evaluate_batch(const std::vector<TrainItem>& batch, Gradients* grads) const {
  const std::size_t n = batch.size();
  std::vector<LossParts> parts(n);
  std::vector<Gradients> per(grads ? n : 0);
  auto work = [&](std::size_t i) {
    const TrainItem& it = batch[i];
    const VideoSample& s = data_.samples[it.sample];
    Tape tape(&model_.params(), grads != nullptr);
    Var loss = sample_objective(tape, model_, s, s.captions[it.caption], vocab_.emotion_flags(), config_.loss, &parts[i]);
    if (grads) {
      tape.backward(loss);
      per[i] = Gradients(model_.params().size());
      tape.collect_param_grads(per[i]);
    }
  };
  const std::size_t threads = std::min(config_.threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += threads) work(i);
      });
    for (auto& t : pool) t.join();
  }
  // Fixed reduction order regardless of thread count.
  LossRecord rec;
  for (std::size_t i = 0; i < n; ++i) {
    rec.total += parts[i].total;
    rec.emotion_ce += parts[i].emotion_ce;
    rec.cls += parts[i].cls;
    if (grads) grads->add(per[i]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  rec.total *= inv;
  rec.emotion_ce *= inv;
  rec.cls *= inv;
  if (grads) grads->scale(inv);
  return rec;
}

LossRecord Trainer::step() {
  const std::vector<TrainItem> batch = next_batch();
  Gradients grads(model_.params().size());
  LossRecord rec = evaluate_batch(batch, &grads);
  rec.step = step_ + 1;
  if (!std::isfinite(rec.total)) {
    std::ostringstream os;
    os << "non-finite loss at batch " << step_ << " (items:";
    for (const auto& it : batch) os << " " << data_.samples[it.sample].id << "#" << it.caption;
    os << ")";
    throw NumericError(os.str());
  }
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (ParamId id = 0; id < grads.size(); ++id)
      if (const Matrix* g = grads.get(id))
        for (double v : g->values()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) grads.scale(config_.clip_norm / norm);
  }
  double lr = config_.learning_rate;
  if (config_.linear_decay && config_.steps > 0)
    lr *= std::max(0.0, 1.0 - static_cast<double>(step_) / static_cast<double>(config_.steps));
  adam_.step(model_.params(), grads, lr);
  ++step_;
  curve_.push_back(rec);
  return rec;
}

const std::vector<LossRecord>& Trainer::run(const std::function<void(const LossRecord&)>& on_step) {
  while (step_ < config_.steps) {
    LossRecord r = step();
    if (on_step) on_step(r);
  }
  return curve_;
}

double mean_emotion_ce(const Model& model, const DatasetManifest& data, const Vocabulary& vocab, double beta) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const VideoSample& s : data.samples)
    for (const auto& cap : s.captions) {
      Tape tape(&model.params(), false);
      auto tf = model.teacher_forced(tape, s.appearance, s.motion, cap);
      sum += emotion_focused_ce(tf.step_probs.value(), caption_targets(cap), vocab.emotion_flags(), beta);
      ++n;
    }
  if (n == 0) throw ValidationError("no captions to score");
  return sum / static_cast<double>(n);
}

bool teacher_forced_exact(const Model& model, const DatasetManifest& data) {
  for (const VideoSample& s : data.samples)
    for (const auto& cap : s.captions) {
      Tape tape(&model.params(), false);
      auto tf = model.teacher_forced(tape, s.appearance, s.motion, cap);
      const Matrix& p = tf.step_probs.value();
      const auto targets = caption_targets(cap);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto row = p.row(t);
        const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best != targets[t]) return false;
      }
    }
  return true;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "step,total,emotion_ce,cls\n";
  for (const auto& r : curve) os << r.step << "," << r.total << "," << r.emotion_ce << "," << r.cls << "\n";
  return os.str();
}

namespace {

json train_to_json(const TrainConfig& t) {
  RunConfig rc;
  rc.train = t;
  json flat = to_flat_json(rc);
  json out = json::object();
  for (auto& [k, v] : flat.items())
    if (k.rfind("train.", 0) == 0 || k.rfind("loss.", 0) == 0) out[k] = v;
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const Vocabulary& vocab, const TrainConfig& train,
                     const std::vector<LossRecord>& curve, const Adam* adam, std::size_t step) {
  fs::create_directories(dir / "params");
  const ParamStore& ps = model.params();
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (ParamId id = 0; id < ps.size(); ++id) {
    write_array(dir / "params" / ps.name(id), ps.value(id), DType::f64);
    names.push_back(ps.name(id));
  }
  if (adam) {
    fs::create_directories(dir / "optimizer");
    auto& a = const_cast<Adam&>(*adam);
    for (ParamId id = 0; id < ps.size(); ++id) {
      write_array(dir / "optimizer" / ("m." + ps.name(id)), a.first_moments().at(id), DType::f64);
      write_array(dir / "optimizer" / ("v." + ps.name(id)), a.second_moments().at(id), DType::f64);
    }
  }
  nlohmann::ordered_json cfg;
  cfg["model"] = to_json(model.config());
  cfg["train"] = train_to_json(train);
  cfg["params"] = names;
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  save_taxonomy(dir / "taxonomy.json", model.taxonomy());
  save_vocabulary(dir / "vocab.json", vocab);
  write_text(dir / "loss_curve.csv", loss_curve_csv(curve));
  nlohmann::ordered_json state;
  state["step"] = step;
  state["seed"] = train.seed;
  state["optimizer_steps"] = adam ? adam->steps() : 0;
  state["has_optimizer"] = adam != nullptr;
  write_text(dir / "state.json", state.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "config.json")) throw LoadError("no checkpoint at " + dir.string());
  json cfg;
  json state;
  try {
    cfg = json::parse(read_text(dir / "config.json"));
    state = json::parse(read_text(dir / "state.json"));
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  EmotionTaxonomy tax = load_taxonomy(dir / "taxonomy.json");
  out.vocab = load_vocabulary(dir / "vocab.json");
  out.vocab.link_taxonomy(tax);
  out.model = std::make_unique<Model>(model_config_from_json(cfg.at("model")), tax);
  RunConfig rc;
  apply_flat_json(rc, cfg.at("train"));
  out.train = rc.train;
  ParamStore& ps = out.model->params();
  for (ParamId id = 0; id < ps.size(); ++id) {
    Matrix m = read_array(dir / "params" / ps.name(id));
    if (!m.same_shape(ps.value(id)))
      throw LoadError("parameter " + ps.name(id) + " has shape " + m.shape_string() + ", expected " +
                      ps.value(id).shape_string());
    ps.value(id) = std::move(m);
  }
  out.step = state.value("step", std::size_t{0});
  out.has_optimizer = state.value("has_optimizer", false);
  if (out.has_optimizer) {
    out.adam = Adam(ps, out.train.beta1, out.train.beta2, out.train.epsilon);
    for (ParamId id = 0; id < ps.size(); ++id) {
      out.adam.first_moments()[id] = read_array(dir / "optimizer" / ("m." + ps.name(id)));
      out.adam.second_moments()[id] = read_array(dir / "optimizer" / ("v." + ps.name(id)));
    }
    out.adam.set_steps(state.value("optimizer_steps", std::size_t{0}));
  }
  return out;
}

}  // namespace evocap
