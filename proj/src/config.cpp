#include "evocap/config.hpp"

#include <functional>
#include <map>
#include <stdexcept>
#include <type_traits>

#include "evocap/errors.hpp"

namespace evocap {

using nlohmann::json;

namespace {

struct Entry {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

// json's get<> converts between number kinds silently; reject mismatches first.
template <class T>
void check_type(const json& v) {
  bool ok = true;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_unsigned_v<T>) ok = v.is_number_unsigned();
  else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
  else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    ok = v.is_array();
    for (const auto& x : v) ok = ok && x.is_number_unsigned();
  }
  if (!ok) throw std::invalid_argument("type mismatch");
}

template <class T, class Access>
Entry field(std::string key, Access access) {
  return Entry{key, [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); },
               [access](RunConfig& c, const json& v) {
                 check_type<T>(v);
                 access(c) = v.get<T>();
               }};
}

Entry order_field() {
  return Entry{"model.order", [](const RunConfig& c) { return json(to_string(c.model.order)); },
               [](RunConfig& c, const json& v) { c.model.order = parse_evolution_order(v.get<std::string>()); }};
}

Entry mode_field() {
  return Entry{"model.mode", [](const RunConfig& c) { return json(to_string(c.model.mode)); },
               [](RunConfig& c, const json& v) { c.model.mode = parse_evolution_mode(v.get<std::string>()); }};
}

using Sizes = std::vector<std::size_t>;

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    using Z = std::size_t;
    using U = unsigned long long;
#define EV_FIELD(T, KEY, EXPR) e.push_back(field<T>(KEY, [](RunConfig& c) -> T& { return EXPR; }))
    EV_FIELD(Z, "model.d_appearance", c.model.d_appearance);
    EV_FIELD(Z, "model.d_motion", c.model.d_motion);
    EV_FIELD(Z, "model.d_video", c.model.d_video);
    EV_FIELD(Z, "model.d_text", c.model.d_text);
    EV_FIELD(Z, "model.d_emotion", c.model.d_emotion);
    EV_FIELD(Z, "model.hidden", c.model.hidden);
    EV_FIELD(Z, "model.ffn_dim", c.model.ffn_dim);
    EV_FIELD(Z, "model.attention_dim", c.model.attention_dim);
    EV_FIELD(Z, "model.heads", c.model.heads);
    EV_FIELD(bool, "model.positional_encoding", c.model.positional_encoding);
    EV_FIELD(Z, "model.top_k", c.model.top_k);
    EV_FIELD(Z, "model.extension", c.model.extension);
    EV_FIELD(Sizes, "model.subspaces", c.model.subspaces);
    e.push_back(order_field());
    e.push_back(mode_field());
    EV_FIELD(bool, "model.prev_word_input", c.model.prev_word_input);
    EV_FIELD(Z, "model.max_len", c.model.max_len);
    EV_FIELD(Z, "model.vocab_size", c.model.vocab_size);
    EV_FIELD(Z, "model.n_categories", c.model.n_categories);
    EV_FIELD(Z, "model.n_words", c.model.n_words);
    EV_FIELD(U, "model.init_seed", c.model.init_seed);
    EV_FIELD(double, "model.embedding_init", c.model.embedding_init);

    EV_FIELD(double, "train.lr", c.train.learning_rate);
    EV_FIELD(Z, "train.batch_size", c.train.batch_size);
    EV_FIELD(Z, "train.steps", c.train.steps);
    EV_FIELD(U, "train.seed", c.train.seed);
    EV_FIELD(double, "train.beta1", c.train.beta1);
    EV_FIELD(double, "train.beta2", c.train.beta2);
    EV_FIELD(double, "train.epsilon", c.train.epsilon);
    EV_FIELD(double, "train.clip_norm", c.train.clip_norm);
    EV_FIELD(bool, "train.linear_decay", c.train.linear_decay);
    EV_FIELD(bool, "train.shuffle", c.train.shuffle);
    EV_FIELD(Z, "train.threads", c.train.threads);
    EV_FIELD(double, "loss.beta", c.train.loss.beta);
    EV_FIELD(double, "loss.lambda_e", c.train.loss.lambda_e);
    EV_FIELD(double, "loss.lambda_cls", c.train.loss.lambda_cls);

    EV_FIELD(U, "synth.seed", c.synth.seed);
    EV_FIELD(Z, "synth.n_videos", c.synth.n_videos);
    EV_FIELD(Z, "synth.vocab_size", c.synth.vocab_size);
    EV_FIELD(Z, "synth.n_categories", c.synth.n_categories);
    EV_FIELD(Z, "synth.words_per_category", c.synth.words_per_category);
    EV_FIELD(Z, "synth.d_appearance", c.synth.d_appearance);
    EV_FIELD(Z, "synth.d_motion", c.synth.d_motion);
    EV_FIELD(Z, "synth.n_frames", c.synth.n_frames);
    EV_FIELD(bool, "synth.two_phase", c.synth.two_phase);
    EV_FIELD(double, "synth.noise", c.synth.noise);

    EV_FIELD(Z, "grad_check.frames", c.grad_check.frames);
    EV_FIELD(Z, "grad_check.dim", c.grad_check.dim);
    EV_FIELD(Z, "grad_check.extension", c.grad_check.extension);
    EV_FIELD(Sizes, "grad_check.subspaces", c.grad_check.subspaces);
    EV_FIELD(Z, "grad_check.feature_dim", c.grad_check.feature_dim);
    EV_FIELD(Z, "grad_check.hidden", c.grad_check.hidden);
    EV_FIELD(Z, "grad_check.vocab", c.grad_check.vocab);
    EV_FIELD(Z, "grad_check.prefix_len", c.grad_check.prefix_len);
    EV_FIELD(double, "grad_check.step", c.grad_check.step);
    EV_FIELD(double, "grad_check.tolerance", c.grad_check.tolerance);
    EV_FIELD(U, "grad_check.seed", c.grad_check.seed);

    EV_FIELD(Z, "generate.beam_size", c.beam_size);
    EV_FIELD(Z, "generate.max_len", c.max_len);
    EV_FIELD(double, "metrics.hybrid_weight", c.hybrid_weight);
#undef EV_FIELD
    return e;
  }();
  return entries;
}

const Entry* lookup(std::string_view key) {
  for (const auto& e : registry())
    if (e.key == key) return &e;
  return nullptr;
}

void set_value(RunConfig& cfg, const std::string& key, const json& value) {
  const Entry* e = lookup(key);
  if (!e) throw ValidationError("unknown config key: " + key);
  try {
    e->set(cfg, value);
  } catch (const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw ValidationError("bad value for " + key + ": " + value.dump());
  }
}

}  // namespace

RunConfig desk_config() {
  RunConfig c;
  ModelConfig& m = c.model;
  m.d_appearance = 16;
  m.d_motion = 16;
  m.d_video = 30;
  m.d_text = 30;
  m.d_emotion = 30;
  m.hidden = 256;
  m.ffn_dim = 60;
  m.top_k = 1;
  m.extension = 16;
  m.subspaces = {2, 3, 5, 6, 10};
  m.embedding_init = 0.5;
  c.train.batch_size = 16;
  c.train.steps = 500;
  return c;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : registry()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

nlohmann::ordered_json to_flat_json(const RunConfig& cfg) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& e : registry()) out[e.key] = e.get(cfg);
  return out;
}

void apply_flat_json(RunConfig& cfg, const json& flat) {
  if (!flat.is_object()) throw ValidationError("config must be a JSON object of dotted keys");
  for (auto it = flat.begin(); it != flat.end(); ++it) set_value(cfg, it.key(), it.value());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ValidationError("override must be key=value: " + std::string(assignment));
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_value(cfg, key, value);
}

nlohmann::ordered_json to_json(const ModelConfig& m) {
  RunConfig rc;
  rc.model = m;
  nlohmann::ordered_json flat = to_flat_json(rc);
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (auto& [k, v] : flat.items())
    if (k.rfind("model.", 0) == 0) out[k] = v;
  return out;
}

ModelConfig model_config_from_json(const json& j) {
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key().rfind("model.", 0) != 0) throw ValidationError("unexpected model key: " + it.key());
    set_value(rc, it.key(), it.value());
  }
  return rc.model;
}

}  // namespace evocap
