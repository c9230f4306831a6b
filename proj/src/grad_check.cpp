#include "evocap/grad_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <sstream>

#include "evocap/decoder.hpp"
#include "evocap/encoders.hpp"
#include "evocap/errors.hpp"
#include "evocap/evolution.hpp"
#include "evocap/model.hpp"
#include "evocap/nn.hpp"
#include "evocap/objectives.hpp"

namespace evocap {

namespace {

constexpr double kRelFloor = 1e-6;

struct Case {
  std::shared_ptr<ParamStore> store;
  std::shared_ptr<Model> model;  // keeps the store alive for whole-model cases
  ParamStore* params = nullptr;
  std::vector<std::pair<std::string, Matrix>> inputs;
  std::function<std::vector<Var>(Tape&, const std::vector<Var>&)> fn;
};

ModelConfig desk_model(const GradCheckConfig& g) {
  ModelConfig m;
  m.d_appearance = g.feature_dim;
  m.d_motion = g.feature_dim;
  m.d_video = g.dim;
  m.d_text = g.dim;
  m.d_emotion = g.dim;
  m.hidden = g.hidden;
  m.ffn_dim = 2 * g.dim;
  m.heads = 1;
  m.top_k = 1;
  m.extension = g.extension;
  m.subspaces = g.subspaces;
  m.vocab_size = g.vocab;
  m.n_categories = 2;
  m.n_words = 4;
  m.init_seed = g.seed;
  m.embedding_init = 0.5;
  return m;
}

EmotionTaxonomy desk_taxonomy() {
  EmotionTaxonomy t;
  t.categories = {"cat0", "cat1"};
  t.words = {"emo0", "emo1", "emo2", "emo3"};
  t.membership = {{0, 1}, {2, 3}};
  return t;
}

std::vector<std::size_t> desk_prefix(const GradCheckConfig& g) {
  std::vector<std::size_t> p{Vocabulary::kBos};
  for (std::size_t i = 1; i < g.prefix_len; ++i) p.push_back(4 + (i * 3) % (g.vocab - 4));
  return p;
}

Case new_case() {
  Case c;
  c.store = std::make_shared<ParamStore>();
  c.params = c.store.get();
  return c;
}

Case build_case(const std::string& module, const GradCheckConfig& g, Rng& rng) {
  const std::size_t N = g.frames, d = g.dim, M = g.extension, L = g.prefix_len;
  const ModelConfig mc = desk_model(g);
  Case c = new_case();
  ParamStore& s = *c.store;
  auto in = [&](const std::string& name, std::size_t r, std::size_t cols) {
    c.inputs.emplace_back(name, uniform_matrix(r, cols, 1.0, rng));
  };

  if (module == "linear") {
    auto lin = nn::Linear::create(s, "linear", d, 7, rng);
    in("x", N, d);
    c.fn = [lin](Tape& t, const std::vector<Var>& x) { return std::vector<Var>{lin(t, x[0])}; };
  } else if (module == "softmax_rows") {
    in("x", N, d);
    c.fn = [](Tape&, const std::vector<Var>& x) { return std::vector<Var>{ad::softmax_rows(x[0])}; };
  } else if (module == "layer_norm") {
    in("x", N, d);
    in("gain", 1, d);
    in("bias", 1, d);
    c.fn = [](Tape&, const std::vector<Var>& x) { return std::vector<Var>{ad::layer_norm(x[0], x[1], x[2])}; };
  } else if (module == "weighted_pool") {
    in("c", N + L, d);
    in("w1", d, M);
    in("w2", d, d);
    c.fn = [](Tape&, const std::vector<Var>& x) { return std::vector<Var>{nn::weighted_pool(x[0], x[1], x[2])}; };
  } else if (module == "cross_attention") {
    auto p = nn::AttentionParams::create(s, "attn", d, d + 2, d, 5, 2, rng);
    in("queries", N, d);
    in("keys_values", M, d + 2);
    c.fn = [p](Tape& t, const std::vector<Var>& x) {
      return std::vector<Var>{nn::cross_attention(t, x[0], x[1], p)};
    };
  } else if (module == "masked_attention") {
    auto p = nn::AttentionParams::create(s, "attn", d, d, d, d, 1, rng);
    in("queries", N, d);
    in("keys_values", M, d);
    auto mask = std::make_shared<Matrix>(N, M, 1.0);
    for (std::size_t i = 0; i < N; ++i) (*mask)(i, (i + 1) % M) = 0.0;
    c.fn = [p, mask](Tape& t, const std::vector<Var>& x) {
      return std::vector<Var>{nn::cross_attention(t, x[0], x[1], p, mask.get())};
    };
  } else if (module == "self_attention_block") {
    auto b = nn::SelfAttentionBlock::create(s, "block", d, 2 * d, 2, rng);
    in("x", N, d);
    c.fn = [b](Tape& t, const std::vector<Var>& x) { return std::vector<Var>{b(t, x[0])}; };
  } else if (module == "encode_video") {
    ModelConfig m = mc;
    m.positional_encoding = true;
    auto enc = VideoEncoder::create(s, m, rng);
    in("appearance", N, g.feature_dim);
    in("motion", N, g.feature_dim);
    c.fn = [enc](Tape& t, const std::vector<Var>& x) { return std::vector<Var>{enc.encode(t, x[0], x[1])}; };
  } else if (module == "predict_categories") {
    auto enc = EmotionEncoder::create(s, mc, desk_taxonomy(), rng);
    in("video", N, d);
    c.fn = [enc](Tape& t, const std::vector<Var>& x) {
      auto p = enc.predict_categories(t, x[0]);
      return std::vector<Var>{p.features, p.probabilities};
    };
  } else if (module == "encode_emotion_words") {
    auto enc = EmotionEncoder::create(s, mc, desk_taxonomy(), rng);
    in("video", N, d);
    const std::vector<double> pc{0.7, 0.3};
    auto mask = std::make_shared<Matrix>(build_topk_mask(pc, desk_taxonomy(), 1, N));
    c.fn = [enc, mask](Tape& t, const std::vector<Var>& x) {
      auto w = enc.encode_words(t, x[0], *mask);
      return std::vector<Var>{w.emotion, w.probabilities};
    };
  } else if (module == "encode_emotion") {
    auto tax = desk_taxonomy();
    auto enc = EmotionEncoder::create(s, mc, tax, rng);
    in("video", N, d);
    // The top-K selection is a constant of differentiation; freeze it at the base point.
    Tape probe(c.params, false);
    auto pc = enc.predict_categories(probe, probe.constant(c.inputs[0].second)).probabilities.value();
    auto mask = std::make_shared<Matrix>(build_topk_mask(pc.values(), tax, 1, N));
    c.fn = [enc, tax, mask](Tape& t, const std::vector<Var>& x) {
      auto e = encode_emotion(t, enc, x[0], tax, 1, mask.get());
      return std::vector<Var>{e.categories.probabilities, e.words.emotion, e.words.probabilities};
    };
  } else if (module == "extend_features") {
    auto p = EvolutionParams::create(s, mc, rng);
    in("video", N, d);
    in("prefix", L, d);
    c.fn = [p](Tape& t, const std::vector<Var>& x) {
      auto e = extend_features(t, p, x[0], x[1]);
      return std::vector<Var>{e.combined, e.extended};
    };
  } else if (module == "element_evolve") {
    auto p = EvolutionParams::create(s, mc, rng);
    in("prev", N, d);
    in("extended", M, d);
    c.fn = [p](Tape& t, const std::vector<Var>& x) {
      auto e = element_evolve(t, p, x[0], x[1]);
      return std::vector<Var>{e.alignment, e.factors, e.gated};
    };
  } else if (module == "subspace_recompose") {
    auto p = EvolutionParams::create(s, mc, rng);
    in("gated", N, d);
    in("extended", M, d);
    in("residual", N, d);
    c.fn = [p](Tape& t, const std::vector<Var>& x) {
      auto r = subspace_recompose(t, p, x[0], x[1], x[2]);
      return std::vector<Var>{r.weights, r.evolved};
    };
  } else if (module == "evolve_step_es" || module == "evolve_step_se") {
    auto p = EvolutionParams::create(s, mc, rng);
    const auto order =
        module == "evolve_step_es" ? EvolutionOrder::element_then_subspace : EvolutionOrder::subspace_then_element;
    in("prev", N, d);
    in("video", N, d);
    in("prefix", L, d);
    c.fn = [p, order](Tape& t, const std::vector<Var>& x) {
      return std::vector<Var>{evolve_step(t, p, x[0], x[1], x[2], order)};
    };
  } else if (module == "correlate_text") {
    auto corr = TextCorrelator::create(s, "corr", d, d + 1, 7, rng);
    in("prefix", L, d);
    in("cond", N, d + 1);
    c.fn = [corr](Tape& t, const std::vector<Var>& x) { return std::vector<Var>{corr(t, x[0], x[1])}; };
  } else if (module == "emotion_gate") {
    auto p = DecoderParams::create(s, mc, rng);
    in("text_emotional", N, d);
    c.fn = [p](Tape& t, const std::vector<Var>& x) { return std::vector<Var>{emotion_gate(t, p, x[0])}; };
  } else if (module == "decode_step") {
    auto p = DecoderParams::create(s, mc, rng);
    in("video", N, d);
    in("emotion", N, d);
    in("hidden", 1, g.hidden);
    in("cell", 1, g.hidden);
    auto prefix = desk_prefix(g);
    c.fn = [p, prefix](Tape& t, const std::vector<Var>& x) {
      DecoderState st{prefix, x[2], x[3]};
      auto r = decode_step(t, p, x[0], x[1], st);
      return std::vector<Var>{r.probabilities, r.gate, r.next.hidden, r.next.cell};
    };
  } else if (module == "emotion_ce" || module == "cls_loss") {
    const std::size_t T = 4, D = g.vocab;
    c.inputs.emplace_back("probs", nn::softmax_rows(uniform_matrix(T, D, 2.0, rng)));
    c.inputs.emplace_back("word_probs", nn::softmax_rows(uniform_matrix(1, 4, 2.0, rng)));
    c.inputs.emplace_back("category_probs", nn::softmax_rows(uniform_matrix(1, 2, 2.0, rng)));
    if (module == "emotion_ce") {
      c.fn = [D](Tape&, const std::vector<Var>& x) {
        std::vector<bool> emo(D, false);
        emo[5] = emo[6] = true;
        const std::vector<std::size_t> targets{5, 4, Vocabulary::kPad, Vocabulary::kEos};
        return std::vector<Var>{emotion_focused_ce(x[0], targets, emo, 0.1)};
      };
    } else {
      c.fn = [](Tape&, const std::vector<Var>& x) {
        const std::vector<std::size_t> gc{1}, gw{2, 3};
        return std::vector<Var>{hierarchical_cls_loss(x[2], x[1], gc, gw)};
      };
    }
  } else if (module == "total_loss") {
    c.store.reset();
    ModelConfig m = mc;
    m.subspaces = g.subspaces;
    c.model = std::make_shared<Model>(m, desk_taxonomy());
    c.params = &c.model->params();
    auto sample = std::make_shared<VideoSample>();
    sample->appearance = uniform_matrix(N, g.feature_dim, 1.0, rng);
    sample->motion = uniform_matrix(N, g.feature_dim, 1.0, rng);
    sample->gt_category_ids = {0};
    sample->gt_emotion_word_ids = {1};
    std::vector<std::size_t> caption{4, 5, 7};
    // Freeze the top-K selection at the base parameters.
    Tape probe(c.params, false);
    auto enc = c.model->encode(probe, sample->appearance, sample->motion);
    auto mask = std::make_shared<Matrix>(enc.emotion.mask);
    auto model = c.model;
    c.fn = [model, sample, caption, mask](Tape& t, const std::vector<Var>&) {
      std::vector<bool> emo(model->config().vocab_size, false);
      emo[5] = true;
      auto tf = model->teacher_forced(t, sample->appearance, sample->motion, caption, {}, mask.get());
      auto targets = caption_targets(caption);
      Var le = emotion_focused_ce(tf.step_probs, targets, emo, 0.1);
      Var lc = hierarchical_cls_loss(tf.encoded.emotion.categories.probabilities,
                                     tf.encoded.emotion.words.probabilities, sample->gt_category_ids,
                                     sample->gt_emotion_word_ids);
      return std::vector<Var>{total_loss(le, lc, LossConfig{})};
    };
  } else {
    throw ValidationError("unknown grad-check module: " + module);
  }
  return c;
}

struct Evaluator {
  Case& c;
  std::vector<Matrix> weights;

  std::vector<Var> forward(Tape& t, std::vector<Var>& vars) const {
    vars.clear();
    for (const auto& [name, m] : c.inputs) vars.push_back(t.input(m));
    return c.fn(t, vars);
  }

  double objective(Tape& t, const std::vector<Var>& outs, Var* root) {
    if (weights.empty()) {
      Rng wr(0x5eed);
      for (Var o : outs) {
        Matrix w = uniform_matrix(o.rows(), o.cols(), 1.0, wr);
        w *= 1.0 / std::sqrt(static_cast<double>(w.size()));
        weights.push_back(std::move(w));
      }
    }
    Var total = ad::weighted_sum(outs[0], weights[0]);
    for (std::size_t i = 1; i < outs.size(); ++i) total = ad::add(total, ad::weighted_sum(outs[i], weights[i]));
    if (root) *root = total;
    return total.value()[0];
  }

  double value() {
    Tape t(c.params, false);
    std::vector<Var> vars;
    auto outs = forward(t, vars);
    return objective(t, outs, nullptr);
  }
};

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

std::vector<std::string> GradCheckReport::failing_groups() const {
  std::vector<std::string> out;
  for (const auto& g : groups)
    if (!(g.max_rel < tolerance)) out.push_back(g.group);
  return out;
}

const std::vector<std::string>& grad_check_modules() {
  static const std::vector<std::string> names{
      "linear",          "softmax_rows",       "layer_norm",         "weighted_pool",   "cross_attention",
      "masked_attention", "self_attention_block", "encode_video",     "predict_categories",
      "encode_emotion_words", "encode_emotion", "extend_features",    "element_evolve",  "subspace_recompose",
      "evolve_step_es",  "evolve_step_se",     "correlate_text",     "emotion_gate",    "decode_step",
      "emotion_ce",      "cls_loss",           "total_loss"};
  return names;
}

GradCheckReport grad_check(const std::string& module, const GradCheckConfig& config) {
  if (module == "evolve_step") {
    // Both evolution orders, merged.
    GradCheckReport es = grad_check("evolve_step_es", config);
    GradCheckReport se = grad_check("evolve_step_se", config);
    GradCheckReport r = es;
    r.module = module;
    for (auto& g : r.groups) g.group = "es/" + g.group;
    double sum = es.mean_rel * static_cast<double>(es.groups.size()) + se.mean_rel * static_cast<double>(se.groups.size());
    for (auto g : se.groups) {
      g.group = "se/" + g.group;
      r.groups.push_back(g);
    }
    r.max_rel = std::max(es.max_rel, se.max_rel);
    r.mean_rel = r.groups.empty() ? 0.0 : sum / static_cast<double>(r.groups.size());
    r.seconds = es.seconds + se.seconds;
    return r;
  }
  if (config.step <= 0.0 || config.tolerance <= 0.0) throw ValidationError("grad-check step and tolerance must be > 0");
  if (config.dim == 0 || config.frames == 0 || config.extension == 0 || config.prefix_len == 0 || config.vocab < 8)
    throw ValidationError("grad-check dims too small");
  const auto start = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  Case c = build_case(module, config, rng);
  Evaluator ev{c, {}};

  // Analytic gradients.
  Tape tape(c.params, true);
  std::vector<Var> vars;
  auto outs = ev.forward(tape, vars);
  Var root;
  const double f0 = ev.objective(tape, outs, &root);
  // Central differences carry about ulp(f)/h of roundoff, so the floor tracks |f|.
  const double floor = kRelFloor * std::max(1.0, std::abs(f0));
  tape.backward(root);
  Gradients pg(c.params->size());
  tape.collect_param_grads(pg);

  GradCheckReport report;
  report.module = module;
  report.tolerance = config.tolerance;
  double err_sum = 0.0;
  std::size_t err_count = 0;
  const double h = config.step;

  auto check = [&](const std::string& group, Matrix& target, const Matrix* analytic) {
    GroupError ge;
    ge.group = group;
    ge.elements = target.size();
    double sum = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double orig = target[k];
      target[k] = orig + h;
      const double fp = ev.value();
      target[k] = orig - h;
      const double fm = ev.value();
      target[k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic ? (*analytic)[k] : 0.0;
      const double e = rel_error(a, numeric, floor);
      ge.max_rel = std::max(ge.max_rel, e);
      sum += e;
    }
    ge.mean_rel = ge.elements ? sum / static_cast<double>(ge.elements) : 0.0;
    err_sum += sum;
    err_count += ge.elements;
    report.max_rel = std::max(report.max_rel, ge.max_rel);
    report.groups.push_back(ge);
  };

  for (ParamId id = 0; id < c.params->size(); ++id)
    check(c.params->name(id), c.params->value(id), pg.get(id));
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const Matrix& g = tape.grad(vars[i]);
    const Matrix* analytic = g.size() == c.inputs[i].second.size() ? &g : nullptr;
    check("input:" + c.inputs[i].first, c.inputs[i].second, analytic);
  }
  report.mean_rel = err_count ? err_sum / static_cast<double>(err_count) : 0.0;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_report(const GradCheckReport& r) {
  std::ostringstream os;
  os.precision(3);
  os << "module " << r.module << "\n";
  for (const auto& g : r.groups)
    os << "  " << g.group << "  n=" << g.elements << "  max=" << std::scientific << g.max_rel
       << "  mean=" << g.mean_rel << std::defaultfloat << (g.max_rel < r.tolerance ? "" : "  FAIL") << "\n";
  os << "max_rel " << std::scientific << r.max_rel << "  mean_rel " << r.mean_rel << std::defaultfloat << "  "
     << (r.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace evocap
