#include <doctest.h>

#include <cmath>

#include "evocap/errors.hpp"
#include "evocap/model.hpp"
#include "helpers.hpp"

using namespace evocap;

namespace {

struct Fixture {
  Model model{testing::small_config(), testing::small_taxonomy()};
  Matrix app, mot;

  explicit Fixture(unsigned long long seed = 3) {
    Rng rng(seed);
    app = uniform_matrix(4, model.config().d_appearance, 1.0, rng);
    mot = uniform_matrix(4, model.config().d_motion, 1.0, rng);
  }
};

}  // namespace

TEST_CASE("greedy decoding equals beam search of width one") {
  for (unsigned long long seed = 1; seed <= 5; ++seed) {
    Fixture f(seed);
    Generation g = f.model.generate(f.app, f.mot);
    Generation b = f.model.generate(f.app, f.mot, GenerateOptions{1});
    CHECK(g.tokens == b.tokens);
    CHECK(g.log_prob == b.log_prob);
    CHECK(g.steps.size() == b.steps.size());
    for (std::size_t t = 0; t < g.steps.size(); ++t) {
      CHECK(g.steps[t].token == b.steps[t].token);
      CHECK(g.steps[t].token_prob == b.steps[t].token_prob);
    }
  }
}

TEST_CASE("generation respects the length limit and records traces") {
  Fixture f;
  for (std::size_t max_len : {1u, 3u, 15u}) {
    for (std::size_t beam : {0u, 3u}) {
      GenerateOptions opt{beam, max_len};
      Generation g = f.model.generate(f.app, f.mot, opt);
      CHECK(g.tokens.size() <= max_len);
      CHECK(g.steps.size() <= max_len);
      CHECK(!g.steps.empty());
      for (std::size_t t = 0; t < g.steps.size(); ++t) {
        CHECK(g.steps[t].t == t + 1);
        CHECK(g.steps[t].gate.rows() == 4);
        CHECK(g.steps[t].evolution.evolved.rows() == 4);
        CHECK(g.steps[t].token_prob > 0.0);
      }
      for (std::size_t tok : g.tokens) CHECK(tok != Vocabulary::kEos);
      CHECK(g.log_prob <= 0.0);
    }
  }
  Generation again = f.model.generate(f.app, f.mot, GenerateOptions{3});
  Generation once = f.model.generate(f.app, f.mot, GenerateOptions{3});
  CHECK(again.tokens == once.tokens);
  CHECK(again.log_prob == once.log_prob);
}

TEST_CASE("teacher forcing shapes and agreement with stepwise decoding") {
  Fixture f;
  const std::vector<std::size_t> caption{5, 7, 9};
  Tape t(&f.model.params(), false);
  Model::TeacherForced tf = f.model.teacher_forced(t, f.app, f.mot, caption);
  CHECK((tf.step_probs.rows() == 4 && tf.step_probs.cols() == f.model.config().vocab_size));
  CHECK(tf.gates.size() == 4);
  CHECK(tf.emotions.size() == 4);
  CHECK(caption_targets(caption) == std::vector<std::size_t>{5, 7, 9, Vocabulary::kEos});

  // The first step of generation sees the same inputs as the first teacher-forced step.
  Generation g = f.model.generate(f.app, f.mot, GenerateOptions{0, 1});
  double best = 0.0;
  for (std::size_t c = 0; c < tf.step_probs.cols(); ++c) best = std::max(best, tf.step_probs.value()(0, c));
  CHECK(std::abs(g.steps[0].token_prob - best) < 1e-12);
}

TEST_CASE("sample objective combines both losses") {
  Fixture f;
  VideoSample s;
  s.appearance = f.app;
  s.motion = f.mot;
  s.gt_category_ids = {1};
  s.gt_emotion_word_ids = {2};
  const std::vector<std::size_t> caption{5, 4, 6};
  std::vector<bool> flags(f.model.config().vocab_size, false);
  flags[4] = true;
  Tape t(&f.model.params());
  LossParts parts;
  Var total = sample_objective(t, f.model, s, caption, flags, LossConfig{}, &parts);
  CHECK(parts.emotion_ce > 0.0);
  CHECK(parts.cls > 0.0);
  CHECK(std::abs(parts.total - (parts.emotion_ce + 0.2 * parts.cls)) < 1e-12);
  CHECK(total.value()[0] == parts.total);
}

TEST_CASE("model configuration validation") {
  auto cfg = testing::small_config();
  cfg.top_k = 4;
  CHECK_THROWS_AS(Model(cfg, testing::small_taxonomy()), ValidationError);
  cfg = testing::small_config();
  cfg.n_words = 5;
  CHECK_THROWS_AS(Model(cfg, testing::small_taxonomy()), ValidationError);
  CHECK(parse_evolution_order("E->S") == EvolutionOrder::element_then_subspace);
  CHECK(parse_evolution_order("subspace_then_element") == EvolutionOrder::subspace_then_element);
  CHECK(parse_evolution_mode(to_string(EvolutionMode::subspace_only)) == EvolutionMode::subspace_only);
  CHECK_THROWS_AS(parse_evolution_order("sideways"), ValidationError);
}

TEST_CASE("teacher-forced step probabilities ignore future tokens") {
  Fixture f;
  const std::vector<std::size_t> caption{5, 7, 9, 11};
  Tape t(&f.model.params(), false);
  const Matrix base = f.model.teacher_forced(t, f.app, f.mot, caption).step_probs.value();
  for (std::size_t cut = 0; cut < caption.size(); ++cut) {
    std::vector<std::size_t> changed = caption;
    for (std::size_t i = cut; i < changed.size(); ++i) changed[i] = 4 + (changed[i] + 3) % 10;
    const Matrix other = f.model.teacher_forced(t, f.app, f.mot, changed).step_probs.value();
    // Row t predicts caption[t] from tokens before it.
    for (std::size_t r = 0; r <= cut; ++r)
      for (std::size_t c = 0; c < base.cols(); ++c) CHECK(base(r, c) == other(r, c));
    CHECK(max_abs_diff(base, other) > 0.0);
  }
}
