#include <doctest.h>

#include <cmath>
#include <fstream>

#include "evocap/errors.hpp"
#include "evocap/metrics.hpp"
#include "helpers.hpp"
#include "metric_oracle.hpp"

using namespace evocap;

namespace {

Tokens toks(const std::string& s) { return tokenize(s); }

}  // namespace

TEST_CASE("n-gram metrics agree with brute-force oracles") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = metric_oracle::random_fixture(rng);
    const NgramScores s = ngram_metrics(f.candidates, f.references);
    const auto b = metric_oracle::bleu(f);
    for (std::size_t n = 0; n < 4; ++n) CHECK(std::abs(s.bleu[n] - b[n]) < 1e-9);
    CHECK(std::abs(s.rouge_l - metric_oracle::rouge_l(f)) < 1e-9);
    CHECK(std::abs(s.cider - metric_oracle::cider_d(f)) < 1e-9);
  }
}

TEST_CASE("BLEU-n is non-increasing when each candidate matches in one chunk") {
  // A reference prefix of length >= 4 followed by unseen tokens gives
  // per-order precisions that can only fall as n grows.
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = metric_oracle::random_fixture(rng);
    for (std::size_t v = 0; v < f.candidates.size(); ++v) {
      Tokens& ref = f.references[v][0];
      while (ref.size() < 4) ref.push_back("is");
      Tokens c(ref.begin(), ref.begin() + 4 + rng() % (ref.size() - 3));
      for (std::size_t u = rng() % 3; u > 0; --u) c.push_back("zz");
      f.candidates[v] = c;
    }
    const NgramScores s = ngram_metrics(f.candidates, f.references);
    for (std::size_t n = 1; n < 4; ++n) CHECK(s.bleu[n] <= s.bleu[n - 1]);
  }
}

TEST_CASE("identity and disjoint corpora") {
  const std::vector<Tokens> c{toks("a man is happy"), toks("the dog runs away fast"), toks("she cries alone tonight")};
  std::vector<std::vector<Tokens>> refs;
  for (const auto& s : c) refs.push_back({s});
  NgramScores s = ngram_metrics(c, refs);
  for (double b : s.bleu) CHECK(b == 1.0);
  CHECK(s.rouge_l == 1.0);
  CHECK(std::abs(s.cider - 10.0) < 1e-12);

  const std::vector<Tokens> other{toks("x y z"), toks("p q r s"), toks("u v")};
  s = ngram_metrics(other, refs);
  for (double b : s.bleu) CHECK(b == 0.0);
  CHECK(s.rouge_l == 0.0);
  CHECK(s.cider == 0.0);
}

TEST_CASE("metrics do not depend on video or reference order") {
  std::mt19937_64 rng(5);
  auto f = metric_oracle::random_fixture(rng);
  NgramScores a = ngram_metrics(f.candidates, f.references);
  std::reverse(f.candidates.begin(), f.candidates.end());
  std::reverse(f.references.begin(), f.references.end());
  for (auto& r : f.references) std::reverse(r.begin(), r.end());
  NgramScores b = ngram_metrics(f.candidates, f.references);
  for (std::size_t n = 0; n < 4; ++n) CHECK(std::abs(a.bleu[n] - b.bleu[n]) < 1e-12);
  CHECK(std::abs(a.rouge_l - b.rouge_l) < 1e-12);
  CHECK(std::abs(a.cider - b.cider) < 1e-12);
}

TEST_CASE("emotion accuracy on hand-counted fixtures") {
  const std::set<std::string> emo{"happy", "sad", "angry", "calm"};
  const std::vector<Tokens> cands{toks("a happy man"), toks("a sad angry dog"), toks("nothing here"),
                                  toks("happy happy calm")};
  const std::vector<std::vector<Tokens>> refs{{toks("the happy man"), toks("a man")},
                                              {toks("sad dog"), toks("a calm dog")},
                                              {toks("a happy cat")},
                                              {toks("calm and happy")}};
  // Emotion tokens: happy | sad angry | - | happy happy calm -> 6; correct: 1 + 1 + 0 + 3 = 5.
  const EmotionAccuracy a = emotion_accuracy(cands, refs, emo);
  CHECK(a.emotion_tokens == 6);
  CHECK(a.correct_tokens == 5);
  CHECK(a.correct_sentences == 2);
  CHECK(a.acc_sw == 5.0 / 6.0);
  CHECK(a.acc_c == 0.5);

  const EmotionAccuracy none = emotion_accuracy({toks("a b")}, {{toks("happy")}}, emo);
  CHECK(none.acc_sw == 0.0);
  CHECK(none.acc_c == 0.0);
  CHECK_THROWS_AS(emotion_accuracy({}, {}, emo), ValidationError);
  CHECK_THROWS_AS(emotion_accuracy({toks("a")}, {{}}, emo), ValidationError);
}

TEST_CASE("hybrid scores") {
  HybridScores h = hybrid_scores(0.4, 2.0, 0.8);
  CHECK(std::abs(h.bfs - 0.6) < 1e-15);
  CHECK(std::abs(h.cfs - 0.9) < 1e-15);
  h = hybrid_scores(0.4, 0.5, 0.8, 0.0);
  CHECK(h.bfs == 0.4);
  CHECK(h.cfs == 0.5);
  h = hybrid_scores(0.4, 0.5, 0.8, 1.0);
  CHECK(h.bfs == 0.8);
  CHECK_THROWS_AS(hybrid_scores(0.4, 0.5, 0.8, 1.5), ValidationError);
  CHECK_THROWS_AS(hybrid_scores(0.4, 0.5, 0.8, -0.1), ValidationError);
}

TEST_CASE("evaluation inputs are aligned by id") {
  const auto dir = testing::scratch_dir("eval");
  std::ofstream(dir / "c.jsonl") << R"({"id":"v2","caption":"A sad dog."})" << "\n"
                                 << R"({"id":"v1","caption":"a happy man"})" << "\n";
  std::ofstream(dir / "r.jsonl") << R"({"id":"v1","captions":["a happy man"]})" << "\n"
                                 << R"({"id":"v2","captions":["the sad dog","a dog"]})" << "\n";
  EvalInputs in = load_eval_inputs(dir / "c.jsonl", dir / "r.jsonl");
  CHECK(in.ids == std::vector<std::string>{"v1", "v2"});
  CHECK(in.candidates[1] == Tokens{"a", "sad", "dog"});
  CHECK(in.references[1].size() == 2);
  MetricReport r = evaluate(in.ids, in.candidates, in.references, {"happy", "sad"});
  CHECK(r.emotion.acc_sw == 1.0);
  CHECK(r.to_json()["meteor"] == "n/a");
  CHECK(r.to_csv().rfind("id,caption,rouge_l,cider\n", 0) == 0);

  std::ofstream(dir / "bad.jsonl") << R"({"id":"v9","captions":["x"]})" << "\n";
  CHECK_THROWS_AS(load_eval_inputs(dir / "c.jsonl", dir / "bad.jsonl"), LoadError);
  CHECK_THROWS_AS(load_eval_inputs(dir / "none.jsonl", dir / "r.jsonl"), LoadError);
}

TEST_CASE("metric ranges and hybrid fixed point") {
  const HybridScores one = hybrid_scores(1.0, 1.0, 1.0, 0.3);
  CHECK(std::abs(one.bfs - 1.0) < 1e-15);
  CHECK(std::abs(one.cfs - 1.0) < 1e-15);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = metric_oracle::random_fixture(rng);
    const NgramScores s = ngram_metrics(f.candidates, f.references);
    for (double b : s.bleu) CHECK((b >= 0.0 && b <= 1.0));
    CHECK((s.rouge_l >= 0.0 && s.rouge_l <= 1.0 + 1e-15));
    CHECK((s.cider >= 0.0 && s.cider <= 10.0 + 1e-9));
    const EmotionAccuracy a = emotion_accuracy(f.candidates, f.references, {"happy", "sad"});
    CHECK((a.acc_sw >= 0.0 && a.acc_sw <= 1.0 && a.acc_c >= 0.0 && a.acc_c <= 1.0));
  }
}
