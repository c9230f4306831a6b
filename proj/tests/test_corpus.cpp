#include <doctest.h>

#include <fstream>
#include <map>

#include "evocap/errors.hpp"
#include "evocap/io.hpp"
#include "helpers.hpp"

using namespace evocap;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Relative path -> file bytes for every regular file under `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("tokenizer") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("A Man, smiling happily!") == std::vector<std::string>{"a", "man", "smiling", "happily"});
  CHECK(tokenize("  snake_case\ttokens\n") == std::vector<std::string>{"snake_case", "tokens"});
  CHECK(tokenize("it's") == std::vector<std::string>{"its"});
}

TEST_CASE("vocabulary round trip and UNK mapping") {
  Vocabulary v({"a", "dog"});
  CHECK(v.size() == 6);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("<bos>") == Vocabulary::kBos);
  CHECK(v.id("<eos>") == Vocabulary::kEos);
  CHECK(v.id("<unk>") == Vocabulary::kUnk);
  CHECK(encode_caption({}, v).empty());
  CHECK(decode_caption({}, v).empty());
  const std::vector<std::string> toks{"a", "dog"};
  CHECK(decode_caption(encode_caption(toks, v), v) == toks);
  std::size_t unk = 0;
  auto ids = encode_caption({"a", "cat"}, v, &unk);
  CHECK(ids[1] == Vocabulary::kUnk);
  CHECK(unk == 1);
  CHECK(decode_caption(ids, v)[1] == "<unk>");
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), ValidationError);
}

TEST_CASE("taxonomy validation and lookup") {
  auto t = testing::small_taxonomy();
  CHECK_NOTHROW(t.validate());
  CHECK(t.contains(1, 3));
  CHECK_FALSE(t.contains(0, 3));
  CHECK(t.word_index("scared") == 4);
  t.membership[2] = {4};
  CHECK_THROWS_AS(t.validate(), ValidationError);
  Vocabulary v({"happy", "glad", "sad", "gloomy", "scared", "afraid", "the"});
  v.link_taxonomy(testing::small_taxonomy());
  CHECK(v.emotion_word_ids().size() == 6);
  CHECK(v.is_emotion_word(v.id("sad")));
  CHECK_FALSE(v.is_emotion_word(v.id("the")));
}

TEST_CASE("synthetic corpus sizes and construction guarantees") {
  SynthSpec spec;
  Corpus c = synth_corpus(spec);
  CHECK(c.manifest.size() == 16);
  CHECK(c.vocab.size() == 60);
  CHECK(c.taxonomy.num_words() == 8);
  CHECK(c.vocab.emotion_word_ids().size() == 8);
  for (const auto& s : c.manifest.samples) {
    CHECK(s.appearance.rows() == s.motion.rows());
    REQUIRE(s.gt_emotion_word_ids.size() == 1);
    const std::size_t w = s.gt_emotion_word_ids[0];
    bool in_cat = false;
    for (std::size_t k : s.gt_category_ids) in_cat = in_cat || c.taxonomy.contains(k, w);
    CHECK(in_cat);
    const auto& cap = s.captions[0];
    CHECK(std::find(cap.begin(), cap.end(), c.vocab.emotion_word_ids()[w]) != cap.end());
  }
  spec.vocab_size = 10;
  CHECK_THROWS_AS(synth_corpus(spec), ValidationError);
}

TEST_CASE("two-phase synthetic videos name both emotions") {
  SynthSpec spec;
  spec.two_phase = true;
  spec.n_videos = 8;
  Corpus c = synth_corpus(spec);
  for (const auto& s : c.manifest.samples) {
    CHECK(s.gt_emotion_word_ids.size() == 2);
    std::size_t emo = 0;
    for (std::size_t id : s.captions[0]) emo += c.vocab.is_emotion_word(id) ? 1 : 0;
    CHECK(emo == 2);
  }
}

TEST_CASE("synthetic corpus on disk is deterministic and round trips") {
  SynthSpec spec;
  spec.n_videos = 5;
  auto a = testing::scratch_dir("corpus_a"), b = testing::scratch_dir("corpus_b");
  write_corpus(a, synth_corpus(spec));
  write_corpus(b, synth_corpus(spec));
  CHECK(tree(a) == tree(b));

  Corpus orig = synth_corpus(spec);
  Corpus back = load_corpus(a);
  REQUIRE(back.manifest.size() == orig.manifest.size());
  for (std::size_t i = 0; i < orig.manifest.size(); ++i) {
    CHECK(back.manifest.records[i] == orig.manifest.records[i]);
    CHECK(bitwise_equal(back.manifest.samples[i].appearance, orig.manifest.samples[i].appearance));
    CHECK(back.manifest.samples[i].captions == orig.manifest.samples[i].captions);
    CHECK(back.manifest.samples[i].gt_emotion_word_ids == orig.manifest.samples[i].gt_emotion_word_ids);
  }
  CHECK(back.vocab.tokens() == orig.vocab.tokens());
}

TEST_CASE("manifest loading edge cases") {
  auto dir = testing::scratch_dir("manifest");
  auto tax = testing::small_taxonomy();
  Vocabulary vocab({"a", "happy", "dog"});
  io::write_text(dir / "empty.jsonl", "");
  CHECK(load_manifest(dir / "empty.jsonl", tax, vocab).size() == 0);

  Rng rng(2);
  io::write_array(dir / "f" / "x_app", uniform_matrix(4, 3, 1.0, rng), io::DType::f32);
  io::write_array(dir / "f" / "x_mot", uniform_matrix(3, 2, 1.0, rng), io::DType::f32);
  std::vector<SampleRecord> recs(2);
  recs[0] = {"second", "f/x_app", "f/x_mot", {"A happy dog barks"}, {"joy"}, {"happy"}, "train"};
  recs[1] = {"first", "f/x_app.f32", "f/x_mot", {std::string(40, 'a') + " " + "a a a a a a a a a a a a a a a a"}, {"joy"}, {}, "test"};
  write_manifest(dir / "two.jsonl", recs);
  auto m = load_manifest(dir / "two.jsonl", tax, vocab);
  REQUIRE(m.size() == 2);
  CHECK(m.records[0].id == "second");
  CHECK(m.records[1].id == "first");
  CHECK(m.records == recs);
  CHECK(m.samples[0].frames() == 3);
  CHECK(m.truncated_frames == 2);
  CHECK(m.unk_tokens == 2);  // "barks" and the 40-char token
  CHECK(m.samples[1].captions[0].size() == kMaxCaptionLen);
  CHECK(m.truncated_captions == 1);

  recs[0].motion_path = "f/nothing";
  write_manifest(dir / "bad.jsonl", recs);
  try {
    load_manifest(dir / "bad.jsonl", tax, vocab);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }

  recs[0].motion_path = "f/x_mot";
  recs[0].emotion_words = {"sad"};
  write_manifest(dir / "closure.jsonl", recs);
  CHECK_THROWS_AS(load_manifest(dir / "closure.jsonl", tax, vocab), ValidationError);

  recs[0].emotion_words = {"happy"};
  recs[1].id = "second";
  write_manifest(dir / "dup.jsonl", recs);
  CHECK_THROWS_AS(load_manifest(dir / "dup.jsonl", tax, vocab), ValidationError);
}

TEST_CASE("taxonomy and vocabulary files round trip") {
  auto dir = testing::scratch_dir("tax");
  auto t = testing::small_taxonomy();
  Rng rng(4);
  t.word_embeddings = uniform_matrix(6, 5, 1.0, rng);
  for (auto& x : t.word_embeddings.values()) x = static_cast<float>(x);  // stored as f32
  save_taxonomy(dir / "taxonomy.json", t);
  auto back = load_taxonomy(dir / "taxonomy.json");
  CHECK(back.categories == t.categories);
  CHECK(back.words == t.words);
  CHECK(back.membership == t.membership);
  CHECK(bitwise_equal(back.word_embeddings, t.word_embeddings));
  CHECK(back.category_embeddings.empty());

  Vocabulary v({"x", "y"});
  save_vocabulary(dir / "vocab.json", v);
  CHECK(load_vocabulary(dir / "vocab.json").tokens() == v.tokens());
  io::write_text(dir / "badvocab.json", R"({"tokens":["x"]})");
  CHECK_THROWS_AS(load_vocabulary(dir / "badvocab.json"), LoadError);
}
