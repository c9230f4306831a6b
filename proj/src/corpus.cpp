#include "evocap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "evocap/errors.hpp"
#include "evocap/io.hpp"
#include "evocap/params.hpp"

namespace evocap {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool EmotionTaxonomy::contains(std::size_t category, std::size_t word) const {
  const auto& m = membership.at(category);
  return std::binary_search(m.begin(), m.end(), word);
}

std::size_t EmotionTaxonomy::category_index(std::string_view name) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == name) return i;
  throw ValidationError("unknown emotion category: " + std::string(name));
}

std::size_t EmotionTaxonomy::word_index(std::string_view name) const {
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i] == name) return i;
  throw ValidationError("unknown emotion word: " + std::string(name));
}

void EmotionTaxonomy::validate() const {
  if (categories.empty() || words.empty()) throw ValidationError("taxonomy needs categories and words");
  if (membership.size() != categories.size()) throw ValidationError("membership must list every category");
  std::vector<bool> covered(words.size(), false);
  for (const auto& m : membership) {
    if (!std::is_sorted(m.begin(), m.end())) throw ValidationError("membership lists must be sorted");
    for (std::size_t w : m) {
      if (w >= words.size()) throw ValidationError("membership references word id " + std::to_string(w));
      covered[w] = true;
    }
  }
  for (std::size_t w = 0; w < words.size(); ++w)
    if (!covered[w]) throw ValidationError("emotion word '" + words[w] + "' belongs to no category");
  if (!category_embeddings.empty() && category_embeddings.rows() != categories.size())
    throw ValidationError("category embedding table has wrong row count");
  if (!word_embeddings.empty() && word_embeddings.rows() != words.size())
    throw ValidationError("word embedding table has wrong row count");
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw ValidationError("duplicate vocabulary token: " + tokens_[i]);
  }
  emotion_flag_.assign(tokens_.size(), false);
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::link_taxonomy(const EmotionTaxonomy& taxonomy) {
  emotion_ids_.clear();
  emotion_flag_.assign(tokens_.size(), false);
  for (const auto& w : taxonomy.words) {
    auto it = index_.find(w);
    if (it == index_.end()) throw ValidationError("emotion word '" + w + "' missing from vocabulary");
    emotion_ids_.push_back(it->second);
    emotion_flag_[it->second] = true;
  }
}

bool Vocabulary::is_emotion_word(std::size_t id) const { return id < emotion_flag_.size() && emotion_flag_[id]; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (std::ispunct(c) && ch != '_') {
      continue;
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::size_t> encode_caption(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                        std::size_t* unk_count) {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const std::size_t id = vocab.id(t);
    if (id == Vocabulary::kUnk && unk_count && t != vocab.token(Vocabulary::kUnk)) ++*unk_count;
    ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> decode_caption(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(vocab.token(id < vocab.size() ? id : Vocabulary::kUnk));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

namespace {

std::vector<std::size_t> resolve_labels(const json& arr, bool categories, const EmotionTaxonomy& tax,
                                        const std::string& id) {
  std::set<std::size_t> out;
  if (!arr.is_array()) throw LoadError("sample " + id + ": label field must be an array");
  const std::size_t limit = categories ? tax.num_categories() : tax.num_words();
  for (const auto& v : arr) {
    std::size_t idx;
    if (v.is_number_unsigned() || v.is_number_integer()) {
      idx = v.get<std::size_t>();
      if (idx >= limit) throw ValidationError("sample " + id + ": label index " + std::to_string(idx) + " out of range");
    } else {
      const auto name = v.get<std::string>();
      idx = categories ? tax.category_index(name) : tax.word_index(name);
    }
    out.insert(idx);
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  for (const auto& v : j[key]) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  return out;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path, const EmotionTaxonomy& taxonomy, const Vocabulary& vocab) {
  DatasetManifest m;
  const std::string text = io::read_text(path);
  const fs::path base = path.parent_path();
  std::unordered_set<std::string> seen;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    SampleRecord rec;
    rec.id = j.value("id", "");
    if (rec.id.empty()) throw LoadError(path.string() + ":" + std::to_string(lineno) + ": record without id");
    if (!seen.insert(rec.id).second) throw ValidationError("duplicate sample id: " + rec.id);
    rec.appearance_path = j.value("appearance_path", "");
    rec.motion_path = j.value("motion_path", "");
    rec.captions = string_list(j, "captions");
    rec.categories = string_list(j, "categories");
    rec.emotion_words = string_list(j, "emotion_words");
    rec.split = j.value("split", "train");

    VideoSample s;
    s.id = rec.id;
    const fs::path app = base / rec.appearance_path;
    const fs::path mot = base / rec.motion_path;
    if (rec.appearance_path.empty() || !io::array_exists(app))
      throw LoadError("sample " + rec.id + ": appearance features not found at " + app.string());
    if (rec.motion_path.empty() || !io::array_exists(mot))
      throw LoadError("sample " + rec.id + ": motion features not found at " + mot.string());
    try {
      s.appearance = io::read_array(app);
      s.motion = io::read_array(mot);
    } catch (const LoadError& e) {
      throw LoadError("sample " + rec.id + ": " + e.what());
    }
    if (s.appearance.rows() != s.motion.rows()) {
      const std::size_t n = std::min(s.appearance.rows(), s.motion.rows());
      s.appearance = Matrix(n, s.appearance.cols(),
                            std::vector<double>(s.appearance.data(), s.appearance.data() + n * s.appearance.cols()));
      s.motion = Matrix(n, s.motion.cols(), std::vector<double>(s.motion.data(), s.motion.data() + n * s.motion.cols()));
      ++m.truncated_frames;
    }
    if (s.appearance.rows() == 0) throw LoadError("sample " + rec.id + ": no frames");

    for (const auto& cap : rec.captions) {
      auto ids = encode_caption(tokenize(cap), vocab, &m.unk_tokens);
      if (ids.size() > kMaxCaptionLen) {
        ids.resize(kMaxCaptionLen);
        ++m.truncated_captions;
      }
      s.captions.push_back(std::move(ids));
    }
    s.gt_category_ids = resolve_labels(j.value("categories", json::array()), true, taxonomy, rec.id);
    s.gt_emotion_word_ids = resolve_labels(j.value("emotion_words", json::array()), false, taxonomy, rec.id);
    for (std::size_t w : s.gt_emotion_word_ids) {
      const bool ok = std::any_of(s.gt_category_ids.begin(), s.gt_category_ids.end(),
                                  [&](std::size_t c) { return taxonomy.contains(c, w); });
      if (!ok)
        throw ValidationError("sample " + rec.id + ": emotion word '" + taxonomy.words[w] +
                              "' is outside its ground-truth categories");
    }
    m.records.push_back(std::move(rec));
    m.samples.push_back(std::move(s));
  }
  return m;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["appearance_path"] = r.appearance_path;
    j["motion_path"] = r.motion_path;
    j["captions"] = r.captions;
    j["categories"] = r.categories;
    j["emotion_words"] = r.emotion_words;
    j["split"] = r.split;
    out += j.dump() + "\n";
  }
  io::write_text(path, out);
}

EmotionTaxonomy load_taxonomy(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  EmotionTaxonomy t;
  t.categories = j.at("categories").get<std::vector<std::string>>();
  t.words = j.at("words").get<std::vector<std::string>>();
  t.membership.assign(t.categories.size(), {});
  const json& mem = j.at("membership");
  for (auto it = mem.begin(); it != mem.end(); ++it) {
    const std::size_t c = t.category_index(it.key());
    std::set<std::size_t> ids;
    for (const auto& w : it.value()) ids.insert(w.is_string() ? t.word_index(w.get<std::string>()) : w.get<std::size_t>());
    t.membership[c].assign(ids.begin(), ids.end());
  }
  const fs::path base = path.parent_path();
  if (j.contains("category_embeddings")) t.category_embeddings = io::read_array(base / j["category_embeddings"].get<std::string>());
  if (j.contains("word_embeddings")) t.word_embeddings = io::read_array(base / j["word_embeddings"].get<std::string>());
  t.validate();
  return t;
}

void save_taxonomy(const fs::path& path, const EmotionTaxonomy& t) {
  ordered_json j;
  j["categories"] = t.categories;
  j["words"] = t.words;
  ordered_json mem = ordered_json::object();
  for (std::size_t c = 0; c < t.categories.size(); ++c) {
    std::vector<std::string> names;
    for (std::size_t w : t.membership[c]) names.push_back(t.words[w]);
    mem[t.categories[c]] = names;
  }
  j["membership"] = mem;
  const fs::path base = path.parent_path();
  if (!t.category_embeddings.empty()) {
    io::write_array(base / "category_embeddings", t.category_embeddings, io::DType::f32);
    j["category_embeddings"] = "category_embeddings";
  }
  if (!t.word_embeddings.empty()) {
    io::write_array(base / "word_embeddings", t.word_embeddings, io::DType::f32);
    j["word_embeddings"] = "word_embeddings";
  }
  io::write_text(path, j.dump(2) + "\n");
}

Vocabulary load_vocabulary(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  auto tokens = j.at("tokens").get<std::vector<std::string>>();
  const std::vector<std::string> reserved = {"<pad>", "<bos>", "<eos>", "<unk>"};
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin()))
    throw LoadError(path.string() + ": vocabulary must start with <pad> <bos> <eos> <unk>");
  return Vocabulary(std::vector<std::string>(tokens.begin() + Vocabulary::kReserved, tokens.end()));
}

void save_vocabulary(const fs::path& path, const Vocabulary& vocab) {
  ordered_json j;
  j["tokens"] = vocab.tokens();
  io::write_text(path, j.dump(2) + "\n");
}

Corpus synth_corpus(const SynthSpec& spec) {
  const std::size_t n_words = spec.n_categories * spec.words_per_category;
  if (spec.n_categories == 0 || spec.words_per_category == 0)
    throw ValidationError("synthetic corpus needs at least one category and one word per category");
  if (spec.vocab_size <= n_words + Vocabulary::kReserved)
    throw ValidationError("vocab_size " + std::to_string(spec.vocab_size) + " must exceed " +
                          std::to_string(n_words + Vocabulary::kReserved) + " (emotion words + reserved)");
  if (spec.n_frames == 0 || spec.d_appearance == 0 || spec.d_motion == 0)
    throw ValidationError("synthetic corpus needs positive frame count and feature dims");
  if (spec.two_phase && (spec.n_frames < 2 || n_words < 2))
    throw ValidationError("two-phase videos need at least 2 frames and 2 emotion words");

  Rng rng(spec.seed);
  Corpus c;
  EmotionTaxonomy& tax = c.taxonomy;
  for (std::size_t k = 0; k < spec.n_categories; ++k) {
    tax.categories.push_back("cat" + std::to_string(k));
    std::vector<std::size_t> members;
    for (std::size_t w = 0; w < spec.words_per_category; ++w) members.push_back(k * spec.words_per_category + w);
    tax.membership.push_back(std::move(members));
  }
  for (std::size_t w = 0; w < n_words; ++w) tax.words.push_back("emo" + std::to_string(w));

  std::vector<std::string> tokens = tax.words;
  const std::size_t n_fillers = spec.vocab_size - Vocabulary::kReserved - n_words;
  std::vector<std::string> fillers;
  for (std::size_t i = 0; i < n_fillers; ++i) fillers.push_back("w" + std::to_string(i));
  tokens.insert(tokens.end(), fillers.begin(), fillers.end());
  c.vocab = Vocabulary(tokens);
  c.vocab.link_taxonomy(tax);

  // Emotion-word prototypes make the word recoverable from the features.
  const Matrix proto_a = normal_matrix(n_words, spec.d_appearance, 1.0, rng);
  const Matrix proto_m = normal_matrix(n_words, spec.d_motion, 1.0, rng);
  const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  const int width = spec.n_videos > 1000 ? 5 : 3;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    std::string id = std::to_string(v);
    id = "vid" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(id.size(), width), '0') + id;

    const std::size_t w1 = v % n_words;
    std::size_t w2 = w1;
    if (spec.two_phase) {
      w2 = pick(n_words - 1);
      if (w2 >= w1) ++w2;
    }
    const Matrix content_a = normal_matrix(1, spec.d_appearance, 1.0, rng);
    const Matrix content_m = normal_matrix(1, spec.d_motion, 1.0, rng);
    const Matrix noise_a = normal_matrix(spec.n_frames, spec.d_appearance, spec.noise, rng);
    const Matrix noise_m = normal_matrix(spec.n_frames, spec.d_motion, spec.noise, rng);

    VideoSample s;
    s.id = id;
    s.appearance = Matrix(spec.n_frames, spec.d_appearance);
    s.motion = Matrix(spec.n_frames, spec.d_motion);
    for (std::size_t f = 0; f < spec.n_frames; ++f) {
      const std::size_t w = (spec.two_phase && f >= spec.n_frames / 2) ? w2 : w1;
      for (std::size_t d = 0; d < spec.d_appearance; ++d)
        s.appearance(f, d) = static_cast<float>(proto_a(w, d) + content_a[d] + noise_a(f, d));
      for (std::size_t d = 0; d < spec.d_motion; ++d)
        s.motion(f, d) = static_cast<float>(proto_m(w, d) + content_m[d] + noise_m(f, d));
    }

    std::vector<std::string> caption;
    caption.push_back(fillers[pick(n_fillers)]);
    caption.push_back(fillers[pick(n_fillers)]);
    caption.push_back(tax.words[w1]);
    caption.push_back(fillers[pick(n_fillers)]);
    if (spec.two_phase) {
      caption.push_back(fillers[0]);
      caption.push_back(fillers[pick(n_fillers)]);
      caption.push_back(tax.words[w2]);
    }

    std::set<std::size_t> cats{w1 / spec.words_per_category, w2 / spec.words_per_category};
    std::set<std::size_t> words{w1, w2};
    s.gt_category_ids.assign(cats.begin(), cats.end());
    s.gt_emotion_word_ids.assign(words.begin(), words.end());
    s.captions.push_back(encode_caption(caption, c.vocab));

    SampleRecord rec;
    rec.id = id;
    rec.appearance_path = "features/" + id + "_app";
    rec.motion_path = "features/" + id + "_mot";
    rec.captions.push_back(join_tokens(caption));
    for (std::size_t k : s.gt_category_ids) rec.categories.push_back(tax.categories[k]);
    for (std::size_t w : s.gt_emotion_word_ids) rec.emotion_words.push_back(tax.words[w]);

    c.manifest.records.push_back(std::move(rec));
    c.manifest.samples.push_back(std::move(s));
  }
  return c;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir / "features");
  for (std::size_t i = 0; i < corpus.manifest.size(); ++i) {
    const auto& rec = corpus.manifest.records[i];
    const auto& s = corpus.manifest.samples[i];
    io::write_array(dir / rec.appearance_path, s.appearance, io::DType::f32);
    io::write_array(dir / rec.motion_path, s.motion, io::DType::f32);
  }
  write_manifest(dir / "manifest.jsonl", corpus.manifest.records);
  save_taxonomy(dir / "taxonomy.json", corpus.taxonomy);
  save_vocabulary(dir / "vocab.json", corpus.vocab);
}

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.taxonomy = load_taxonomy(dir / "taxonomy.json");
  c.vocab = load_vocabulary(dir / "vocab.json");
  c.vocab.link_taxonomy(c.taxonomy);
  c.manifest = load_manifest(dir / "manifest.jsonl", c.taxonomy, c.vocab);
  return c;
}

}  // namespace evocap
