#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evocap/tensor.hpp"

namespace evocap {

inline constexpr std::size_t kMaxCaptionLen = 15;

// Two-level emotion tree: categories own sets of emotion words.
struct EmotionTaxonomy {
  std::vector<std::string> categories;
  std::vector<std::string> words;
  // category id -> sorted word ids
  std::vector<std::vector<std::size_t>> membership;
  // Optional pretrained tables (N_c x d_e, N_w x d_e); empty means "initialize randomly".
  Matrix category_embeddings;
  Matrix word_embeddings;

  std::size_t num_categories() const { return categories.size(); }
  std::size_t num_words() const { return words.size(); }
  bool contains(std::size_t category, std::size_t word) const;
  std::size_t category_index(std::string_view name) const;
  std::size_t word_index(std::string_view name) const;
  // Throws ValidationError unless every word belongs to at least one category.
  void validate() const;
};

// Token <-> id bijection with four reserved ids at the front.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // `tokens` excludes the reserved entries; duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  std::size_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Maps every taxonomy word to its vocabulary id; throws if a word is missing.
  void link_taxonomy(const EmotionTaxonomy& taxonomy);
  // emotion_word_ids()[w] is the vocabulary id of taxonomy word w.
  const std::vector<std::size_t>& emotion_word_ids() const { return emotion_ids_; }
  bool is_emotion_word(std::size_t id) const;
  // One flag per vocabulary id.
  const std::vector<bool>& emotion_flags() const { return emotion_flag_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> emotion_ids_;
  std::vector<bool> emotion_flag_;
};

// Lowercases, strips ASCII punctuation (underscore kept), splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::vector<std::size_t> encode_caption(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                        std::size_t* unk_count = nullptr);
std::vector<std::string> decode_caption(const std::vector<std::size_t>& ids, const Vocabulary& vocab);
std::string join_tokens(const std::vector<std::string>& tokens);

struct SampleRecord {
  std::string id;
  std::string appearance_path;  // relative to the manifest directory
  std::string motion_path;
  std::vector<std::string> captions;
  std::vector<std::string> categories;
  std::vector<std::string> emotion_words;
  std::string split = "train";

  bool operator==(const SampleRecord&) const = default;
};

struct VideoSample {
  std::string id;
  Matrix appearance;  // N x d_a
  Matrix motion;      // N x d_m
  std::vector<std::vector<std::size_t>> captions;
  std::vector<std::size_t> gt_category_ids;
  std::vector<std::size_t> gt_emotion_word_ids;

  std::size_t frames() const { return appearance.rows(); }
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::vector<VideoSample> samples;  // parallel to records
  std::size_t unk_tokens = 0;        // caption tokens mapped to UNK on load
  std::size_t truncated_captions = 0;
  std::size_t truncated_frames = 0;  // samples whose streams were cut to equal length

  std::size_t size() const { return samples.size(); }
};

// Reads a JSON-lines manifest. Feature paths resolve against the manifest's
// directory. Missing features raise LoadError naming the sample id.
DatasetManifest load_manifest(const std::filesystem::path& path, const EmotionTaxonomy& taxonomy,
                              const Vocabulary& vocab);
// Writes only the record lines (features are written separately).
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

EmotionTaxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const std::filesystem::path& path, const EmotionTaxonomy& taxonomy);
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

struct SynthSpec {
  unsigned long long seed = 1;
  std::size_t n_videos = 16;
  std::size_t vocab_size = 60;
  std::size_t n_categories = 2;
  std::size_t words_per_category = 4;
  std::size_t d_appearance = 16;
  std::size_t d_motion = 16;
  std::size_t n_frames = 4;
  // Each video carries two emotions: the first half of its frames expresses
  // one emotion word, the second half another, and the caption names both.
  bool two_phase = false;
  double noise = 0.1;
};

struct Corpus {
  DatasetManifest manifest;
  EmotionTaxonomy taxonomy;
  Vocabulary vocab;
};

Corpus synth_corpus(const SynthSpec& spec);

// Directory layout: manifest.jsonl, taxonomy.json, vocab.json, features/.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace evocap
