#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "evocap/corpus.hpp"
#include "evocap/model.hpp"
#include "evocap/params.hpp"

namespace testing {

using namespace evocap;

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  return uniform_matrix(r, c, scale, rng);
}

inline EmotionTaxonomy small_taxonomy() {
  EmotionTaxonomy t;
  t.categories = {"joy", "sad", "fear"};
  t.words = {"happy", "glad", "sad", "gloomy", "scared", "afraid"};
  t.membership = {{0, 1}, {2, 3}, {4, 5}};
  return t;
}

inline ModelConfig small_config(std::size_t vocab = 14) {
  ModelConfig m;
  m.d_appearance = 5;
  m.d_motion = 7;
  m.d_video = 12;
  m.d_text = 12;
  m.d_emotion = 12;
  m.hidden = 10;
  m.ffn_dim = 16;
  m.top_k = 1;
  m.extension = 5;
  m.subspaces = {2, 3};
  m.vocab_size = vocab;
  m.n_categories = 3;
  m.n_words = 6;
  m.embedding_init = 0.5;
  return m;
}

// Scratch directory under the system temp dir, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("evocap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
