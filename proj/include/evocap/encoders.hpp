#pragma once

#include <span>
#include <vector>

#include "evocap/corpus.hpp"
#include "evocap/model_config.hpp"
#include "evocap/nn.hpp"

namespace evocap {

// Appearance and motion are projected to d_v/2 each, concatenated per frame,
// and refined by one self-attention block.
struct VideoEncoder {
  nn::Linear appearance;
  nn::Linear motion;
  nn::SelfAttentionBlock block;
  bool positional = false;

  static VideoEncoder create(ParamStore& store, const ModelConfig& cfg, Rng& rng);
  // Returns V, N x d_v.
  Var encode(Tape& tape, Var appearance_feats, Var motion_feats) const;
};

struct CategoryPrediction {
  Var features;       // F_c, N x d_e
  Var probabilities;  // P_c, 1 x N_c
};

struct WordEncoding {
  Var emotion;        // E, N x d_e (initial evolution state)
  Var probabilities;  // P_w, 1 x N_w
};

struct EmotionEncoding {
  CategoryPrediction categories;
  Matrix mask;  // N x N_w
  WordEncoding words;
};

// Tree-structured emotion encoder: categories first, then words restricted
// to the top-K categories.
struct EmotionEncoder {
  ParamId category_table = 0;  // N_c x d_e
  ParamId word_table = 0;      // N_w x d_e
  nn::AttentionParams category_attention;
  nn::AttentionParams word_attention;
  nn::Linear category_head;
  nn::Linear word_head;

  static EmotionEncoder create(ParamStore& store, const ModelConfig& cfg, const EmotionTaxonomy& taxonomy, Rng& rng);

  CategoryPrediction predict_categories(Tape& tape, Var video) const;
  WordEncoding encode_words(Tape& tape, Var video, const Matrix& mask) const;
};

// Indices of the k largest probabilities; ties go to the lower index.
std::vector<std::size_t> top_k_categories(std::span<const double> probs, std::size_t k);

// N x N_w mask; column w is open iff w belongs to one of the top-K categories.
Matrix build_topk_mask(std::span<const double> category_probs, const EmotionTaxonomy& taxonomy, std::size_t k,
                       std::size_t rows);

// Runs both encoder stages. The top-K selection is computed from P_c values
// and held constant for differentiation; `fixed_mask` overrides it.
EmotionEncoding encode_emotion(Tape& tape, const EmotionEncoder& enc, Var video, const EmotionTaxonomy& taxonomy,
                               std::size_t k, const Matrix* fixed_mask = nullptr);

}  // namespace evocap
