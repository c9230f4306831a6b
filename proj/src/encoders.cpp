#include "evocap/encoders.hpp"

#include <algorithm>
#include <numeric>

#include "evocap/errors.hpp"

namespace evocap {

VideoEncoder VideoEncoder::create(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  if (cfg.d_video % 2 != 0) throw ValidationError("d_video must be even, got " + std::to_string(cfg.d_video));
  VideoEncoder e;
  e.appearance = nn::Linear::create(store, "video.appearance", cfg.d_appearance, cfg.d_video / 2, rng);
  e.motion = nn::Linear::create(store, "video.motion", cfg.d_motion, cfg.d_video / 2, rng);
  e.block = nn::SelfAttentionBlock::create(store, "video.block", cfg.d_video, cfg.ffn_dim, cfg.heads, rng);
  e.positional = cfg.positional_encoding;
  return e;
}

Var VideoEncoder::encode(Tape& tape, Var appearance_feats, Var motion_feats) const {
  if (appearance_feats.rows() != motion_feats.rows())
    throw ShapeError("appearance and motion streams have " + std::to_string(appearance_feats.rows()) + " and " +
                     std::to_string(motion_feats.rows()) + " frames");
  const Var parts[] = {appearance(tape, appearance_feats), motion(tape, motion_feats)};
  Var fused = ad::concat_cols(parts);
  if (positional) fused = ad::add(fused, tape.constant(nn::sinusoidal_positions(fused.rows(), fused.cols())));
  return block(tape, fused);
}

EmotionEncoder EmotionEncoder::create(ParamStore& store, const ModelConfig& cfg, const EmotionTaxonomy& taxonomy,
                                      Rng& rng) {
  EmotionEncoder e;
  const std::size_t de = cfg.d_emotion;
  auto table = [&](const Matrix& given, std::size_t rows, const char* what) {
    if (!given.empty() && given.cols() == de && given.rows() == rows) return given;
    if (!given.empty())
      throw ValidationError(std::string(what) + " embedding table is " + given.shape_string() + ", expected " +
                            std::to_string(rows) + "x" + std::to_string(de));
    return uniform_matrix(rows, de, cfg.embedding_init, rng);
  };
  e.category_table = store.add("emotion.category_table", table(taxonomy.category_embeddings, cfg.n_categories, "category"));
  e.word_table = store.add("emotion.word_table", table(taxonomy.word_embeddings, cfg.n_words, "word"));
  e.category_attention =
      nn::AttentionParams::create(store, "emotion.category_attn", cfg.d_video, de, cfg.attn_dim(), de, cfg.heads, rng);
  e.word_attention =
      nn::AttentionParams::create(store, "emotion.word_attn", cfg.d_video, de, cfg.attn_dim(), de, cfg.heads, rng);
  e.category_head = nn::Linear::create(store, "emotion.category_head", de, cfg.n_categories, rng);
  e.word_head = nn::Linear::create(store, "emotion.word_head", de, cfg.n_words, rng);
  return e;
}

CategoryPrediction EmotionEncoder::predict_categories(Tape& tape, Var video) const {
  CategoryPrediction out;
  out.features = nn::cross_attention(tape, video, tape.param(category_table), category_attention);
  out.probabilities = ad::softmax_rows(category_head(tape, ad::mean_rows(out.features)));
  return out;
}

WordEncoding EmotionEncoder::encode_words(Tape& tape, Var video, const Matrix& mask) const {
  WordEncoding out;
  out.emotion = nn::cross_attention(tape, video, tape.param(word_table), word_attention, &mask);
  out.probabilities = ad::softmax_rows(word_head(tape, ad::mean_rows(out.emotion)));
  return out;
}

std::vector<std::size_t> top_k_categories(std::span<const double> probs, std::size_t k) {
  if (k == 0 || k > probs.size())
    throw ValidationError("top-K needs 1 <= K <= " + std::to_string(probs.size()) + ", got " + std::to_string(k));
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix build_topk_mask(std::span<const double> category_probs, const EmotionTaxonomy& taxonomy, std::size_t k,
                       std::size_t rows) {
  if (category_probs.size() != taxonomy.num_categories())
    throw ShapeError("category distribution has " + std::to_string(category_probs.size()) + " entries for " +
                     std::to_string(taxonomy.num_categories()) + " categories");
  std::vector<double> open(taxonomy.num_words(), 0.0);
  for (std::size_t c : top_k_categories(category_probs, k))
    for (std::size_t w : taxonomy.membership[c]) open[w] = 1.0;
  Matrix mask(rows, taxonomy.num_words());
  for (std::size_t r = 0; r < rows; ++r) std::copy(open.begin(), open.end(), mask.row(r).begin());
  return mask;
}

EmotionEncoding encode_emotion(Tape& tape, const EmotionEncoder& enc, Var video, const EmotionTaxonomy& taxonomy,
                               std::size_t k, const Matrix* fixed_mask) {
  EmotionEncoding out;
  out.categories = enc.predict_categories(tape, video);
  out.mask = fixed_mask ? *fixed_mask
                        : build_topk_mask(out.categories.probabilities.value().values(), taxonomy, k, video.rows());
  out.words = enc.encode_words(tape, video, out.mask);
  return out;
}

}  // namespace evocap
