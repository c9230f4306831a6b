#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace evocap {

enum class EvolutionOrder { element_then_subspace, subspace_then_element };

// Which evolution stages run each step (ablation axis).
enum class EvolutionMode { full, element_only, subspace_only, none };

std::string to_string(EvolutionOrder o);
std::string to_string(EvolutionMode m);
EvolutionOrder parse_evolution_order(std::string_view s);
EvolutionMode parse_evolution_mode(std::string_view s);

struct ModelConfig {
  // Input feature widths (backbone dependent).
  std::size_t d_appearance = 2048;
  std::size_t d_motion = 2048;
  // Model widths.
  std::size_t d_video = 300;
  std::size_t d_text = 300;
  std::size_t d_emotion = 300;
  std::size_t hidden = 512;
  std::size_t ffn_dim = 600;
  std::size_t attention_dim = 0;  // 0: use d_emotion
  std::size_t heads = 1;
  bool positional_encoding = false;

  std::size_t top_k = 5;
  std::size_t extension = 100;  // M, rows of the extended feature
  std::vector<std::size_t> subspaces{2, 3, 5, 6, 10};
  EvolutionOrder order = EvolutionOrder::element_then_subspace;
  EvolutionMode mode = EvolutionMode::full;

  bool prev_word_input = true;
  std::size_t max_len = 15;

  // Filled from the corpus.
  std::size_t vocab_size = 0;
  std::size_t n_categories = 0;
  std::size_t n_words = 0;

  unsigned long long init_seed = 1;
  double embedding_init = 0.1;  // uniform(-x, x) for dictionary tables

  std::size_t attn_dim() const { return attention_dim ? attention_dim : d_emotion; }
  // Throws ValidationError on inconsistent widths or counts.
  void validate() const;
};

}  // namespace evocap
