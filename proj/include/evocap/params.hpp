#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evocap/tensor.hpp"

namespace evocap {

using ParamId = std::uint32_t;

// Ordered collection of named trainable arrays. Insertion order is the
// canonical order for checkpoints and optimizer state.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;
  const Matrix& value(ParamId id) const { return values_.at(id); }
  Matrix& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  std::optional<ParamId> find(std::string_view name) const;
  ParamId require(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, ParamId> index_;
};

// Per-parameter gradient accumulators; untouched entries stay empty.
class Gradients {
 public:
  explicit Gradients(std::size_t n = 0) : grads_(n) {}
  void add(ParamId id, const Matrix& g);
  void add(const Gradients& other);
  void scale(double s);
  const Matrix* get(ParamId id) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Matrix> grads_;
};

using Rng = std::mt19937_64;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng);
Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);
// Reproducible uniform draw in [0, 1) that does not depend on the standard
// library's distribution implementation.
double uniform01(Rng& rng);

}  // namespace evocap
