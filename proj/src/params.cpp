#include "evocap/params.hpp"

#include <cmath>
#include <numbers>

#include "evocap/errors.hpp"

namespace evocap {

ParamId ParamStore::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw ValidationError("duplicate parameter name: " + name);
  const auto id = static_cast<ParamId>(values_.size());
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return id;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamId ParamStore::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw ValidationError("unknown parameter: " + std::string(name));
}

void Gradients::add(ParamId id, const Matrix& g) {
  Matrix& slot = grads_.at(id);
  if (slot.empty()) {
    slot = g;
  } else {
    slot += g;
  }
}

void Gradients::add(const Gradients& other) {
  if (other.size() != size()) throw ShapeError("gradient buffers of different size");
  for (std::size_t i = 0; i < size(); ++i)
    if (!other.grads_[i].empty()) add(static_cast<ParamId>(i), other.grads_[i]);
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

const Matrix* Gradients::get(ParamId id) const {
  const Matrix& g = grads_.at(id);
  return g.empty() ? nullptr : &g;
}

double uniform01(Rng& rng) {
  // 53 random mantissa bits.
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return m;
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  // Box-Muller keeps draws identical across standard library implementations.
  Matrix m(rows, cols);
  for (double& v : m.values()) {
    double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    v = stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  return m;
}

}  // namespace evocap
