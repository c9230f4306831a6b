#include <doctest.h>

#include <cmath>

#include "evocap/errors.hpp"
#include "evocap/evolution.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace evocap;
using namespace oracle;

namespace {

struct Fixture {
  ModelConfig cfg = testing::small_config();
  ParamStore store;
  EvolutionParams p;
  Matrix prev, video, prefix;

  explicit Fixture(unsigned long long seed = 4) {
    Rng rng(seed);
    p = EvolutionParams::create(store, cfg, rng);
    prev = uniform_matrix(4, cfg.d_emotion, 1.0, rng);
    video = uniform_matrix(3, cfg.d_video, 1.0, rng);
    prefix = uniform_matrix(2, cfg.d_text, 1.0, rng);
  }

  Grid extended() const {
    Grid c = linear(to_grid(video), store, p.video_projection);
    for (const auto& row : to_grid(prefix)) c.push_back(row);
    Grid logits = mul(c, to_grid(store.value(p.pool_logits)));
    Grid vals = mul(c, to_grid(store.value(p.pool_values)));
    Grid out(logits[0].size(), std::vector<double>(vals[0].size(), 0.0));
    for (std::size_t m = 0; m < out.size(); ++m) {
      double mx = -1e300, z = 0.0;
      for (const auto& l : logits) mx = std::max(mx, l[m]);
      for (const auto& l : logits) z += std::exp(l[m] - mx);
      for (std::size_t r = 0; r < c.size(); ++r)
        for (std::size_t d = 0; d < vals[r].size(); ++d) out[m][d] += std::exp(logits[r][m] - mx) / z * vals[r][d];
    }
    return out;
  }
};

std::vector<double> softmax(const std::vector<double>& x) {
  double mx = -1e300, z = 0.0;
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> out;
  for (double v : x) z += std::exp(v - mx);
  for (double v : x) out.push_back(std::exp(v - mx) / z);
  return out;
}

// Element stage: returns R_be and fills `gated`.
std::vector<double> element_oracle(const Fixture& f, const Grid& prev, const Grid& ybar, Grid& gated) {
  const std::size_t n = prev.size(), m = ybar.size(), d = prev[0].size();
  std::vector<double> scores(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t c = 0; c < d; ++c) scores[k] += prev[i][c] * ybar[k][c] / n;
  const auto a = softmax(scores);
  std::vector<double> ctx(d, 0.0);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t c = 0; c < d; ++c) ctx[c] += a[k] * ybar[k][c];
  Grid joined = prev;
  for (auto& row : joined) row.insert(row.end(), ctx.begin(), ctx.end());
  Grid g = linear(joined, f.store, f.p.element_gate);
  std::vector<double> r;
  gated = prev;
  for (std::size_t i = 0; i < n; ++i) {
    r.push_back(std::max(0.0, g[i][0]));
    for (auto& v : gated[i]) v *= r.back();
  }
  return r;
}

// Subspace stage on `gated`: returns sum_j R_aft[j] E_j.
Grid subspace_delta(const Fixture& f, const Grid& gated, const Grid& ybar) {
  const std::size_t n = gated.size(), d = gated[0].size();
  std::vector<Grid> cands;
  std::vector<double> scores;
  for (std::size_t j = 0; j < f.p.subspaces.size(); ++j) {
    const std::size_t k = f.p.subspaces[j], width = d / k;
    Grid o = attention_oracle(gated, ybar, f.store, f.p.modulators[j]);
    Grid e = gated;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) e[i][c] *= std::tanh(o[i][c / width]);
    cands.push_back(e);
    Grid s = attention_oracle(gated, ybar, f.store, f.p.scorers[j]);
    double mean = 0.0;
    for (const auto& row : s) mean += row[0] / n;
    scores.push_back(mean);
  }
  const auto w = softmax(scores);
  Grid delta(n, std::vector<double>(d, 0.0));
  for (std::size_t j = 0; j < cands.size(); ++j)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) delta[i][c] += w[j] * cands[j][i][c];
  return delta;
}

Matrix run(const Fixture& f, EvolutionOrder order, EvolutionMode mode, EvolutionTrace* trace = nullptr) {
  Tape t(&f.store, false);
  return evolve_step(t, f.p, t.constant(f.prev), t.constant(f.video), t.constant(f.prefix), order, mode, trace)
      .value();
}

}  // namespace

TEST_CASE("extended features match the pooling definition") {
  Fixture f;
  EvolutionTrace tr;
  run(f, EvolutionOrder::element_then_subspace, EvolutionMode::full, &tr);
  CHECK((tr.combined.rows() == 5 && tr.combined.cols() == f.cfg.d_text));
  CHECK((tr.extended.rows() == f.cfg.extension && tr.extended.cols() == f.cfg.d_emotion));
  CHECK(grid_diff(tr.extended, f.extended()) < 1e-9);

  Tape t(&f.store, false);
  CHECK_THROWS_AS(extend_features(t, f.p, t.constant(f.video), t.constant(Matrix(0, f.cfg.d_text))), ShapeError);
}

TEST_CASE("both evolution orders match straight-line oracles") {
  Fixture f;
  const Grid ybar = f.extended(), prev = to_grid(f.prev);
  Grid gated;
  const auto r = element_oracle(f, prev, ybar, gated);

  EvolutionTrace tr;
  Matrix es = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::full, &tr);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(tr.element_factors(i, 0) - r[i]) < 1e-9);
  Grid d_es = subspace_delta(f, gated, ybar);
  Grid want = prev;
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t c = 0; c < want[i].size(); ++c) want[i][c] += d_es[i][c];
  CHECK(grid_diff(es, want) < 1e-9);

  Matrix se = run(f, EvolutionOrder::subspace_then_element, EvolutionMode::full);
  Grid d_se = subspace_delta(f, prev, ybar);
  want = prev;
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t c = 0; c < want[i].size(); ++c) want[i][c] += r[i] * d_se[i][c];
  CHECK(grid_diff(se, want) < 1e-9);

  CHECK(grid_diff(run(f, EvolutionOrder::element_then_subspace, EvolutionMode::element_only), gated) < 1e-12);
  Matrix none = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::none);
  CHECK(bitwise_equal(none, f.prev));
  Matrix sub = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::subspace_only);
  want = prev;
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t c = 0; c < want[i].size(); ++c) want[i][c] += d_se[i][c];
  CHECK(grid_diff(sub, want) < 1e-9);
}

TEST_CASE("element gate with zero weights scales uniformly") {
  Fixture f;
  f.store.value(f.p.element_gate.weight) = Matrix::zeros_like(f.store.value(f.p.element_gate.weight));
  f.store.value(f.p.element_gate.bias)[0] = 0.7;
  EvolutionTrace tr;
  Matrix out = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::element_only, &tr);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    CHECK(tr.element_factors(i, 0) == 0.7);
    for (std::size_t c = 0; c < out.cols(); ++c) CHECK(out(i, c) == 0.7 * f.prev(i, c));
  }
  f.store.value(f.p.element_gate.bias)[0] = -50.0;
  out = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::element_only, &tr);
  for (double v : tr.element_factors.values()) CHECK(v == 0.0);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("alignment and subspace weights lie on the simplex") {
  for (unsigned long long seed = 1; seed <= 10; ++seed) {
    Fixture f(seed);
    EvolutionTrace tr;
    run(f, EvolutionOrder::element_then_subspace, EvolutionMode::full, &tr);
    for (const Matrix* m : {&tr.alignment, &tr.subspace_weights}) {
      double sum = 0.0;
      for (double v : m->values()) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    CHECK(tr.alignment.cols() == f.cfg.extension);
    CHECK(tr.subspace_weights.cols() == 2);
    for (double v : tr.element_factors.values()) CHECK(v >= 0.0);
    for (const auto& o : tr.modulations)
      for (double v : o.values()) CHECK(std::abs(v) <= 1.0);
  }

  Fixture one;
  one.cfg.subspaces = {4};
  ParamStore s;
  Rng rng(2);
  auto p = EvolutionParams::create(s, one.cfg, rng);
  Tape t(&s, false);
  EvolutionTrace tr;
  evolve_step(t, p, t.constant(one.prev), t.constant(one.video), t.constant(one.prefix),
              EvolutionOrder::element_then_subspace, EvolutionMode::full, &tr);
  CHECK((tr.subspace_weights.cols() == 1 && tr.subspace_weights[0] == 1.0));
}

TEST_CASE("subspace counts must divide the emotion width") {
  auto cfg = testing::small_config();
  cfg.subspaces = {5};
  ParamStore s;
  Rng rng(1);
  CHECK_THROWS_AS(EvolutionParams::create(s, cfg, rng), ValidationError);
}

TEST_CASE("zero modulator outputs give the residual exactly") {
  Fixture f;
  f.p.zero_subspace_outputs(f.store);
  Matrix out = run(f, EvolutionOrder::element_then_subspace, EvolutionMode::full);
  CHECK(bitwise_equal(out, f.prev));
  out = run(f, EvolutionOrder::subspace_then_element, EvolutionMode::full);
  CHECK(bitwise_equal(out, f.prev));
}

TEST_CASE("evolution is deterministic and stable on zero input") {
  Fixture f;
  for (auto order : {EvolutionOrder::element_then_subspace, EvolutionOrder::subspace_then_element}) {
    EvolutionTrace a, b;
    Matrix x = run(f, order, EvolutionMode::full, &a);
    Matrix y = run(f, order, EvolutionMode::full, &b);
    CHECK(bitwise_equal(x, y));
    CHECK(bitwise_equal(a.alignment, b.alignment));
    CHECK(bitwise_equal(a.subspace_weights, b.subspace_weights));
    CHECK(bitwise_equal(a.gated, b.gated));
  }
  f.prev = Matrix::zeros_like(f.prev);
  f.video = Matrix::zeros_like(f.video);
  f.prefix = Matrix::zeros_like(f.prefix);
  for (auto order : {EvolutionOrder::element_then_subspace, EvolutionOrder::subspace_then_element}) {
    Matrix out = run(f, order, EvolutionMode::full);
    CHECK(all_finite(out));
    for (double v : out.values()) CHECK(v == 0.0);
  }
}
