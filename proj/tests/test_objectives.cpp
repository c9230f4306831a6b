#include <doctest.h>

#include <cmath>

#include "evocap/errors.hpp"
#include "evocap/objectives.hpp"
#include "helpers.hpp"

using namespace evocap;

namespace {

Matrix probs_fixture() {
  return Matrix(3, 4, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25, 0.7, 0.1, 0.1, 0.1});
}

}  // namespace

TEST_CASE("weighted sum of the two losses") {
  CHECK(total_loss(2.0, 5.0, LossConfig{}) == 3.0);
  LossConfig no_cls;
  no_cls.lambda_cls = 0.0;
  CHECK(total_loss(2.0, 5.0, no_cls) == 2.0);
  LossConfig bad;
  bad.beta = -0.1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("emotion-focused cross entropy") {
  const Matrix p = probs_fixture();
  const std::vector<std::size_t> targets{3, 1, 2};
  std::vector<bool> emo{false, true, false, false};
  const double plain = -(std::log(0.4) + std::log(0.25) + std::log(0.1));
  CHECK(std::abs(emotion_focused_ce(p, targets, emo, 0.1) - (plain - 0.1 * std::log(0.25))) < 1e-14);

  // beta = 0 is exactly the plain negative log likelihood.
  double nll = 0.0;
  for (std::size_t t = 0; t < 3; ++t) nll += -std::log(p(t, targets[t]));
  CHECK(emotion_focused_ce(p, targets, emo, 0.0) == nll);

  double last = -1.0;
  for (double beta : {0.0, 0.05, 0.1, 0.5, 1.0, 4.0}) {
    const double v = emotion_focused_ce(p, targets, emo, beta);
    CHECK(v >= last);
    last = v;
  }

  const std::vector<std::size_t> padded{3, Vocabulary::kPad, 2};
  CHECK(std::abs(emotion_focused_ce(p, padded, emo, 0.1) + std::log(0.4) + std::log(0.1)) < 1e-14);
  CHECK_THROWS_AS(emotion_focused_ce(p, std::vector<std::size_t>{1, 2}, emo, 0.1), ShapeError);

  Tape tape;
  Var v = emotion_focused_ce(tape.input(p), targets, emo, 0.1);
  CHECK(v.value()[0] == emotion_focused_ce(p, targets, emo, 0.1));
}

TEST_CASE("probability clamp is counted") {
  reset_clamp_warnings();
  Matrix p(1, 3, {1.0, 0.0, 0.0});
  const std::vector<std::size_t> t{1};
  const double v = emotion_focused_ce(p, t, std::vector<bool>(3, false), 0.1);
  CHECK(std::isfinite(v));
  CHECK(std::abs(v + std::log(kProbClamp)) < 1e-9);
  CHECK(clamp_warnings() == 1);
  reset_clamp_warnings();
  CHECK(clamp_warnings() == 0);
}

TEST_CASE("hierarchical classification loss") {
  Matrix pc(1, 2, {0.25, 0.75});
  Matrix pw(1, 4, {0.1, 0.2, 0.3, 0.4});
  const std::vector<std::size_t> cats{1}, words{2, 3};
  const double want = -std::log(0.75) - std::log(0.3) - std::log(0.4);
  CHECK(std::abs(hierarchical_cls_loss(pc, pw, cats, words) - want) < 1e-14);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(hierarchical_cls_loss(pc, pw, none, words), ValidationError);
  CHECK_THROWS_AS(hierarchical_cls_loss(pc, pw, cats, none), ValidationError);
  Tape tape;
  Var v = hierarchical_cls_loss(tape.input(pc), tape.input(pw), cats, words);
  CHECK(std::abs(v.value()[0] - want) < 1e-14);
}

TEST_CASE("loss closed forms and hand-summed oracles") {
  Matrix one(1, 5, 0.0);
  one(0, 4) = std::exp(-1.0);
  std::vector<bool> emo(5, false);
  emo[4] = true;
  CHECK(std::abs(emotion_focused_ce(one, std::vector<std::size_t>{4}, emo, 0.1) - 1.1) < 1e-15);

  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix p = uniform_matrix(4, 6, 1.0, rng);
    for (std::size_t r = 0; r < 4; ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < 6; ++c) z += (p(r, c) = std::abs(p(r, c)) + 0.01);
      for (std::size_t c = 0; c < 6; ++c) p(r, c) /= z;
    }
    const std::vector<std::size_t> t{4, 5, 4, 2};
    std::vector<bool> e(6, false);
    e[5] = true;
    const double want = -std::log(p(0, 4)) - 1.3 * std::log(p(1, 5)) - std::log(p(2, 4)) - std::log(p(3, 2));
    CHECK(std::abs(emotion_focused_ce(p, t, e, 0.3) - want) < 1e-9);

    Matrix pc = Matrix(1, 3, {p(0, 0), p(0, 1), p(0, 2) + p(0, 3) + p(0, 4) + p(0, 5)});
    Matrix pw(1, 6, std::vector<double>(p.row(1).begin(), p.row(1).end()));
    const std::vector<std::size_t> cats{0, 2}, words{1, 3, 5};
    const double cls = -std::log(pc[0]) - std::log(pc[2]) - std::log(pw[1]) - std::log(pw[3]) - std::log(pw[5]);
    CHECK(std::abs(hierarchical_cls_loss(pc, pw, cats, words) - cls) < 1e-9);
  }

  const std::vector<std::size_t> c0{0}, w2{2};
  CHECK(hierarchical_cls_loss(Matrix(1, 2, {1.0, 0.0}), Matrix(1, 4, {0, 0, 1.0, 0}), c0, w2) <= 2e-12);
  CHECK(std::abs(hierarchical_cls_loss(Matrix(1, 2, 0.5), Matrix(1, 4, 0.25), c0, w2) - std::log(2.0) -
                 std::log(4.0)) < 1e-15);
}

TEST_CASE("total loss gradient is the weighted sum of component gradients") {
  Rng rng(9);
  Matrix logits = uniform_matrix(3, 5, 1.0, rng);
  Matrix cl = uniform_matrix(1, 2, 1.0, rng), wl = uniform_matrix(1, 4, 1.0, rng);
  const std::vector<std::size_t> targets{4, 1, 2}, cats{1}, words{0, 3};
  std::vector<bool> emo(5, false);
  emo[1] = true;
  LossConfig cfg;
  cfg.lambda_e = 0.7;
  cfg.lambda_cls = 0.3;

  auto grads = [&](int which, Matrix& gl, Matrix& gc, Matrix& gw) {
    Tape t;
    Var l = t.input(logits), c = t.input(cl), w = t.input(wl);
    Var le = emotion_focused_ce(ad::softmax_rows(l), targets, emo, cfg.beta);
    Var lc = hierarchical_cls_loss(ad::softmax_rows(c), ad::softmax_rows(w), cats, words);
    t.backward(which == 0 ? total_loss(le, lc, cfg) : which == 1 ? le : lc);
    // Leaves the root does not reach carry no gradient buffer.
    auto get = [&](Var v) { return t.grad(v).empty() ? Matrix::zeros_like(v.value()) : t.grad(v); };
    gl = get(l);
    gc = get(c);
    gw = get(w);
  };
  Matrix tl, tc, tw, el, ec, ew, cl_, cc, cw;
  grads(0, tl, tc, tw);
  grads(1, el, ec, ew);
  grads(2, cl_, cc, cw);
  for (std::size_t i = 0; i < tl.size(); ++i) CHECK(std::abs(tl[i] - (0.7 * el[i] + 0.3 * cl_[i])) < 1e-12);
  for (std::size_t i = 0; i < tc.size(); ++i) CHECK(std::abs(tc[i] - (0.7 * ec[i] + 0.3 * cc[i])) < 1e-12);
  for (std::size_t i = 0; i < tw.size(); ++i) CHECK(std::abs(tw[i] - (0.7 * ew[i] + 0.3 * cw[i])) < 1e-12);
}
