#include <doctest.h>

#include <cmath>

#include "evocap/kernels/kernels.hpp"
#include "helpers.hpp"

using namespace evocap;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

// Naive reference products used as the oracle for every table.
void ref_gemm(char mode, std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
              const std::vector<double>& b, std::vector<double>& c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = mode == 't' ? a[p * m + i] : a[i * k + p];
        const double bv = mode == 'n' || mode == 't' ? b[p * n + j] : b[j * k + p];
        s += static_cast<long double>(av) * bv;
      }
      c[i * n + j] += static_cast<double>(s);
    }
}

}  // namespace

TEST_CASE("every kernel table matches the naive oracle") {
  Rng rng(7);
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 67};
  for (const auto* table : kernels::available()) {
    CAPTURE(table->name);
    for (std::size_t n : sizes) {
      auto a = rand_vec(n, rng), b = rand_vec(n, rng);
      long double ref = 0;
      for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
      CHECK(std::abs(table->dot(a.data(), b.data(), n) - static_cast<double>(ref)) < 1e-13);

      auto y = rand_vec(n, rng), y2 = y;
      table->axpy(0.37, a.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y[i] - (y2[i] + 0.37 * a[i])) < 1e-15);
    }
    for (std::size_t m : {1, 3, 5}) {
      for (std::size_t n : {1, 4, 9, 17}) {
        for (std::size_t k : {1, 2, 8, 13}) {
          auto a = rand_vec(m * k, rng), b = rand_vec(k * n, rng), c0 = rand_vec(m * n, rng);
          for (char mode : {'n', 'x', 't'}) {
            auto c = c0, r = c0;
            if (mode == 'n') table->gemm_nn(m, n, k, a.data(), b.data(), c.data());
            if (mode == 'x') table->gemm_nt(m, n, k, a.data(), b.data(), c.data());
            if (mode == 't') table->gemm_tn(m, n, k, a.data(), b.data(), c.data());
            ref_gemm(mode, m, n, k, a, b, r);
            for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c[i] - r[i]) < 1e-13);
          }
        }
      }
    }
  }
}

TEST_CASE("vector tables agree with the scalar table") {
  Rng rng(11);
  const auto& s = kernels::scalar_table();
  for (const auto* table : kernels::available()) {
    if (table == &s) continue;
    for (std::size_t n : {3, 16, 33, 100}) {
      auto a = rand_vec(n * n, rng), b = rand_vec(n * n, rng);
      std::vector<double> c1(n * n, 0.0), c2(n * n, 0.0);
      s.gemm_nn(n, n, n, a.data(), b.data(), c1.data());
      table->gemm_nn(n, n, n, a.data(), b.data(), c2.data());
      for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) <= 1e-12 * (1 + std::abs(c1[i])));
    }
  }
}

TEST_CASE("kernel selection") {
  const std::string before = kernels::active().name;
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("sse9"));
  CHECK(kernels::select(before));
}

TEST_CASE("model forward agrees across kernel tables") {
  auto cfg = testing::small_config();
  Model m(cfg, testing::small_taxonomy());
  Rng rng(3);
  Matrix app = uniform_matrix(4, cfg.d_appearance, 1.0, rng), mot = uniform_matrix(4, cfg.d_motion, 1.0, rng);
  const std::string before = kernels::active().name;
  std::vector<Matrix> outs;
  for (const auto* table : kernels::available()) {
    REQUIRE(kernels::select(table->name));
    Tape t(&m.params(), false);
    outs.push_back(m.teacher_forced(t, app, mot, {4, 5, 6}).step_probs.value());
  }
  kernels::select(before);
  for (std::size_t i = 1; i < outs.size(); ++i) CHECK(max_abs_diff(outs[0], outs[i]) < 1e-12);
}
