#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "evocap/metrics.hpp"

// Brute-force caption metrics: direct scans instead of hashed counts and a
// plain recursive LCS, for fixtures of short sentences.
namespace metric_oracle {

using evocap::Tokens;

struct Fixture {
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
};

inline Tokens gram(const Tokens& s, std::size_t i, std::size_t n) { return Tokens(s.begin() + i, s.begin() + i + n); }

inline double occurrences(const Tokens& s, const Tokens& g) {
  double k = 0.0;
  for (std::size_t i = 0; i + g.size() <= s.size(); ++i)
    if (gram(s, i, g.size()) == g) k += 1.0;
  return k;
}

inline std::vector<Tokens> distinct_grams(const Tokens& s, std::size_t n) {
  std::vector<Tokens> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    Tokens g = gram(s, i, n);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

inline std::array<double, 4> bleu(const Fixture& f) {
  std::array<double, 4> hit{}, tot{};
  double c_len = 0.0, r_len = 0.0;
  for (std::size_t v = 0; v < f.candidates.size(); ++v) {
    const Tokens& c = f.candidates[v];
    c_len += c.size();
    std::vector<std::size_t> lens;
    for (const auto& r : f.references[v]) lens.push_back(r.size());
    std::sort(lens.begin(), lens.end());
    std::size_t best = lens[0];
    for (std::size_t l : lens) {
      const double d = std::abs(double(l) - double(c.size())), bd = std::abs(double(best) - double(c.size()));
      if (d < bd) best = l;
    }
    r_len += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      if (c.size() >= n) tot[n - 1] += c.size() - n + 1;
      for (const auto& g : distinct_grams(c, n)) {
        double cap = 0.0;
        for (const auto& r : f.references[v]) cap = std::max(cap, occurrences(r, g));
        hit[n - 1] += std::min(occurrences(c, g), cap);
      }
    }
  }
  std::array<double, 4> out{};
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  for (std::size_t n = 1; n <= 4; ++n) {
    double logp = 0.0;
    bool zero = false;
    for (std::size_t m = 0; m < n; ++m) {
      if (hit[m] == 0.0) zero = true;
      else logp += std::log(hit[m] / tot[m]);
    }
    out[n - 1] = zero ? 0.0 : bp * std::exp(logp / n);
  }
  return out;
}

inline std::size_t lcs(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + lcs(a, i + 1, b, j + 1);
  return std::max(lcs(a, i + 1, b, j), lcs(a, i, b, j + 1));
}

inline double rouge_l(const Fixture& f) {
  double sum = 0.0;
  for (std::size_t v = 0; v < f.candidates.size(); ++v) {
    double p = 0.0, r = 0.0;
    for (const auto& ref : f.references[v]) {
      const double l = lcs(f.candidates[v], 0, ref, 0);
      p = std::max(p, l / f.candidates[v].size());
      r = std::max(r, l / ref.size());
    }
    const double b2 = 1.2;
    if (p > 0.0 && r > 0.0) sum += (1.0 + b2) * p * r / (r + b2 * p);
  }
  return sum / f.candidates.size();
}

inline double cider_d(const Fixture& f) {
  const double docs = f.candidates.size();
  auto df = [&](const Tokens& g) {
    double d = 0.0;
    for (const auto& refs : f.references) {
      bool seen = false;
      for (const auto& r : refs) seen = seen || occurrences(r, g) > 0.0;
      d += seen ? 1.0 : 0.0;
    }
    return d;
  };
  auto weight = [&](const Tokens& s, const Tokens& g) {
    return occurrences(s, g) * (std::log(docs) - std::log(std::max(1.0, df(g))));
  };
  auto norm = [&](const Tokens& s, std::size_t n) {
    double z = 0.0;
    for (const auto& g : distinct_grams(s, n)) z += weight(s, g) * weight(s, g);
    return std::sqrt(z);
  };
  double total = 0.0;
  for (std::size_t v = 0; v < f.candidates.size(); ++v) {
    const Tokens& c = f.candidates[v];
    double score = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      double acc = 0.0;
      for (const auto& r : f.references[v]) {
        double dot = 0.0;
        for (const auto& g : distinct_grams(c, n)) dot += std::min(weight(c, g), weight(r, g)) * weight(r, g);
        const double nc = norm(c, n), nr = norm(r, n);
        const double delta = double(c.size()) - double(r.size());
        if (nc > 0.0 && nr > 0.0) acc += dot / (nc * nr) * std::exp(-delta * delta / 72.0);
      }
      score += acc / f.references[v].size();
    }
    total += score / 4.0 * 10.0;
  }
  return total / docs;
}

inline Fixture random_fixture(std::mt19937_64& rng) {
  static const std::vector<std::string> words{"a", "man", "is", "happy", "sad", "dog", "runs"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 8), nref(1, 3), nvid(3, 6);
  auto sentence = [&] {
    Tokens s(len(rng));
    for (auto& w : s) w = words[pick(rng)];
    return s;
  };
  Fixture f;
  const std::size_t videos = nvid(rng);
  for (std::size_t v = 0; v < videos; ++v) {
    std::vector<Tokens> refs(nref(rng));
    for (auto& r : refs) r = sentence();
    // Half the candidates start as a copy of a reference and are then perturbed.
    Tokens c = (rng() % 2) ? refs[0] : sentence();
    if (!c.empty() && rng() % 2) c[rng() % c.size()] = words[pick(rng)];
    f.candidates.push_back(c);
    f.references.push_back(refs);
  }
  return f;
}

}  // namespace metric_oracle
