#include "evocap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "evocap/corpus.hpp"
#include "evocap/errors.hpp"

namespace evocap {

namespace {

using Ngram = std::vector<std::string>;
using Counts = std::map<Ngram, double>;

Counts count_ngrams(const Tokens& s, std::size_t n) {
  Counts c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) c[Ngram(s.begin() + i, s.begin() + i + n)] += 1.0;
  return c;
}

void check_aligned(const std::vector<Tokens>& cands, const std::vector<std::vector<Tokens>>& refs) {
  if (cands.empty()) throw ValidationError("empty evaluation corpus");
  if (cands.size() != refs.size()) throw ValidationError("candidate and reference counts differ");
  for (const auto& r : refs)
    if (r.empty()) throw ValidationError("video without reference captions");
}

std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

EmotionAccuracy emotion_accuracy(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                                 const std::set<std::string>& emotion_words) {
  check_aligned(candidates, references);
  EmotionAccuracy a;
  for (std::size_t v = 0; v < candidates.size(); ++v) {
    std::set<std::string> gold;
    for (const auto& ref : references[v])
      for (const auto& tok : ref)
        if (emotion_words.count(tok)) gold.insert(tok);
    std::size_t found = 0, ok = 0;
    for (const auto& tok : candidates[v]) {
      if (!emotion_words.count(tok)) continue;
      ++found;
      if (gold.count(tok)) ++ok;
    }
    a.emotion_tokens += found;
    a.correct_tokens += ok;
    if (found > 0 && ok == found) ++a.correct_sentences;
  }
  a.acc_sw = a.emotion_tokens ? static_cast<double>(a.correct_tokens) / static_cast<double>(a.emotion_tokens) : 0.0;
  a.acc_c = static_cast<double>(a.correct_sentences) / static_cast<double>(candidates.size());
  return a;
}

NgramScores ngram_metrics(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  check_aligned(candidates, references);
  NgramScores s;
  const std::size_t V = candidates.size();

  // BLEU: corpus-level clipped precisions, closest-reference brevity penalty.
  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    const Tokens& c = candidates[v];
    cand_len += static_cast<double>(c.size());
    std::size_t best = references[v][0].size();
    for (const auto& r : references[v]) {
      const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      Counts cc = count_ngrams(c, n);
      Counts maxref;
      for (const auto& r : references[v])
        for (const auto& [g, k] : count_ngrams(r, n)) maxref[g] = std::max(maxref[g], k);
      for (const auto& [g, k] : cc) {
        total[n - 1] += k;
        auto it = maxref.find(g);
        if (it != maxref.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  const double bp = cand_len == 0.0 ? 0.0 : (cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len));
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (matched[n - 1] == 0.0 || total[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(matched[n - 1] / total[n - 1]);
    s.bleu[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
  }

  // ROUGE-L: per video, best precision and recall over references.
  double rouge_sum = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    const Tokens& c = candidates[v];
    double p = 0.0, r = 0.0;
    for (const auto& ref : references[v]) {
      const double l = static_cast<double>(lcs(c, ref));
      if (!c.empty()) p = std::max(p, l / static_cast<double>(c.size()));
      if (!ref.empty()) r = std::max(r, l / static_cast<double>(ref.size()));
    }
    const double f = (p > 0.0 && r > 0.0) ? (1.0 + kRougeBeta2) * p * r / (r + kRougeBeta2 * p) : 0.0;
    s.rouge_per_video.push_back(f);
    rouge_sum += f;
  }
  s.rouge_l = rouge_sum / static_cast<double>(V);

  // CIDEr-D: tf-idf vectors with df over references, clipped candidate
  // counts, gaussian length penalty, x10.
  std::array<std::map<Ngram, double>, 4> df;
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t n = 1; n <= 4; ++n) {
      std::set<Ngram> seen;
      for (const auto& r : references[v])
        for (const auto& [g, k] : count_ngrams(r, n)) seen.insert(g);
      for (const auto& g : seen) df[n - 1][g] += 1.0;
    }
  const double log_docs = std::log(static_cast<double>(V));
  struct Vec {
    Counts w;
    double norm = 0.0;
  };
  auto tfidf = [&](const Tokens& sent, std::size_t n) {
    Vec out;
    for (const auto& [g, k] : count_ngrams(sent, n)) {
      auto it = df[n - 1].find(g);
      const double d = it == df[n - 1].end() ? 0.0 : it->second;
      const double w = k * (log_docs - std::log(std::max(1.0, d)));
      out.w[g] = w;
      out.norm += w * w;
    }
    out.norm = std::sqrt(out.norm);
    return out;
  };
  double cider_sum = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    const Tokens& c = candidates[v];
    double score = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const Vec cv = tfidf(c, n);
      double acc = 0.0;
      for (const auto& ref : references[v]) {
        const Vec rv = tfidf(ref, n);
        double dot = 0.0;
        for (const auto& [g, w] : cv.w) {
          auto it = rv.w.find(g);
          if (it != rv.w.end()) dot += std::min(w, it->second) * it->second;
        }
        const double delta = static_cast<double>(c.size()) - static_cast<double>(ref.size());
        double val = (cv.norm != 0.0 && rv.norm != 0.0) ? dot / (cv.norm * rv.norm) : 0.0;
        val *= std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
        acc += val;
      }
      score += acc / static_cast<double>(references[v].size());
    }
    score = score / 4.0 * 10.0;
    s.cider_per_video.push_back(score);
    cider_sum += score;
  }
  s.cider = cider_sum / static_cast<double>(V);
  return s;
}

HybridScores hybrid_scores(double bleu4, double cider, double acc_sw, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("hybrid weight must be in [0, 1]");
  return {(1.0 - w) * bleu4 + w * acc_sw, (1.0 - w) * std::min(cider, 1.0) + w * acc_sw};
}

MetricReport evaluate(const std::vector<std::string>& ids, const std::vector<Tokens>& candidates,
                      const std::vector<std::vector<Tokens>>& references, const std::set<std::string>& emotion_words,
                      double hybrid_weight) {
  if (ids.size() != candidates.size()) throw ValidationError("id and candidate counts differ");
  MetricReport r;
  r.ids = ids;
  r.candidates = candidates;
  r.hybrid_weight = hybrid_weight;
  r.emotion = emotion_accuracy(candidates, references, emotion_words);
  r.ngram = ngram_metrics(candidates, references);
  r.hybrid = hybrid_scores(r.ngram.bleu[3], r.ngram.cider, r.emotion.acc_sw, hybrid_weight);
  return r;
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["videos"] = ids.size();
  j["acc_sw"] = emotion.acc_sw;
  j["acc_c"] = emotion.acc_c;
  j["bleu1"] = ngram.bleu[0];
  j["bleu2"] = ngram.bleu[1];
  j["bleu3"] = ngram.bleu[2];
  j["bleu4"] = ngram.bleu[3];
  j["rouge_l"] = ngram.rouge_l;
  j["cider"] = ngram.cider;
  j["meteor"] = "n/a";
  j["bfs"] = hybrid.bfs;
  j["cfs"] = hybrid.cfs;
  j["hybrid_weight"] = hybrid_weight;
  j["hybrid_definition"] =
      "local: bfs = (1-w)*bleu4 + w*acc_sw, cfs = (1-w)*min(cider,1) + w*acc_sw";
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "id,caption,rouge_l,cider\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    os << ids[i] << "," << join_tokens(candidates[i]) << "," << ngram.rouge_per_video[i] << ","
       << ngram.cider_per_video[i] << "\n";
  return os.str();
}

EvalInputs load_eval_inputs(const std::filesystem::path& candidates, const std::filesystem::path& references) {
  using nlohmann::json;
  auto read_lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw LoadError("cannot open " + p.string());
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        rows.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw LoadError(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return rows;
  };
  EvalInputs out;
  std::unordered_map<std::string, Tokens> cand;
  try {
    for (const auto& row : read_lines(candidates)) {
      const std::string id = row.at("id").get<std::string>();
      if (!cand.emplace(id, tokenize(row.at("caption").get<std::string>())).second)
        throw LoadError("duplicate candidate id " + id);
    }
    for (const auto& row : read_lines(references)) {
      const std::string id = row.at("id").get<std::string>();
      auto it = cand.find(id);
      if (it == cand.end()) throw LoadError("no candidate for reference id " + id);
      std::vector<Tokens> refs;
      for (const auto& c : row.at("captions")) refs.push_back(tokenize(c.get<std::string>()));
      out.ids.push_back(id);
      out.candidates.push_back(it->second);
      out.references.push_back(std::move(refs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed evaluation input: ") + e.what());
  }
  if (out.ids.size() != cand.size()) throw LoadError("candidates without references");
  return out;
}

}  // namespace evocap
