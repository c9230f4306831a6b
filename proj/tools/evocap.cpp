#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "evocap/config.hpp"
#include "evocap/errors.hpp"
#include "evocap/grad_check.hpp"
#include "evocap/io.hpp"
#include "evocap/kernels/kernels.hpp"
#include "evocap/metrics.hpp"
#include "evocap/model.hpp"
#include "evocap/training.hpp"

namespace fs = std::filesystem;
using namespace evocap;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Usage problems detected after CLI parsing (bad keys, missing inputs).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<unsigned long long> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config_path, "JSON file of dotted keys")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override a config key (key=value), repeatable");
  app->add_option("--seed", c.seed, "Seed (falls back to EVOCAP_SEED)");
  auto* o = app->add_option("--out", c.out, "Output directory");
  if (needs_out) o->required();
}

// Applies defaults, config file, seed and overrides; `seed_keys` are the keys
// the subcommand's seed feeds.
RunConfig resolve(const Common& c, const std::vector<std::string>& seed_keys) {
  RunConfig rc = desk_config();
  json file = json::object();
  if (!c.config_path.empty()) {
    try {
      file = json::parse(io::read_text(c.config_path));
    } catch (const json::exception& e) {
      throw UsageError("cannot parse " + c.config_path + ": " + e.what());
    }
  }
  try {
    apply_flat_json(rc, file);
    std::optional<unsigned long long> seed = c.seed;
    if (!seed) {
      bool file_has_seed = false;
      for (const auto& k : seed_keys) file_has_seed = file_has_seed || file.contains(k);
      const char* env = std::getenv("EVOCAP_SEED");
      if (env && *env && !file_has_seed) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0') throw UsageError(std::string("EVOCAP_SEED is not an integer: ") + env);
        seed = v;
      }
    }
    if (seed)
      for (const auto& k : seed_keys) apply_override(rc, k + "=" + std::to_string(*seed));
    for (const auto& o : c.overrides) apply_override(rc, o);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return rc;
}

void write_effective(const fs::path& dir, const RunConfig& rc) {
  io::write_text(dir / "effective_config.json", to_flat_json(rc).dump(2) + "\n");
}

void write_jsonl(const fs::path& path, const std::vector<ordered_json>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) os << r.dump() << "\n";
  io::write_text(path, os.str());
}

void fill_from_corpus(ModelConfig& m, const Corpus& c) {
  m.vocab_size = c.vocab.size();
  m.n_categories = c.taxonomy.num_categories();
  m.n_words = c.taxonomy.num_words();
  if (!c.manifest.samples.empty()) {
    m.d_appearance = c.manifest.samples[0].appearance.cols();
    m.d_motion = c.manifest.samples[0].motion.cols();
  }
}

std::vector<double> column(const Matrix& m, std::size_t c = 0) {
  std::vector<double> v;
  for (std::size_t r = 0; r < m.rows(); ++r) v.push_back(m(r, c));
  return v;
}

std::vector<double> flat(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

ordered_json trace_json(const Generation& g, const Vocabulary& vocab) {
  ordered_json steps = ordered_json::array();
  for (const StepTrace& s : g.steps) {
    ordered_json j;
    j["t"] = s.t;
    j["token"] = vocab.token(s.token);
    j["prob"] = s.token_prob;
    j["gate"] = column(s.gate);
    j["element_factors"] = column(s.evolution.element_factors);
    j["subspace_weights"] = flat(s.evolution.subspace_weights);
    j["alignment"] = flat(s.evolution.alignment);
    steps.push_back(j);
  }
  return steps;
}

struct Generated {
  std::vector<std::string> ids;
  std::vector<Tokens> captions;
  std::vector<Generation> runs;
};

Generated generate_all(const Model& model, const Corpus& corpus, const RunConfig& rc) {
  Generated out;
  GenerateOptions opt;
  opt.beam_size = rc.beam_size;
  opt.max_len = rc.max_len;
  for (const VideoSample& s : corpus.manifest.samples) {
    Generation g = model.generate(s.appearance, s.motion, opt);
    out.ids.push_back(s.id);
    out.captions.push_back(decode_caption(g.tokens, corpus.vocab));
    out.runs.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<Tokens>> corpus_references(const Corpus& corpus) {
  std::vector<std::vector<Tokens>> refs;
  for (const VideoSample& s : corpus.manifest.samples) {
    std::vector<Tokens> r;
    for (const auto& c : s.captions) r.push_back(decode_caption(c, corpus.vocab));
    refs.push_back(std::move(r));
  }
  return refs;
}

std::set<std::string> emotion_word_set(const EmotionTaxonomy& t) { return {t.words.begin(), t.words.end()}; }

Corpus load_data(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  return load_corpus(dir);
}

// Minimal line chart: one polyline per series over steps 1..T.
std::string svg_lines(const std::string& title, const std::vector<std::string>& names,
                      const std::vector<std::vector<double>>& series, double lo, double hi) {
  const double W = 640, H = 360, L = 50, R = 130, T = 30, B = 40;
  std::size_t len = 0;
  for (const auto& s : series) len = std::max(len, s.size());
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (hi <= lo) hi = lo + 1.0;
  auto x = [&](std::size_t i) { return L + (len > 1 ? (W - L - R) * static_cast<double>(i) / (len - 1) : 0.0); };
  auto y = [&](double v) { return T + (H - T - B) * (1.0 - (v - lo) / (hi - lo)); };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << L << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<text x=\"5\" y=\"" << y(hi) + 4 << "\" font-size=\"10\">" << hi << "</text>\n"
     << "<text x=\"5\" y=\"" << y(lo) + 4 << "\" font-size=\"10\">" << lo << "</text>\n"
     << "<text x=\"" << (W - R + L) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"11\">step</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* col = colors[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].size(); ++i) os << x(i) << "," << y(series[k][i]) << " ";
    os << "\"/>\n<text x=\"" << W - R + 10 << "\" y=\"" << T + 14 * (k + 1) << "\" font-size=\"11\" fill=\"" << col
       << "\">" << names[k] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int cmd_synth(const Common& c) {
  RunConfig rc = resolve(c, {"synth.seed"});
  Corpus corpus = synth_corpus(rc.synth);
  write_corpus(c.out, corpus);
  write_effective(c.out, rc);
  std::printf("wrote %zu videos to %s\n", corpus.manifest.size(), c.out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& resume, bool quiet) {
  RunConfig rc = resolve(c, {"train.seed", "model.init_seed"});
  Corpus corpus = load_data(data);
  fill_from_corpus(rc.model, corpus);
  std::unique_ptr<Model> model;
  std::size_t start = 0;
  std::optional<Adam> adam;
  std::vector<LossRecord> prior;
  if (!resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume);
    model = std::move(ck.model);
    rc.model = model->config();
    start = ck.step;
    if (ck.has_optimizer) adam = ck.adam;
  } else {
    model = std::make_unique<Model>(rc.model, corpus.taxonomy);
  }
  Trainer trainer(*model, corpus.manifest, corpus.vocab, rc.train);
  if (start) trainer.set_step_count(start);
  if (adam) trainer.optimizer() = *adam;
  trainer.run([&](const LossRecord& r) {
    if (!quiet && (r.step % 50 == 0 || r.step == 1))
      std::printf("step %zu  loss %.6f  L_e %.6f  L_cls %.6f\n", r.step, r.total, r.emotion_ce, r.cls);
  });
  save_checkpoint(c.out, *model, corpus.vocab, rc.train, trainer.curve(), &trainer.optimizer(), trainer.step_count());
  write_effective(c.out, rc);
  const double le = mean_emotion_ce(*model, corpus.manifest, corpus.vocab, rc.train.loss.beta);
  std::printf("trained %zu steps; teacher-forced L_e %.6f\n", trainer.step_count(), le);
  return 0;
}

int cmd_generate(const Common& c, const std::string& checkpoint, const std::string& data) {
  RunConfig rc = resolve(c, {});
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  Corpus corpus = load_data(data);
  Generated gen = generate_all(*ck.model, corpus, rc);
  std::vector<ordered_json> caps, traces;
  for (std::size_t i = 0; i < gen.ids.size(); ++i) {
    caps.push_back({{"id", gen.ids[i]}, {"caption", join_tokens(gen.captions[i])}});
    traces.push_back({{"id", gen.ids[i]}, {"log_prob", gen.runs[i].log_prob}, {"steps", trace_json(gen.runs[i], ck.vocab)}});
  }
  write_jsonl(fs::path(c.out) / "captions.jsonl", caps);
  write_jsonl(fs::path(c.out) / "traces.jsonl", traces);
  write_effective(c.out, rc);
  std::printf("generated %zu captions\n", caps.size());
  return 0;
}

int cmd_eval(const Common& c, const std::string& candidates, const std::string& references,
             const std::string& taxonomy, const std::string& checkpoint, const std::string& data) {
  RunConfig rc = resolve(c, {});
  MetricReport report;
  if (!checkpoint.empty()) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    Corpus corpus = load_data(data);
    Generated gen = generate_all(*ck.model, corpus, rc);
    report = evaluate(gen.ids, gen.captions, corpus_references(corpus), emotion_word_set(ck.model->taxonomy()),
                      rc.hybrid_weight);
  } else {
    if (candidates.empty() || references.empty())
      throw UsageError("eval needs --candidates and --references, or --checkpoint and --data");
    EvalInputs in = load_eval_inputs(candidates, references);
    std::set<std::string> words;
    if (!taxonomy.empty()) words = emotion_word_set(load_taxonomy(taxonomy));
    else if (!data.empty()) words = emotion_word_set(load_taxonomy(fs::path(data) / "taxonomy.json"));
    report = evaluate(in.ids, in.candidates, in.references, words, rc.hybrid_weight);
  }
  const auto j = report.to_json();
  io::write_text(fs::path(c.out) / "report.json", j.dump(2) + "\n");
  io::write_text(fs::path(c.out) / "report.csv", report.to_csv());
  write_effective(c.out, rc);
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

int cmd_grad_check(const Common& c, const std::string& module) {
  RunConfig rc = resolve(c, {"grad_check.seed"});
  std::vector<std::string> modules;
  if (module == "all") {
    for (const auto& m : grad_check_modules())
      if (m != "evolve_step_es" && m != "evolve_step_se") modules.push_back(m);
    modules.push_back("evolve_step");
  } else {
    modules.push_back(module);
  }
  bool ok = true;
  ordered_json all = ordered_json::array();
  for (const auto& m : modules) {
    GradCheckReport r = grad_check(m, rc.grad_check);
    std::printf("%s", format_report(r).c_str());
    ok = ok && r.passed();
    ordered_json j;
    j["module"] = r.module;
    j["max_rel"] = r.max_rel;
    j["mean_rel"] = r.mean_rel;
    j["passed"] = r.passed();
    ordered_json groups = ordered_json::array();
    for (const auto& g : r.groups)
      groups.push_back({{"group", g.group}, {"elements", g.elements}, {"max_rel", g.max_rel}, {"mean_rel", g.mean_rel}});
    j["groups"] = groups;
    j["failing"] = r.failing_groups();
    all.push_back(j);
  }
  if (!c.out.empty()) {
    io::write_text(fs::path(c.out) / "grad_check.json", all.dump(2) + "\n");
    write_effective(c.out, rc);
  }
  if (!ok) std::fprintf(stderr, "gradient check failed\n");
  return ok ? 0 : 1;
}

int cmd_inspect(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& video) {
  RunConfig rc = resolve(c, {});
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  Corpus corpus = load_data(data);
  const VideoSample* sample = nullptr;
  for (const auto& s : corpus.manifest.samples)
    if (video.empty() || s.id == video) {
      sample = &s;
      break;
    }
  if (!sample) throw UsageError("no video with id " + video);
  GenerateOptions opt;
  opt.beam_size = rc.beam_size;
  opt.max_len = rc.max_len;
  Generation g = ck.model->generate(sample->appearance, sample->motion, opt);
  const fs::path out(c.out);

  std::ostringstream gates, weights;
  gates.precision(17);
  weights.precision(17);
  const std::size_t N = sample->frames();
  gates << "t,token";
  for (std::size_t i = 0; i < N; ++i) gates << ",g" << i;
  gates << "\n";
  const auto& subspaces = ck.model->config().subspaces;
  weights << "t,token";
  for (std::size_t k : subspaces) weights << ",k" << k;
  weights << "\n";
  std::vector<std::vector<double>> gate_series(N), weight_series(subspaces.size());
  for (const StepTrace& s : g.steps) {
    const std::string tok = ck.vocab.token(s.token);
    gates << s.t << "," << tok;
    for (std::size_t i = 0; i < N; ++i) {
      gates << "," << s.gate(i, 0);
      gate_series[i].push_back(s.gate(i, 0));
    }
    gates << "\n";
    weights << s.t << "," << tok;
    for (std::size_t j = 0; j < s.evolution.subspace_weights.size(); ++j) {
      weights << "," << s.evolution.subspace_weights[j];
      weight_series[j].push_back(s.evolution.subspace_weights[j]);
    }
    weights << "\n";
  }
  io::write_text(out / "gates.csv", gates.str());
  io::write_text(out / "subspace_weights.csv", weights.str());
  std::vector<std::string> gate_names, weight_names;
  for (std::size_t i = 0; i < N; ++i) gate_names.push_back("frame " + std::to_string(i));
  for (std::size_t k : subspaces) weight_names.push_back("k=" + std::to_string(k));
  io::write_text(out / "gates.svg", svg_lines("emotion gate g_t (" + sample->id + ")", gate_names, gate_series, 0, 1));
  io::write_text(out / "subspace_weights.svg",
                 svg_lines("subspace weights R_aft (" + sample->id + ")", weight_names, weight_series, 0, 1));
  write_effective(out, rc);
  std::printf("%s: %s\n", sample->id.c_str(), join_tokens(decode_caption(g.tokens, ck.vocab)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evocap: emotion-evolving video captioning"};
  app.require_subcommand(1);
  std::string kernel = "auto";
  app.add_option("--kernels", kernel, "Kernel table: auto, scalar, avx2, neon");

  Common c;
  std::string data, resume, checkpoint, candidates, references, taxonomy, module = "all", video;
  bool quiet = false;

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic corpus");
  add_common(synth, c);

  auto* train = app.add_subcommand("train", "Train and write a checkpoint");
  add_common(train, c);
  train->add_option("--data", data, "Corpus directory")->required();
  train->add_option("--resume", resume, "Continue from a checkpoint directory");
  train->add_flag("--quiet", quiet, "Suppress progress lines");

  auto* eval = app.add_subcommand("eval", "Score captions");
  add_common(eval, c);
  eval->add_option("--candidates", candidates, "Candidate captions (JSON lines)");
  eval->add_option("--references", references, "Reference captions (JSON lines)");
  eval->add_option("--taxonomy", taxonomy, "Taxonomy JSON naming the emotion words");
  eval->add_option("--checkpoint", checkpoint, "Generate with this checkpoint first");
  eval->add_option("--data", data, "Corpus directory");

  auto* gen = app.add_subcommand("generate", "Generate captions with per-step traces");
  add_common(gen, c);
  gen->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  gen->add_option("--data", data, "Corpus directory")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  add_common(gc, c, false);
  gc->add_option("--module", module, "Module selector or 'all'");

  auto* inspect = app.add_subcommand("inspect", "Plot emotion gate and subspace weight traces");
  add_common(inspect, c);
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  inspect->add_option("--data", data, "Corpus directory")->required();
  inspect->add_option("--video", video, "Video id (default: first)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (kernel != "auto" && !kernels::select(kernel)) throw UsageError("kernel table not available: " + kernel);
    if (*synth) return cmd_synth(c);
    if (*train) return cmd_train(c, data, resume, quiet);
    if (*eval) return cmd_eval(c, candidates, references, taxonomy, checkpoint, data);
    if (*gen) return cmd_generate(c, checkpoint, data);
    if (*gc) {
      if (module != "all" && module != "evolve_step") {
        const auto& m = grad_check_modules();
        if (std::find(m.begin(), m.end(), module) == m.end()) throw UsageError("unknown module: " + module);
      }
      return cmd_grad_check(c, module);
    }
    if (*inspect) return cmd_inspect(c, checkpoint, data, video);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n%s", e.what(), app.help().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
