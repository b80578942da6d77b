#pragma once

// Pipeline stages behind the command-line tool. Each stage reads the
// artifacts of earlier stages from the output directory, verifies them against
// the manifest, and records its own outputs.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "cnn.hpp"
#include "common.hpp"
#include "config.hpp"
#include "context.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "splex.hpp"
#include "synthetic.hpp"

namespace clex {

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"cnn", "cnn+context", "linear", "linear+context"};
  return names;
}

struct ModelSpec {
  std::string name;
  bool cnn = true;
  bool context = false;
};

inline ModelSpec parse_model(const std::string& name) {
  if (name == "cnn") return {name, true, false};
  if (name == "cnn+context") return {name, true, true};
  if (name == "linear") return {name, false, false};
  if (name == "linear+context") return {name, false, true};
  throw ValidationError("unknown model '" + name + "' (expected cnn, cnn+context, linear or linear+context)");
}

/// Artifact locations under the output directory.
struct Layout {
  fs::path out;
  fs::path pre(const std::string& f) const { return out / "preprocess" / f; }
  fs::path res(const std::string& f) const { return out / "resources" / f; }
  fs::path model_dir(const std::string& m) const { return out / "models" / m; }
  fs::path report(const std::string& f) const { return out / "reports" / f; }
  static std::string run_stem(std::size_t r, std::size_t f, std::size_t s) {
    return "rep" + std::to_string(r) + "_fold" + std::to_string(f) + "_run" + std::to_string(s);
  }
};

// ---------------------------------------------------------------------------
// Annotated corpus files: the input JSON fields plus resolved mentions and
// tokens.

inline void write_annotated(const fs::path& path, const std::vector<Tweet>& tweets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (const auto& t : tweets) {
    auto j = to_json(t);
    j["mentions"] = t.mentions;
    j["tokens"] = t.tokens;
    out << j.dump() << '\n';
  }
}

inline std::vector<Tweet> read_annotated(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read " + path.string());
  std::vector<Tweet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t = parse_tweet_line(line);
    if (!t) throw ValidationError("corrupt annotated corpus line in " + path.string());
    auto j = nlohmann::json::parse(line);
    t->mentions = j.at("mentions").get<std::vector<std::string>>();
    t->tokens = j.at("tokens").get<std::vector<std::string>>();
    out.push_back(std::move(*t));
  }
  return out;
}

inline void write_encoded(const fs::path& path, const std::vector<Tweet>& tweets, const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (const auto& t : tweets) {
    out << t.id;
    for (auto v : encode_tweet(t.tokens, vocab).indices) out << '\t' << v;
    out << '\n';
  }
}

inline std::map<std::string, fs::path> external_inputs(const PipelineConfig& cfg) {
  std::map<std::string, fs::path> m{{"input:labeled", cfg.labeled_path()}, {"input:unlabeled", cfg.unlabeled_path()}};
  if (!cfg.seeds.empty()) m["input:seeds"] = cfg.seeds;
  return m;
}

inline std::pair<SeedSet, SeedSet> effective_seeds(const PipelineConfig& cfg) {
  if (cfg.seeds.empty()) return {default_aggression_seeds(), default_loss_seeds()};
  return load_seed_file(cfg.seeds);
}

// ---------------------------------------------------------------------------
// gen-synthetic

inline SyntheticCorpus cmd_gen_synthetic(const PipelineConfig& cfg) {
  cfg.validate();
  auto [aggr, loss] = effective_seeds(cfg);
  auto corpus = generate_synthetic(cfg.synthetic, aggr, loss);
  for (const auto& p : {cfg.labeled_path(), cfg.unlabeled_path()})
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_jsonl(cfg.labeled_path(), corpus.labeled);
  write_jsonl(cfg.unlabeled_path(), corpus.unlabeled);
  log::info("wrote " + std::to_string(corpus.labeled.size()) + " labeled and " +
            std::to_string(corpus.unlabeled.size()) + " unlabeled tweets");
  return corpus;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessSummary {
  std::size_t labeled = 0, unlabeled = 0, vocab = 0, users = 0, invalid_bytes = 0;
};

inline PreprocessSummary cmd_preprocess(const PipelineConfig& cfg) {
  cfg.validate();
  cfg.validate_inputs();
  const Layout L{cfg.out};
  IngestStats ls, us;
  auto labeled = ingest(cfg.labeled_path(), &ls);
  auto unlabeled = ingest(cfg.unlabeled_path(), &us);
  if (labeled.empty()) throw ValidationError("paths.labeled: labeled corpus is empty");
  for (const auto& t : labeled)
    if (!t.label) throw ValidationError("paths.labeled: tweet " + t.id + " has no label");
  {
    std::set<std::string> ids;
    for (const auto& t : labeled) ids.insert(t.id);
    const auto before = unlabeled.size();
    std::erase_if(unlabeled, [&](const Tweet& t) { return ids.contains(t.id); });
    if (unlabeled.size() != before)
      log::warn(std::to_string(before - unlabeled.size()) + " unlabeled tweet(s) duplicate labeled ids; dropped");
  }
  auto registry = build_user_registry(labeled, unlabeled);
  NormalizeStats ns;
  annotate(labeled, registry, &ns);
  annotate(unlabeled, registry, &ns);
  std::vector<std::vector<std::string>> stream;
  stream.reserve(labeled.size() + unlabeled.size());
  for (const auto& t : labeled) stream.push_back(t.tokens);
  for (const auto& t : unlabeled) stream.push_back(t.tokens);
  auto vocab = build_vocab(stream, cfg.max_tokens);

  fs::create_directories(cfg.out / "preprocess");
  vocab.save(L.pre("vocab.txt"));
  write_annotated(L.pre("labeled.jsonl"), labeled);
  write_annotated(L.pre("unlabeled.jsonl"), unlabeled);
  write_encoded(L.pre("labeled.enc.tsv"), labeled, vocab);
  write_encoded(L.pre("unlabeled.enc.tsv"), unlabeled, vocab);
  {
    std::ofstream out(L.pre("users.tsv"), std::ios::binary);
    for (const auto& [name, c] : registry.counts()) out << name << '\t' << c << '\n';
  }
  {
    std::vector<Tweet> all = labeled;
    all.insert(all.end(), unlabeled.begin(), unlabeled.end());
    ContextCorpus cc(std::move(all), vocab);
    Timeline tl(cc);
    std::ofstream out(L.pre("timelines.tsv"), std::ios::binary);
    for (const auto& [user, entries] : tl.users()) {
      if (!registry.contains(user)) continue;
      for (const auto& e : entries) out << user << '\t' << e.timestamp << '\t' << cc.tweets[e.tweet].id << '\t' << e.kinds << '\n';
    }
  }
  PreprocessSummary s{labeled.size(), unlabeled.size(), vocab.size(), registry.size(), ns.invalid_bytes};
  {
    nlohmann::json j;
    j["labeled"] = s.labeled;
    j["unlabeled"] = s.unlabeled;
    j["vocab"] = s.vocab;
    j["users"] = s.users;
    j["invalid_utf8_bytes"] = s.invalid_bytes;
    j["malformed_lines"] = ls.malformed + us.malformed;
    std::ofstream(L.pre("stats.json"), std::ios::binary) << j.dump(2) << '\n';
  }
  Manifest m(cfg.out);
  std::vector<fs::path> outs;
  for (auto f : {"vocab.txt", "labeled.jsonl", "unlabeled.jsonl", "labeled.enc.tsv", "unlabeled.enc.tsv", "users.tsv",
                 "timelines.tsv", "stats.json"})
    outs.push_back(L.pre(f));
  auto inputs = external_inputs(cfg);
  inputs.erase("input:seeds");
  m.record("preprocess", inputs, outs);
  log::info("preprocess: " + std::to_string(s.labeled) + " labeled, " + std::to_string(s.unlabeled) +
            " unlabeled, vocabulary " + std::to_string(s.vocab) + ", users " + std::to_string(s.users));
  return s;
}

// ---------------------------------------------------------------------------
// build-resources

struct Resources {
  Vocab vocab;
  std::vector<Tweet> labeled, unlabeled;
  EmbeddingMatrix model_emb;
  SPLexLexicon lexicon;
};

inline std::vector<std::pair<std::string, ContextBundle>> compute_context(const std::vector<Tweet>& targets,
                                                                          const std::vector<Tweet>& all,
                                                                          const Vocab& vocab,
                                                                          const EmbeddingMatrix& emb,
                                                                          const SPLexLexicon& lexicon,
                                                                          const PipelineConfig& cfg) {
  ContextCorpus cc(all, vocab);
  Timeline tl(cc);
  const auto aligned = lexicon.aligned_to(vocab);
  ContextResources r{&cc, &tl, &emb, &aligned, cfg.emb_history, cfg.splex_history};
  std::vector<std::pair<std::string, ContextBundle>> rows;
  rows.reserve(targets.size());
  for (const auto& t : targets) rows.emplace_back(t.id, context_bundle(t, r));
  return rows;
}

struct ResourcesSummary {
  std::size_t cbow_rows = 0;
  long svd_rank = 0;
  std::array<std::size_t, 2> seeds_used{};
  std::size_t lexicon_size = 0;
};

inline ResourcesSummary cmd_build_resources(const PipelineConfig& cfg) {
  cfg.validate();
  const Layout L{cfg.out};
  Manifest m(cfg.out);
  m.verify("preprocess", external_inputs(cfg));
  auto vocab = Vocab::load(L.pre("vocab.txt"));
  auto labeled = read_annotated(L.pre("labeled.jsonl"));
  auto unlabeled = read_annotated(L.pre("unlabeled.jsonl"));
  auto [aggr, loss] = effective_seeds(cfg);
  for (const auto* s : {&aggr, &loss}) {
    const bool any = std::any_of(s->words.begin(), s->words.end(), [&](const std::string& w) { return vocab.find(w).has_value(); });
    if (!any)
      throw ValidationError(std::string("seed set has no in-vocabulary ") +
                            (s->cls == LexiconClass::Aggression ? "aggression" : "loss") + " words");
  }

  std::vector<std::vector<std::int32_t>> corpus;
  corpus.reserve(labeled.size() + unlabeled.size());
  if (cfg.embed_labeled)
    for (const auto& t : labeled) corpus.push_back(index_tokens(t.tokens, vocab));
  for (const auto& t : unlabeled) corpus.push_back(index_tokens(t.tokens, vocab));

  fs::create_directories(cfg.out / "resources");
  ResourcesSummary sum;
  auto cbow_cfg = cfg.cbow;
  cbow_cfg.seed = derive_seed(cfg.seed, {11});
  cbow_cfg.threads = cfg.threads;
  log::info("training CBOW embeddings");
  auto cbow = train_cbow(corpus, vocab.size(), cbow_cfg);
  save_embeddings(L.res("embeddings.cbow.txt"), cbow.embeddings, vocab);
  {
    std::ofstream out(L.res("cbow_loss.tsv"), std::ios::binary);
    out << "epoch\tloss\n";
    for (std::size_t e = 0; e < cbow.epoch_loss.size(); ++e) {
      char buf[32];
      auto r = std::to_chars(buf, buf + sizeof buf, cbow.epoch_loss[e], std::chars_format::general, 9);
      out << e + 1 << '\t' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf)) << '\n';
    }
  }
  sum.cbow_rows = cbow.embeddings.rows();

  log::info("computing PPMI-SVD embeddings");
  auto counts = build_cooccurrence(corpus, vocab.size(), cfg.svd_window, cfg.cbow.min_count);
  auto ppmi = compute_ppmi(counts);
  auto svd = svd_embed(ppmi, static_cast<long>(cfg.cbow.dim), derive_seed(cfg.seed, {12}));
  save_embeddings(L.res("embeddings.svd.txt"), svd, vocab);

  auto model_emb = load_embeddings(L.res(std::string("embeddings.") + cfg.model_embedding + ".txt"), vocab,
                                   cfg.model_embedding == "cbow" ? EmbeddingKind::Cbow : EmbeddingKind::Svd);
  auto lex_emb = load_embeddings(L.res(std::string("embeddings.") + cfg.lexicon_embedding + ".txt"), vocab,
                                 cfg.lexicon_embedding == "cbow" ? EmbeddingKind::Cbow : EmbeddingKind::Svd);
  log::info("inducing lexicon");
  auto lex = induce_lexicon(lex_emb, vocab, aggr, loss, cfg.lexicon);
  lex.lexicon.save(L.res("lexicon.tsv"));
  save_seed_file(L.res("seeds.txt"), aggr, loss);
  sum.seeds_used = lex.seeds_used;
  sum.lexicon_size = lex.lexicon.size();
  auto lexicon = SPLexLexicon::load(L.res("lexicon.tsv"));

  log::info("computing context features");
  std::vector<Tweet> all = labeled;
  all.insert(all.end(), unlabeled.begin(), unlabeled.end());
  save_context_bundles(L.res("context.tsv"), compute_context(labeled, all, vocab, model_emb, lexicon, cfg));

  std::map<std::string, fs::path> inputs;
  for (auto f : {"vocab.txt", "labeled.jsonl", "unlabeled.jsonl"}) inputs[m.key_of(L.pre(f))] = L.pre(f);
  if (!cfg.seeds.empty()) inputs["input:seeds"] = cfg.seeds;
  std::vector<fs::path> outs;
  for (auto f : {"embeddings.cbow.txt", "cbow_loss.tsv", "embeddings.svd.txt", "lexicon.tsv", "seeds.txt", "context.tsv"})
    outs.push_back(L.res(f));
  m.record("build-resources", inputs, outs);
  return sum;
}

// ---------------------------------------------------------------------------
// Shared training/evaluation state

struct ModelData {
  Vocab vocab;
  std::vector<Tweet> labeled;
  EmbeddingMatrix emb;
  SPLexLexicon::Aligned lexicon;
  LabeledDataset plain;    // no context
  LabeledDataset context;  // with context rows
  RowMatrix linear_plain, linear_context;
};

inline ModelData load_model_data(const PipelineConfig& cfg, const Manifest& m) {
  const Layout L{cfg.out};
  m.verify("build-resources", external_inputs(cfg));
  ModelData d;
  d.vocab = Vocab::load(L.pre("vocab.txt"));
  d.labeled = read_annotated(L.pre("labeled.jsonl"));
  d.emb = load_embeddings(L.res(std::string("embeddings.") + cfg.model_embedding + ".txt"), d.vocab,
                          cfg.model_embedding == "cbow" ? EmbeddingKind::Cbow : EmbeddingKind::Svd);
  d.lexicon = SPLexLexicon::load(L.res("lexicon.tsv")).aligned_to(d.vocab);
  const auto bundles = load_context_bundles(L.res("context.tsv"), static_cast<Eigen::Index>(d.emb.dim()));
  const auto n = static_cast<Eigen::Index>(d.labeled.size());
  const Eigen::Index cdim = 2 * static_cast<Eigen::Index>(d.emb.dim()) + 2;
  d.plain.context.resize(n, 0);
  d.context.context.resize(n, cdim);
  d.linear_plain.resize(n, static_cast<Eigen::Index>(d.emb.dim()) + 2);
  d.linear_context.resize(n, static_cast<Eigen::Index>(d.emb.dim()) + 2 + cdim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = d.labeled[static_cast<std::size_t>(i)];
    auto it = bundles.find(t.id);
    if (it == bundles.end()) throw RuntimeError("context features missing for tweet " + t.id);
    const auto enc = encode_tweet(t.tokens, d.vocab);
    d.plain.x.push_back(enc);
    d.plain.y.push_back(*t.label);
    d.context.context.row(i) = it->second.flatten().transpose();
    const auto idx = index_tokens(t.tokens, d.vocab);
    d.linear_plain.row(i) = linear_features(idx, d.emb, d.lexicon).transpose();
    d.linear_context.row(i) = linear_features(idx, d.emb, d.lexicon, &it->second).transpose();
  }
  d.context.x = d.plain.x;
  d.context.y = d.plain.y;
  return d;
}

inline LabeledDataset subset(const LabeledDataset& d, const std::vector<std::size_t>& idx) {
  LabeledDataset s;
  s.context.resize(static_cast<Eigen::Index>(idx.size()), d.context.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    s.x.push_back(d.x[idx[k]]);
    s.y.push_back(d.y[idx[k]]);
    if (d.context.cols() > 0) s.context.row(static_cast<Eigen::Index>(k)) = d.context.row(static_cast<Eigen::Index>(idx[k]));
  }
  return s;
}

inline RowMatrix subset_rows(const RowMatrix& X, const std::vector<std::size_t>& idx) {
  RowMatrix s(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) s.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(idx[k]));
  return s;
}

inline std::vector<Fold> repeat_folds(const PipelineConfig& cfg, const std::vector<Label>& y, std::size_t rep) {
  return stratified_folds(y, cfg.folds, derive_seed(cfg.seed, {21, rep}));
}

/// Trains the Aggression and Loss networks (in parallel when threads > 1)
/// and tunes the cascade thresholds on the validation split.
inline CnnPair train_cnn_pair(const LabeledDataset& train, const LabeledDataset& val, const EmbeddingMatrix& emb,
                              CnnHyper hyper, std::uint64_t seed, std::size_t threads,
                              std::array<std::vector<EpochLog>, 2>* logs = nullptr) {
  CnnTrainResult ra, rl;
  CnnHyper ha = hyper, hl = hyper;
  ha.seed = derive_seed(seed, {0});
  hl.seed = derive_seed(seed, {1});
  if (threads > 1) {
    std::exception_ptr err;
    std::thread ta([&] {
      try {
        ra = train_cnn(train, val, Label::Aggression, emb, ha);
      } catch (...) {
        err = std::current_exception();
      }
    });
    rl = train_cnn(train, val, Label::Loss, emb, hl);
    ta.join();
    if (err) std::rethrow_exception(err);
  } else {
    ra = train_cnn(train, val, Label::Aggression, emb, ha);
    rl = train_cnn(train, val, Label::Loss, emb, hl);
  }
  CnnPair pair{std::move(ra.params), std::move(rl.params), {}};
  const auto pa = cnn_predict(pair.aggression, val);
  const auto pl = cnn_predict(pair.loss, val);
  pair.thresholds = tune_thresholds(pa, pl, val.y);
  if (logs) (*logs)[0] = std::move(ra.log), (*logs)[1] = std::move(rl.log);
  return pair;
}

inline std::vector<Label> cnn_labels(const CnnPair& m, const LabeledDataset& d, std::vector<float>* pa = nullptr,
                                     std::vector<float>* pl = nullptr) {
  auto a = cnn_predict(m.aggression, d);
  auto l = cnn_predict(m.loss, d);
  auto labels = cascade_predict(a, l, m.thresholds);
  if (pa) *pa = std::move(a);
  if (pl) *pl = std::move(l);
  return labels;
}

inline std::vector<Label> linear_labels(const LinearModel& m, const RowMatrix& X) {
  std::vector<Label> out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(m.predict(X.row(i).transpose()));
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  std::vector<fs::path> checkpoints;
};

inline TrainSummary cmd_train(const PipelineConfig& cfg, const std::vector<std::string>& models) {
  cfg.validate();
  if (models.empty()) throw ValidationError("no models requested");
  std::vector<ModelSpec> specs;
  for (const auto& n : models) specs.push_back(parse_model(n));
  const Layout L{cfg.out};
  Manifest m(cfg.out);
  const auto data = load_model_data(cfg, m);
  TrainSummary summary;
  for (const auto& spec : specs) {
    const auto dir = L.model_dir(spec.name);
    fs::create_directories(dir);
    std::vector<fs::path> outs;
    const auto& ds = spec.context ? data.context : data.plain;
    const auto& X = spec.context ? data.linear_context : data.linear_plain;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const auto folds = repeat_folds(cfg, data.plain.y, r);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& fold = folds[f];
        for (std::size_t s = 0; s < cfg.runs; ++s) {
          const auto stem = Layout::run_stem(r, f, s);
          const auto seed = derive_seed(cfg.seed, {31, r, f, s, spec.cnn ? 1u : 2u, spec.context ? 1u : 0u});
          log::info(spec.name + ": " + stem);
          Checkpoint ck;
          std::ofstream logf(dir / (stem + ".log.tsv"), std::ios::binary);
          if (spec.cnn) {
            const auto train = subset(ds, fold.train);
            const auto val = subset(ds, fold.validation);
            std::array<std::vector<EpochLog>, 2> logs;
            auto pair = train_cnn_pair(train, val, data.emb, cfg.cnn, seed, cfg.threads, &logs);
            ck = to_checkpoint(pair);
            logf << "model\tepoch\ttrain_loss\tval_loss\tval_macro_f\timproved\n";
            for (int k = 0; k < 2; ++k)
              for (const auto& e : logs[static_cast<std::size_t>(k)])
                logf << (k == 0 ? "aggression" : "loss") << '\t' << e.epoch << '\t' << std::setprecision(9)
                     << e.train_loss << '\t' << e.val_loss << '\t' << e.val_macro_f << '\t' << e.improved << '\n';
            logf << "# thresholds\t" << pair.thresholds.t_A << '\t' << pair.thresholds.t_L << '\n';
          } else {
            std::vector<std::size_t> idx = fold.train;
            idx.insert(idx.end(), fold.validation.begin(), fold.validation.end());
            std::sort(idx.begin(), idx.end());
            std::vector<Label> y;
            for (auto i : idx) y.push_back(data.plain.y[i]);
            auto lc = cfg.linear;
            lc.seed = seed;
            auto lm = train_linear(subset_rows(X, idx), y, lc);
            ck = to_checkpoint(lm, spec.context ? static_cast<std::uint32_t>(X.cols() - kLinearDim) : 0u);
            logf << "examples\t" << idx.size() << '\n';
          }
          logf.close();
          const auto path = dir / (stem + ".ckpt");
          save_checkpoint(path, ck);
          outs.push_back(path);
          outs.push_back(dir / (stem + ".log.tsv"));
          summary.checkpoints.push_back(path);
        }
      }
    }
    std::map<std::string, fs::path> inputs;
    for (const auto& p : m.outputs("build-resources")) inputs[m.key_of(p)] = p;
    for (auto fn : {"vocab.txt", "labeled.jsonl"}) inputs[m.key_of(L.pre(fn))] = L.pre(fn);
    m.record("train/" + spec.name, inputs, outs);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate

struct Comparison {
  std::string baseline, candidate;
  Label cls = Label::Other;
  double p_raw = 1, p_adjusted = 1;
};

struct EvaluationResult {
  std::vector<std::pair<std::string, EvalReport>> models;
  std::vector<Comparison> comparisons;
  std::vector<std::string> ids;    // concatenated test order
  std::vector<Label> gold;
  std::vector<std::vector<Label>> predictions;  // per model, aligned with ids
  Aggregate aggregate = Aggregate::Vote;
};

inline nlohmann::json to_json(const EvaluationResult& r) {
  nlohmann::json j;
  j["aggregate"] = r.aggregate == Aggregate::Vote ? "vote" : "mean";
  j["models"] = nlohmann::json::array();
  for (const auto& [name, rep] : r.models) {
    nlohmann::json mj;
    mj["name"] = name;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      const auto& s = rep.per_class[c];
      mj["per_class"][std::string(to_string(kLabels[c]))] = {
          {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    }
    mj["macro_f1"] = rep.macro_f1;
    j["models"].push_back(mj);
  }
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : r.comparisons)
    j["comparisons"].push_back({{"baseline", c.baseline},
                                {"candidate", c.candidate},
                                {"class", std::string(to_string(c.cls))},
                                {"p_raw", c.p_raw},
                                {"p_adjusted", c.p_adjusted}});
  return j;
}

inline std::string format_table(const EvaluationResult& r) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3);
  o << std::left << std::setw(16) << "model";
  for (auto l : kLabels) o << std::setw(7) << (std::string(to_string(l)).substr(0, 3) + ".P") << std::setw(7)
                          << (std::string(to_string(l)).substr(0, 3) + ".R") << std::setw(7)
                          << (std::string(to_string(l)).substr(0, 3) + ".F");
  o << "macroF1\n";
  for (const auto& [name, rep] : r.models) {
    o << std::setw(16) << name;
    for (const auto& s : rep.per_class) o << std::setw(7) << s.precision << std::setw(7) << s.recall << std::setw(7) << s.f1;
    o << rep.macro_f1 << '\n';
  }
  if (!r.comparisons.empty()) {
    o << "\nbaseline         candidate        class       p_raw     p_adj\n";
    o << std::setprecision(5);
    for (const auto& c : r.comparisons)
      o << std::setw(17) << c.baseline << std::setw(17) << c.candidate << std::setw(12) << to_string(c.cls)
        << std::setw(10) << c.p_raw << c.p_adjusted << '\n';
  }
  return o.str();
}

inline EvaluationResult cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& models) {
  cfg.validate();
  if (models.empty()) throw ValidationError("no models requested");
  std::vector<ModelSpec> specs;
  for (const auto& n : models) specs.push_back(parse_model(n));
  const Layout L{cfg.out};
  Manifest m(cfg.out);
  for (const auto& s : specs) {
    if (!m.has("train/" + s.name)) throw ValidationError("no trained checkpoints for model " + s.name);
    try {
      m.verify("train/" + s.name);
    } catch (const RuntimeError& e) {
      throw RuntimeError("model " + s.name + ": " + e.what());
    }
  }
  const auto data = load_model_data(cfg, m);

  EvaluationResult res;
  res.aggregate = cfg.aggregate;
  res.predictions.resize(specs.size());
  std::vector<std::vector<EvalReport>> per_run(specs.size());
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto folds = repeat_folds(cfg, data.plain.y, r);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto& test = folds[f].test;
      std::vector<Label> gold;
      for (auto i : test) {
        res.ids.push_back(data.labeled[i].id);
        gold.push_back(data.plain.y[i]);
      }
      res.gold.insert(res.gold.end(), gold.begin(), gold.end());
      for (std::size_t k = 0; k < specs.size(); ++k) {
        const auto& spec = specs[k];
        std::vector<std::vector<Label>> runs;
        for (std::size_t s = 0; s < cfg.runs; ++s) {
          const auto path = L.model_dir(spec.name) / (Layout::run_stem(r, f, s) + ".ckpt");
          if (!fs::exists(path)) throw ValidationError("model " + spec.name + ": missing checkpoint " + path.string());
          const auto ck = load_checkpoint(path);
          if (spec.cnn) {
            const auto test_ds = subset(spec.context ? data.context : data.plain, test);
            runs.push_back(cnn_labels(cnn_from_checkpoint(ck), test_ds));
          } else {
            const auto X = subset_rows(spec.context ? data.linear_context : data.linear_plain, test);
            runs.push_back(linear_labels(linear_from_checkpoint(ck), X));
          }
          per_run[k].push_back(metrics(runs.back(), gold));
        }
        const auto voted = majority_vote(runs);
        res.predictions[k].insert(res.predictions[k].end(), voted.begin(), voted.end());
      }
    }
  }
  for (std::size_t k = 0; k < specs.size(); ++k)
    res.models.emplace_back(specs[k].name, cfg.aggregate == Aggregate::Vote ? metrics(res.predictions[k], res.gold)
                                                                           : mean_report(per_run[k]));

  std::vector<double> raw;
  for (std::size_t a = 0; a < specs.size(); ++a)
    for (std::size_t b = a + 1; b < specs.size(); ++b)
      for (auto cls : {Label::Aggression, Label::Loss, Label::Other}) {
        Comparison c{specs[a].name, specs[b].name, cls, 1, 1};
        c.p_raw = approx_randomization_test(res.predictions[a], res.predictions[b], res.gold, cls, cfg.shuffles,
                                            derive_seed(cfg.seed, {41, a, b, index_of(cls)}), cfg.threads);
        raw.push_back(c.p_raw);
        res.comparisons.push_back(c);
      }
  if (!raw.empty()) {
    const auto adj = bonferroni(raw, raw.size());
    for (std::size_t i = 0; i < adj.size(); ++i) res.comparisons[i].p_adjusted = adj[i];
  }

  fs::create_directories(cfg.out / "reports");
  std::ofstream(L.report("report.json"), std::ios::binary) << to_json(res).dump(2) << '\n';
  std::ofstream(L.report("report.txt"), std::ios::binary) << format_table(res);
  {
    std::ofstream out(L.report("predictions.tsv"), std::ios::binary);
    out << "id\tgold";
    for (const auto& s : specs) out << '\t' << s.name;
    out << '\n';
    for (std::size_t i = 0; i < res.ids.size(); ++i) {
      out << res.ids[i] << '\t' << to_string(res.gold[i]);
      for (const auto& p : res.predictions) out << '\t' << to_string(p[i]);
      out << '\n';
    }
  }
  std::map<std::string, fs::path> inputs;
  for (const auto& s : specs)
    for (const auto& p : m.outputs("train/" + s.name)) inputs[m.key_of(p)] = p;
  m.record("evaluate", inputs, {L.report("report.json"), L.report("report.txt"), L.report("predictions.tsv")});
  return res;
}

// ---------------------------------------------------------------------------
// predict

struct PredictionRow {
  std::string id;
  double p_aggression = 0, p_loss = 0;
  Label label = Label::Other;
};

/// Scores the tweets in `input` with a checkpoint. Context features use the
/// preprocessed corpora plus the input tweets themselves.
inline std::vector<PredictionRow> cmd_predict(const PipelineConfig& cfg, const fs::path& checkpoint,
                                              const fs::path& input, std::ostream& out) {
  cfg.validate();
  if (!fs::exists(checkpoint)) throw ValidationError("checkpoint not found: " + checkpoint.string());
  if (!fs::exists(input)) throw ValidationError("input file not found: " + input.string());
  const Layout L{cfg.out};
  Manifest m(cfg.out);
  m.verify("build-resources", external_inputs(cfg));
  const auto ck = load_checkpoint(checkpoint);
  auto vocab = Vocab::load(L.pre("vocab.txt"));
  auto tweets = ingest(input);
  UserRegistry registry;
  {
    std::ifstream in(L.pre("users.tsv"), std::ios::binary);
    std::string name;
    std::size_t c;
    while (in >> name >> c) registry.add(name, c);
  }
  annotate(tweets, registry);
  auto emb = load_embeddings(L.res(std::string("embeddings.") + cfg.model_embedding + ".txt"), vocab,
                             cfg.model_embedding == "cbow" ? EmbeddingKind::Cbow : EmbeddingKind::Svd);
  auto lexicon = SPLexLexicon::load(L.res("lexicon.tsv"));
  const auto aligned = lexicon.aligned_to(vocab);

  std::vector<std::pair<std::string, ContextBundle>> bundles;
  if (ck.context_dim > 0) {
    auto all = read_annotated(L.pre("labeled.jsonl"));
    auto un = read_annotated(L.pre("unlabeled.jsonl"));
    all.insert(all.end(), un.begin(), un.end());
    std::set<std::string> ids;
    for (const auto& t : all) ids.insert(t.id);
    for (const auto& t : tweets)
      if (!ids.contains(t.id)) all.push_back(t);
    bundles = compute_context(tweets, all, vocab, emb, lexicon, cfg);
  }

  std::vector<PredictionRow> rows(tweets.size());
  for (std::size_t i = 0; i < tweets.size(); ++i) rows[i].id = tweets[i].id;
  if (ck.kind == ModelKind::Cnn) {
    const auto pair = cnn_from_checkpoint(ck);
    LabeledDataset ds;
    ds.context.resize(static_cast<Eigen::Index>(tweets.size()), ck.context_dim);
    for (std::size_t i = 0; i < tweets.size(); ++i) {
      ds.x.push_back(encode_tweet(tweets[i].tokens, vocab));
      if (ck.context_dim > 0) ds.context.row(static_cast<Eigen::Index>(i)) = bundles[i].second.flatten().transpose();
    }
    if (pair.aggression.embedding.rows() != static_cast<Eigen::Index>(vocab.size()))
      throw ValidationError("checkpoint vocabulary size does not match preprocessed vocabulary");
    std::vector<float> pa, pl;
    const auto labels = cnn_labels(pair, ds, &pa, &pl);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].p_aggression = pa[i], rows[i].p_loss = pl[i], rows[i].label = labels[i];
  } else {
    const auto lm = linear_from_checkpoint(ck);
    for (std::size_t i = 0; i < tweets.size(); ++i) {
      const auto idx = index_tokens(tweets[i].tokens, vocab);
      const auto x = linear_features(idx, emb, aligned, ck.context_dim > 0 ? &bundles[i].second : nullptr);
      const auto d = lm.decision(x);
      // Linear scores are squashed for display; the label is the argmax.
      rows[i].p_aggression = detail::sigmoid_r(d(0));
      rows[i].p_loss = detail::sigmoid_r(d(1));
      rows[i].label = lm.predict(x);
    }
  }
  // Probabilities are emitted with 6 decimals and CNN labels are derived from
  // the emitted values, so the file is self-consistent under the cascade.
  auto round6 = [](double v) { return std::round(v * 1e6) / 1e6; };
  for (auto& r : rows) {
    r.p_aggression = round6(r.p_aggression), r.p_loss = round6(r.p_loss);
    if (ck.kind == ModelKind::Cnn) r.label = cascade_predict(r.p_aggression, r.p_loss, ck.thresholds);
  }
  out << "id,p_aggression,p_loss,label\n";
  char buf[32];
  auto num = [&](double v) {
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
    return std::string(buf, r.ptr);
  };
  auto csv = [](const std::string& f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
    std::string q = "\"";
    for (char c : f) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : rows)
    out << csv(r.id) << ',' << num(r.p_aggression) << ',' << num(r.p_loss) << ',' << to_string(r.label) << '\n';
  return rows;
}

}  // namespace clex
