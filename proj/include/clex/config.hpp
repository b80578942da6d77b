#pragma once

// Pipeline configuration (INI sections) and the artifact manifest.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "cnn.hpp"
#include "common.hpp"
#include "context.hpp"
#include "embeddings.hpp"
#include "model.hpp"
#include "splex.hpp"
#include "synthetic.hpp"

namespace clex {

namespace fs = std::filesystem;

enum class Aggregate { Vote, Mean };

struct PipelineConfig {
  fs::path labeled;    // empty: <out>/data/labeled.jsonl
  fs::path unlabeled;  // empty: <out>/data/unlabeled.jsonl
  fs::path seeds;      // empty: built-in seed lists
  fs::path out = "out";
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  std::size_t max_tokens = kDefaultMaxTokens;
  CbowConfig cbow;
  std::size_t svd_window = 5;
  bool embed_labeled = false;  // also feed labeled tweets to CBOW and PPMI
  std::string model_embedding = "cbow";  // initializes the CNN, feeds linear and context features
  std::string lexicon_embedding = "svd";
  LexiconConfig lexicon;
  HistoryConfig emb_history = default_embedding_history();
  HistoryConfig splex_history = default_splex_history();
  CnnHyper cnn;
  LinearConfig linear;

  std::size_t folds = 5;
  std::size_t repeats = 4;
  std::size_t runs = 5;
  std::size_t shuffles = 10000;
  Aggregate aggregate = Aggregate::Vote;

  SyntheticSpec synthetic;

  fs::path labeled_path() const { return labeled.empty() ? out / "data" / "labeled.jsonl" : labeled; }
  fs::path unlabeled_path() const { return unlabeled.empty() ? out / "data" / "unlabeled.jsonl" : unlabeled; }

  void validate() const {
    if (threads == 0) throw ValidationError("threads must be >= 1");
    if (max_tokens == 0) throw ValidationError("vocab.max_tokens must be positive");
    if (cbow.dim == 0 || cbow.window == 0 || cbow.epochs == 0) throw ValidationError("bad [embeddings] settings");
    for (const auto* e : {&model_embedding, &lexicon_embedding})
      if (*e != "cbow" && *e != "svd") throw ValidationError("embedding choice must be cbow or svd, got " + *e);
    emb_history.validate();
    splex_history.validate();
    if (cnn.dropout < 0 || cnn.dropout >= 1) throw ValidationError("cnn.dropout must be in [0,1)");
    if (cnn.batch == 0 || cnn.filters <= 0 || cnn.hidden <= 0) throw ValidationError("bad [cnn] settings");
    if (folds < 2) throw ValidationError("eval.folds must be >= 2");
    if (repeats == 0 || runs == 0 || shuffles == 0) throw ValidationError("eval.repeats, runs and shuffles must be >= 1");
    synthetic.validate();
  }

  /// Checks that the corpus inputs exist, naming the offending key.
  void validate_inputs() const {
    if (!fs::exists(labeled_path())) throw ValidationError("paths.labeled: file not found: " + labeled_path().string());
    if (!fs::exists(unlabeled_path()))
      throw ValidationError("paths.unlabeled: file not found: " + unlabeled_path().string());
    if (!seeds.empty() && !fs::exists(seeds)) throw ValidationError("paths.seeds: file not found: " + seeds.string());
  }
};

namespace detail {

inline unsigned parse_involvement(const std::string& s, const std::string& key) {
  unsigned bits = 0;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    if (part == "self") bits |= kSelf;
    else if (part == "retweet") bits |= kRetweet;
    else if (part == "mention") bits |= kMention;
    else if (!part.empty()) throw ValidationError(key + ": unknown involvement kind '" + part + "'");
  }
  return bits;
}

inline Combine parse_combine(const std::string& s, const std::string& key) {
  if (s == "sum") return Combine::Sum;
  if (s == "avg") return Combine::Avg;
  throw ValidationError(key + ": expected sum or avg, got '" + s + "'");
}

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <class T>
  void get(const std::string& key, T& dst) {
    auto v = raw(key);
    if (!v) return;
    std::istringstream in(*v);
    T tmp{};
    if constexpr (std::is_same_v<T, std::string>) {
      tmp = *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (*v != "true" && *v != "false") throw ValidationError(key + ": expected true or false, got '" + *v + "'");
      tmp = *v == "true";
    } else if (!(in >> tmp) || !(in >> std::ws).eof()) {
      throw ValidationError(key + ": cannot parse '" + *v + "'");
    }
    dst = tmp;
  }

  /// `key` is "<section>.<name>"; section names may themselves contain dots.
  std::optional<std::string> raw(const std::string& key) {
    known_.insert(key);
    const auto dot = key.rfind('.');
    auto sec = tree_.find(key.substr(0, dot));
    if (sec == tree_.not_found()) return std::nullopt;
    auto v = sec->second.find(key.substr(dot + 1));
    if (v == sec->second.not_found()) return std::nullopt;
    return v->second.data();
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (!body.data().empty()) throw ValidationError("config: key '" + section + "' outside a section");
      for (const auto& [k, v] : body) {
        const auto full = section + "." + k;
        if (!known_.contains(full)) throw ValidationError("config: unknown key " + full);
      }
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> known_;
};

}  // namespace detail

/// Reads an INI config; relative paths resolve against the config file's
/// directory. Unknown keys are rejected.
inline PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  if (path.empty()) return cfg;
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  detail::IniReader r(tree);
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& key, fs::path& dst) {
    if (auto v = r.raw(key); v && !v->empty()) dst = fs::path(*v).is_absolute() ? fs::path(*v) : base / *v;
  };
  resolve("paths.labeled", cfg.labeled);
  resolve("paths.unlabeled", cfg.unlabeled);
  resolve("paths.seeds", cfg.seeds);
  resolve("paths.out", cfg.out);
  r.get("general.seed", cfg.seed);
  r.get("general.threads", cfg.threads);

  r.get("vocab.max_tokens", cfg.max_tokens);
  r.get("embeddings.dim", cfg.cbow.dim);
  r.get("embeddings.window", cfg.cbow.window);
  r.get("embeddings.min_count", cfg.cbow.min_count);
  r.get("embeddings.epochs", cfg.cbow.epochs);
  r.get("embeddings.negative", cfg.cbow.negative);
  r.get("embeddings.alpha", cfg.cbow.alpha);
  r.get("embeddings.svd_window", cfg.svd_window);
  r.get("embeddings.include_labeled", cfg.embed_labeled);
  r.get("embeddings.model_embedding", cfg.model_embedding);
  r.get("embeddings.lexicon_embedding", cfg.lexicon_embedding);

  r.get("splex.k", cfg.lexicon.k);
  r.get("splex.beta", cfg.lexicon.walk.beta);
  r.get("splex.tol", cfg.lexicon.walk.tol);
  r.get("splex.max_iter", cfg.lexicon.walk.max_iter);

  for (auto [section, h] : {std::pair{"history.embedding", &cfg.emb_history}, std::pair{"history.splex", &cfg.splex_history}}) {
    const std::string s = section;
    r.get(s + ".window_days", h->window_days);
    if (auto v = r.raw(s + ".half_life_ratio")) {
      if (*v == "none") {
        h->half_life_ratio.reset();
      } else {
        double x = 0;
        r.get(s + ".half_life_ratio", x);
        h->half_life_ratio = x;
      }
    }
    if (auto v = r.raw(s + ".combine_word")) h->combine_word = detail::parse_combine(*v, s + ".combine_word");
    if (auto v = r.raw(s + ".combine_tweet")) h->combine_tweet = detail::parse_combine(*v, s + ".combine_tweet");
    if (auto v = r.raw(s + ".include")) h->include = detail::parse_involvement(*v, s + ".include");
  }

  r.get("cnn.filters", cfg.cnn.filters);
  r.get("cnn.hidden", cfg.cnn.hidden);
  r.get("cnn.dropout", cfg.cnn.dropout);
  r.get("cnn.lr", cfg.cnn.lr);
  r.get("cnn.batch", cfg.cnn.batch);
  r.get("cnn.patience", cfg.cnn.patience);
  r.get("cnn.max_epochs", cfg.cnn.max_epochs);
  if (auto v = r.raw("cnn.optimizer")) {
    if (*v == "adam") cfg.cnn.optimizer = CnnHyper::Optimizer::Adam;
    else if (*v == "nadam") cfg.cnn.optimizer = CnnHyper::Optimizer::Nadam;
    else throw ValidationError("cnn.optimizer: expected adam or nadam");
  }
  if (auto v = r.raw("cnn.stop_metric")) {
    if (*v == "val_loss") cfg.cnn.stop = CnnHyper::StopMetric::ValLoss;
    else if (*v == "val_macro_f") cfg.cnn.stop = CnnHyper::StopMetric::ValMacroF;
    else throw ValidationError("cnn.stop_metric: expected val_loss or val_macro_f");
  }

  r.get("linear.lambda", cfg.linear.lambda);
  r.get("linear.epochs", cfg.linear.epochs);
  r.get("linear.weight_aggression", cfg.linear.class_weights[0]);
  r.get("linear.weight_loss", cfg.linear.class_weights[1]);
  r.get("linear.weight_other", cfg.linear.class_weights[2]);

  r.get("eval.folds", cfg.folds);
  r.get("eval.repeats", cfg.repeats);
  r.get("eval.runs", cfg.runs);
  r.get("eval.shuffles", cfg.shuffles);
  if (auto v = r.raw("eval.aggregate")) {
    if (*v == "vote") cfg.aggregate = Aggregate::Vote;
    else if (*v == "mean") cfg.aggregate = Aggregate::Mean;
    else throw ValidationError("eval.aggregate: expected vote or mean");
  }

  r.get("synthetic.n_users", cfg.synthetic.n_users);
  r.get("synthetic.n_labeled", cfg.synthetic.n_labeled);
  r.get("synthetic.n_unlabeled", cfg.synthetic.n_unlabeled);
  r.get("synthetic.weak_fraction", cfg.synthetic.weak_fraction);
  r.get("synthetic.background_size", cfg.synthetic.background_size);
  r.get("synthetic.days", cfg.synthetic.days);
  r.get("synthetic.seed", cfg.synthetic.seed);
  r.reject_unknown();
  return cfg;
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot hash missing file: " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) out += hex[md[i] >> 4], out += hex[md[i] & 15];
  return out;
}

/// manifest.json in the output directory: per stage, hashes of the files it
/// read and wrote. Artifact keys are paths relative to the output directory;
/// external inputs are keyed "input:<name>".
class Manifest {
 public:
  explicit Manifest(fs::path out_dir) : dir_(std::move(out_dir)) {
    const auto p = dir_ / "manifest.json";
    if (fs::exists(p)) {
      std::ifstream in(p, std::ios::binary);
      data_ = nlohmann::json::parse(in, nullptr, false);
      if (data_.is_discarded() || !data_.is_object()) throw ValidationError("corrupt manifest: " + p.string());
    }
    if (!data_.contains("stages")) data_["stages"] = nlohmann::json::object();
  }

  const fs::path& dir() const { return dir_; }

  std::string key_of(const fs::path& p) const { return fs::relative(p, dir_).generic_string(); }

  void record(const std::string& stage, const std::map<std::string, fs::path>& inputs,
              const std::vector<fs::path>& outputs) {
    nlohmann::json s;
    s["inputs"] = nlohmann::json::object();
    s["outputs"] = nlohmann::json::object();
    for (const auto& [k, p] : inputs) s["inputs"][k] = sha256_file(p);
    for (const auto& p : outputs) s["outputs"][key_of(p)] = sha256_file(p);
    data_["stages"][stage] = std::move(s);
    save();
  }

  /// Recorded output files of a stage, as paths.
  std::vector<fs::path> outputs(const std::string& stage) const {
    std::vector<fs::path> out;
    if (auto it = data_["stages"].find(stage); it != data_["stages"].end())
      for (const auto& [k, v] : (*it)["outputs"].items()) out.push_back(dir_ / k);
    return out;
  }

  /// Throws unless `stage` ran and neither its outputs nor its in-tree inputs
  /// changed since. `external` maps "input:<name>" keys to current paths.
  void verify(const std::string& stage, const std::map<std::string, fs::path>& external = {}) const {
    const auto& stages = data_["stages"];
    auto it = stages.find(stage);
    if (it == stages.end()) throw RuntimeError("missing artifacts from stage '" + stage + "'; run it first");
    auto check = [&](const std::string& key, const std::string& recorded, const fs::path& p) {
      if (!fs::exists(p) || sha256_file(p) != recorded)
        throw RuntimeError("stale or missing artifact " + key + " (stage '" + stage + "'); rerun the pipeline from '" +
                           stage + "'");
    };
    for (const auto& [k, v] : (*it)["outputs"].items()) check(k, v.get<std::string>(), dir_ / k);
    for (const auto& [k, v] : (*it)["inputs"].items()) {
      if (k.rfind("input:", 0) == 0) {
        auto e = external.find(k);
        if (e != external.end()) check(k, v.get<std::string>(), e->second);
      } else {
        check(k, v.get<std::string>(), dir_ / k);
      }
    }
  }

  bool has(const std::string& stage) const { return data_["stages"].contains(stage); }

  void save() const {
    fs::create_directories(dir_);
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    if (!out) throw RuntimeError("cannot write manifest");
    out << data_.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  nlohmann::json data_;
};

/// splitmix64 finalizer; derives independent stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix_seed(master);
  for (auto p : parts) s = mix_seed(s ^ p);
  return s;
}

}  // namespace clex
