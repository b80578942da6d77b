#pragma once

// Aggression/Loss lexicon induction: cosine k-NN graph over embeddings and a
// seeded random walk with restart, standardized per class.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"

namespace clex {

enum class LexiconClass : std::uint8_t { Aggression = 0, Loss = 1 };

struct SeedSet {
  LexiconClass cls = LexiconClass::Aggression;
  std::vector<std::string> words;
};

/// Annotator seed lists, lowercased.
inline SeedSet default_aggression_seeds() {
  return {LexiconClass::Aggression,
          {"angry", "opps", "opp", "fu", "fuck", "bitch", "smoke", "pipe", "glock", "play",
           "missin", "bang", "smack", "slap", "beat", "blood", "bust", "bussin", "heat", "bdk",
           "gdk", "snitch", "cappin", "killa", "kill", "hitta", "hittas", "shooter", "tf"}};
}

inline SeedSet default_loss_seeds() {
  return {LexiconClass::Loss,
          {"free", "rip", "longlive", "ll", "rest", "up", "restup", "crying", "cry", "fly",
           "flyhigh", "fallin", "bip", "day", "why", "funeral", "sleep", "miss", "king", "hurt",
           "gone", "cant", "believe", "death", "dead", "died", "lost", "killed", "grave", "damn",
           "soldier", "soldiers", "gang", "bro", "man", "hitta", "jail", "blood", "heaven",
           "home"}};
}

/// Seed file: "[aggression]" / "[loss]" section headers, one word per line.
inline std::pair<SeedSet, SeedSet> load_seed_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read seed file: " + path.string());
  SeedSet aggr{LexiconClass::Aggression, {}};
  SeedSet loss{LexiconClass::Loss, {}};
  SeedSet* cur = nullptr;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    line = line.substr(b);
    if (line[0] == '#' && line.size() > 1 && line[1] == ' ') continue;
    if (line == "[aggression]") {
      cur = &aggr;
    } else if (line == "[loss]") {
      cur = &loss;
    } else if (line.front() == '[') {
      throw ValidationError("unknown seed section: " + line);
    } else {
      if (!cur) throw ValidationError("seed word outside a section: " + line);
      cur->words.push_back(canonical_name(line));
    }
  }
  if (aggr.words.empty() || loss.words.empty())
    throw ValidationError("seed file needs nonempty [aggression] and [loss] sections");
  return {aggr, loss};
}

inline void save_seed_file(const std::filesystem::path& path, const SeedSet& aggr, const SeedSet& loss) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write seed file: " + path.string());
  out << "[aggression]\n";
  for (const auto& w : aggr.words) out << w << '\n';
  out << "\n[loss]\n";
  for (const auto& w : loss.words) out << w << '\n';
}

// ---------------------------------------------------------------------------
// Graph

struct Edge {
  std::size_t to = 0;
  double weight = 0;
};

struct LexicalGraph {
  std::vector<std::vector<Edge>> adjacency;   // symmetrized, sorted by `to`
  std::vector<std::vector<Edge>> neighbors;   // each node's own k-NN list
  std::vector<double> degree;

  std::size_t size() const { return adjacency.size(); }
};

/// Connects every row to its k most cosine-similar rows (ties by lower
/// index) with weight max(0, cos), then symmetrizes by union. Zero rows stay
/// isolated.
inline LexicalGraph build_knn_graph(const RowMatrix& vectors, std::size_t k = 25) {
  const auto n = static_cast<std::size_t>(vectors.rows());
  if (n < k + 1) throw ValidationError("k-NN graph needs at least k+1 tokens");
  RowMatrix unit = vectors;
  std::vector<char> zero(n, 0);
  std::size_t n_zero = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double nrm = unit.row(static_cast<Eigen::Index>(i)).norm();
    if (nrm == 0.0) {
      zero[i] = 1, ++n_zero;
    } else {
      unit.row(static_cast<Eigen::Index>(i)) /= nrm;
    }
  }
  if (n_zero > 0) log::warn(std::to_string(n_zero) + " zero-vector token(s) left isolated in lexical graph");

  LexicalGraph g;
  g.adjacency.assign(n, {});
  g.neighbors.assign(n, {});
  g.degree.assign(n, 0.0);

  constexpr Eigen::Index kBlock = 256;
  std::vector<std::size_t> cand;
  for (Eigen::Index start = 0; start < static_cast<Eigen::Index>(n); start += kBlock) {
    const Eigen::Index len = std::min<Eigen::Index>(kBlock, static_cast<Eigen::Index>(n) - start);
    RowMatrix sims = unit.middleRows(start, len) * unit.transpose();
    for (Eigen::Index r = 0; r < len; ++r) {
      const auto i = static_cast<std::size_t>(start + r);
      if (zero[i]) continue;
      cand.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && !zero[j]) cand.push_back(j);
      const std::size_t take = std::min(k, cand.size());
      auto cmp = [&](std::size_t a, std::size_t b) {
        const double sa = sims(r, static_cast<Eigen::Index>(a));
        const double sb = sims(r, static_cast<Eigen::Index>(b));
        return sa != sb ? sa > sb : a < b;
      };
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), cmp);
      for (std::size_t t = 0; t < take; ++t) {
        const std::size_t j = cand[t];
        g.neighbors[i].push_back({j, std::max(0.0, sims(r, static_cast<Eigen::Index>(j)))});
      }
    }
  }

  std::vector<std::unordered_map<std::size_t, double>> sym(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : g.neighbors[i]) {
      sym[i][e.to] = e.weight;
      sym[e.to][i] = e.weight;
    }
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, w] : sym[i]) g.adjacency[i].push_back({j, w});
    std::sort(g.adjacency[i].begin(), g.adjacency[i].end(),
              [](const Edge& a, const Edge& b) { return a.to < b.to; });
    for (const auto& e : g.adjacency[i]) g.degree[i] += e.weight;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Random walk

struct RandomWalkConfig {
  double beta = 0.9;
  double tol = 1e-6;
  std::size_t max_iter = 5000;
};

/// Fixed point of s = beta * T s + (1 - beta) e with T the column-normalized
/// weight matrix; mass on zero-degree nodes returns to e. Output sums to 1.
inline std::vector<double> random_walk_scores(const LexicalGraph& g, const std::vector<std::size_t>& seeds,
                                              const RandomWalkConfig& cfg = {}) {
  const std::size_t n = g.size();
  std::vector<double> e(n, 0.0);
  std::size_t n_seed = 0;
  for (auto s : seeds) {
    if (s >= n) continue;
    if (e[s] == 0.0) ++n_seed;
    e[s] = 1.0;
  }
  if (n_seed == 0) throw ValidationError("empty effective seed set");
  for (auto& v : e) v /= static_cast<double>(n_seed);

  std::vector<double> s = e;
  std::vector<double> next(n);
  for (std::size_t iter = 1; iter <= cfg.max_iter; ++iter) {
    double dangling = 0;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (s[j] == 0.0) continue;
      if (g.degree[j] <= 0) {
        dangling += s[j];
        continue;
      }
      const double share = s[j] / g.degree[j];
      for (const auto& edge : g.adjacency[j]) next[edge.to] += edge.weight * share;
    }
    double change = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cfg.beta * (next[i] + dangling * e[i]) + (1.0 - cfg.beta) * e[i];
      change += std::abs(v - s[i]);
      next[i] = v;
    }
    s.swap(next);
    if (change < cfg.tol) return s;
  }
  throw RuntimeError("random walk did not converge after " + std::to_string(cfg.max_iter) + " iterations");
}

// ---------------------------------------------------------------------------
// Lexicon

class SPLexLexicon {
 public:
  SPLexLexicon() = default;
  SPLexLexicon(std::vector<std::string> tokens, std::vector<std::array<double, 2>> scores)
      : tokens_(std::move(tokens)), scores_(std::move(scores)) {
    if (tokens_.size() != scores_.size()) throw ValidationError("lexicon size mismatch");
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::array<double, 2>>& scores() const { return scores_; }

  const std::array<double, 2>* find(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? nullptr : &scores_[it->second];
  }

  /// Scores aligned to vocabulary indices; missing tokens flagged absent.
  struct Aligned {
    std::vector<std::array<double, 2>> scores;
    std::vector<char> present;
  };

  Aligned aligned_to(const Vocab& vocab) const {
    Aligned a;
    a.scores.assign(vocab.size(), {0.0, 0.0});
    a.present.assign(vocab.size(), 0);
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (const auto* s = find(vocab.token(static_cast<std::int32_t>(i)))) {
        a.scores[i] = *s;
        a.present[i] = 1;
      }
    return a;
  }

  /// Population mean and variance per class.
  std::array<std::array<double, 2>, 2> moments() const {
    std::array<std::array<double, 2>, 2> m{};
    if (scores_.empty()) return m;
    for (int c = 0; c < 2; ++c) {
      double mean = 0;
      for (const auto& s : scores_) mean += s[c];
      mean /= static_cast<double>(scores_.size());
      double var = 0;
      for (const auto& s : scores_) var += (s[c] - mean) * (s[c] - mean);
      m[c] = {mean, var / static_cast<double>(scores_.size())};
    }
    return m;
  }

  /// TSV: token, aggression_score, loss_score with 9 decimals.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write lexicon: " + path.string());
    char buf[64];
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out << tokens_[i];
      for (int c = 0; c < 2; ++c) {
        auto r = std::to_chars(buf, buf + sizeof(buf), scores_[i][c], std::chars_format::fixed, 9);
        out << '\t';
        out.write(buf, r.ptr - buf);
      }
      out << '\n';
    }
  }

  /// Loads and re-verifies standardization within `tol`.
  static SPLexLexicon load(const std::filesystem::path& path, double tol = 1e-6) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot read lexicon: " + path.string());
    std::vector<std::string> toks;
    std::vector<std::array<double, 2>> sc;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto t1 = line.find('\t');
      auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) throw ValidationError("bad lexicon row in " + path.string());
      std::array<double, 2> s{};
      auto r1 = std::from_chars(line.data() + t1 + 1, line.data() + t2, s[0]);
      auto r2 = std::from_chars(line.data() + t2 + 1, line.data() + line.size(), s[1]);
      if (r1.ec != std::errc() || r2.ec != std::errc())
        throw ValidationError("bad lexicon value in " + path.string());
      toks.push_back(line.substr(0, t1));
      sc.push_back(s);
    }
    SPLexLexicon lex(std::move(toks), std::move(sc));
    auto m = lex.moments();
    for (int c = 0; c < 2; ++c)
      if (std::abs(m[c][0]) > tol || std::abs(m[c][1] - 1.0) > tol)
        throw ValidationError("lexicon is not standardized: " + path.string());
    return lex;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::array<double, 2>> scores_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Rescales to population mean 0 and variance 1.
inline std::vector<double> standardize(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  if (!(var > 0)) throw RuntimeError("cannot standardize constant scores");
  const double sd = std::sqrt(var);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
  // One refinement pass removes the residual rounding in mean and scale.
  double m2 = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double v2 = 0;
  for (double x : out) v2 += (x - m2) * (x - m2);
  const double sd2 = std::sqrt(v2 / n);
  for (double& x : out) x = (x - m2) / sd2;
  return out;
}

struct LexiconConfig {
  std::size_t k = 25;
  RandomWalkConfig walk;
};

struct LexiconResult {
  SPLexLexicon lexicon;
  std::array<std::vector<double>, 2> raw;  // pre-standardization probabilities
  std::array<std::size_t, 2> seeds_used{};
};

/// Induces the lexicon over tokens that have a nonzero embedding row
/// (reserved PAD/UNKNOWN excluded).
inline LexiconResult induce_lexicon(const EmbeddingMatrix& emb, const Vocab& vocab, const SeedSet& aggr,
                                    const SeedSet& loss, const LexiconConfig& cfg = {}) {
  if (emb.rows() != vocab.size()) throw ValidationError("embedding rows do not match vocabulary size");
  std::vector<std::int32_t> nodes;
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto ii = static_cast<std::int32_t>(i);
    if (ii == Vocab::kPad || ii == Vocab::kUnknown) continue;
    if (emb.row(ii).squaredNorm() > 0) nodes.push_back(ii);
  }
  RowMatrix sub(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(emb.dim()));
  std::unordered_map<std::string, std::size_t> node_of;
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    sub.row(static_cast<Eigen::Index>(r)) = emb.row(nodes[r]);
    node_of.emplace(vocab.token(nodes[r]), r);
  }
  LexicalGraph graph = build_knn_graph(sub, cfg.k);

  LexiconResult res;
  std::array<const SeedSet*, 2> sets = {&aggr, &loss};
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> ids;
    std::size_t missing = 0;
    for (const auto& w : sets[c]->words) {
      auto it = node_of.find(w);
      if (it == node_of.end())
        ++missing;
      else
        ids.push_back(it->second);
    }
    if (missing > 0)
      log::warn(std::to_string(missing) + " " + (c == 0 ? "aggression" : "loss") +
                " seed word(s) not in vocabulary; dropped");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    res.seeds_used[c] = ids.size();
    res.raw[c] = random_walk_scores(graph, ids, cfg.walk);
  }
  auto za = standardize(res.raw[0]);
  auto zl = standardize(res.raw[1]);
  std::vector<std::string> toks;
  std::vector<std::array<double, 2>> scores;
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    toks.push_back(vocab.token(nodes[r]));
    scores.push_back({za[r], zl[r]});
  }
  res.lexicon = SPLexLexicon(std::move(toks), std::move(scores));
  return res;
}

}  // namespace clex
