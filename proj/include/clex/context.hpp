#pragma once

// User-history and user-interaction context features.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"
#include "splex.hpp"

namespace clex {

inline constexpr double kSecondsPerDay = 86400.0;

enum class Combine { Sum, Avg };
enum class Representation { Embedding, SPLex };

enum Involvement : unsigned {
  kSelf = 1u << 0,     // authored
  kRetweet = 1u << 1,  // user is the retweet source
  kMention = 1u << 2,  // user is mentioned
};

struct HistoryConfig {
  double window_days = 90.0;
  std::optional<double> half_life_ratio = 0.25;
  Combine combine_word = Combine::Avg;
  Combine combine_tweet = Combine::Avg;
  unsigned include = kSelf;
  Representation representation = Representation::Embedding;

  void validate() const {
    if (!(window_days > 0)) throw ValidationError("history window must be positive");
    if ((include & (kSelf | kRetweet | kMention)) == 0)
      throw ValidationError("history must include at least one involvement kind");
    if (half_life_ratio && !(*half_life_ratio > 0 && *half_life_ratio <= 1))
      throw ValidationError("half-life ratio must lie in (0, 1]");
  }
};

/// Averaged words and tweets over 90 days of SELF posts, half-life 0.25.
inline HistoryConfig default_embedding_history() { return {}; }

/// Summed words and tweets over 2 days of SELF and RETWEET posts, no decay.
inline HistoryConfig default_splex_history() {
  return {2.0, std::nullopt, Combine::Sum, Combine::Sum, kSelf | kRetweet, Representation::SPLex};
}

/// 2^(-dt/f) with f = d * r; 1 without decay.
inline double half_life_weight(double delta_days, const HistoryConfig& cfg) {
  if (delta_days < 0) throw ValidationError("context tweet newer than target");
  if (!cfg.half_life_ratio) return 1.0;
  const double f = cfg.window_days * *cfg.half_life_ratio;
  return std::exp2(-delta_days / f);
}

/// Annotated tweets (labeled and unlabeled) with their vocabulary indices.
struct ContextCorpus {
  std::vector<Tweet> tweets;
  std::vector<std::vector<std::int32_t>> indices;
  std::unordered_map<std::string, std::size_t> by_id;

  ContextCorpus() = default;
  ContextCorpus(std::vector<Tweet> ts, const Vocab& vocab) : tweets(std::move(ts)) {
    indices.reserve(tweets.size());
    for (std::size_t i = 0; i < tweets.size(); ++i) {
      indices.push_back(index_tokens(tweets[i].tokens, vocab));
      by_id.emplace(tweets[i].id, i);
    }
  }
};

/// Canonical names involved in a tweet, each with its involvement kinds.
inline std::map<std::string, unsigned> involved_users(const Tweet& t) {
  std::map<std::string, unsigned> out;
  out[canonical_name(t.author)] |= kSelf;
  if (t.retweet_source) out[canonical_name(*t.retweet_source)] |= kRetweet;
  for (const auto& m : t.mentions) out[canonical_name(m)] |= kMention;
  return out;
}

struct TimelineEntry {
  Timestamp timestamp = 0;
  std::size_t tweet = 0;
  unsigned kinds = 0;
};

/// Per-user chronological involvements; also indexes mutual tweets per pair.
class Timeline {
 public:
  explicit Timeline(const ContextCorpus& corpus) {
    for (std::size_t i = 0; i < corpus.tweets.size(); ++i) {
      const auto& t = corpus.tweets[i];
      auto users = involved_users(t);
      for (const auto& [u, kinds] : users) by_user_[u].push_back({t.timestamp, i, kinds});
      for (auto a = users.begin(); a != users.end(); ++a)
        for (auto b = std::next(a); b != users.end(); ++b)
          by_pair_[{a->first, b->first}].push_back({t.timestamp, i, 0});
    }
    auto order = [&](const TimelineEntry& x, const TimelineEntry& y) {
      return x.timestamp != y.timestamp ? x.timestamp < y.timestamp : x.tweet < y.tweet;
    };
    for (auto& [u, v] : by_user_) std::sort(v.begin(), v.end(), order);
    for (auto& [p, v] : by_pair_) std::sort(v.begin(), v.end(), order);
  }

  const std::vector<TimelineEntry>& user(const std::string& name) const {
    auto it = by_user_.find(canonical_name(name));
    return it == by_user_.end() ? empty_ : it->second;
  }

  const std::vector<TimelineEntry>& mutual(const std::string& a, const std::string& b) const {
    auto ca = canonical_name(a), cb = canonical_name(b);
    if (cb < ca) std::swap(ca, cb);
    auto it = by_pair_.find({ca, cb});
    return it == by_pair_.end() ? empty_ : it->second;
  }

  const std::map<std::string, std::vector<TimelineEntry>>& users() const { return by_user_; }

 private:
  std::map<std::string, std::vector<TimelineEntry>> by_user_;
  std::map<std::pair<std::string, std::string>, std::vector<TimelineEntry>> by_pair_;
  std::vector<TimelineEntry> empty_;
};

/// Strictly earlier involvements of `user` within the window, filtered by kind.
inline std::vector<std::size_t> user_history_window(const std::string& user, Timestamp t,
                                                    const Timeline& timeline, const HistoryConfig& cfg) {
  std::vector<std::size_t> out;
  for (const auto& e : timeline.user(user)) {
    if (e.timestamp >= t) break;
    const double delta_days = static_cast<double>(t - e.timestamp) / kSecondsPerDay;
    if (delta_days >= cfg.window_days) continue;
    if (e.kinds & cfg.include) out.push_back(e.tweet);
  }
  return out;
}

/// Sum or mean of word vectors; PAD/UNKNOWN rows excluded.
inline Eigen::VectorXd tweet_repr(std::span<const std::int32_t> tokens, const EmbeddingMatrix& emb, Combine mode) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.dim()));
  std::size_t n = 0;
  for (auto t : tokens) {
    if (t == Vocab::kPad || t == Vocab::kUnknown) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= emb.rows()) continue;
    v += emb.row(t).transpose();
    ++n;
  }
  if (mode == Combine::Avg && n > 0) v /= static_cast<double>(n);
  return v;
}

/// Sum or mean of lexicon score pairs over tokens present in the lexicon.
inline Eigen::VectorXd tweet_repr(std::span<const std::int32_t> tokens, const SPLexLexicon::Aligned& lex,
                                  Combine mode) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2);
  std::size_t n = 0;
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= lex.present.size() || !lex.present[static_cast<std::size_t>(t)])
      continue;
    v(0) += lex.scores[static_cast<std::size_t>(t)][0];
    v(1) += lex.scores[static_cast<std::size_t>(t)][1];
    ++n;
  }
  if (mode == Combine::Avg && n > 0) v /= static_cast<double>(n);
  return v;
}

/// Decay-weighted combination of per-tweet representations; the average
/// divides by the total weight.
template <class Source>
Eigen::VectorXd history_vector(const std::vector<std::size_t>& history, Timestamp t, const ContextCorpus& corpus,
                               const Source& source, const HistoryConfig& cfg, Eigen::Index dim) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  double total_w = 0;
  for (auto i : history) {
    const auto& tw = corpus.tweets[i];
    if (tw.timestamp >= t) throw ValidationError("history tweet does not precede target");
    const double w = half_life_weight(static_cast<double>(t - tw.timestamp) / kSecondsPerDay, cfg);
    acc += w * tweet_repr(corpus.indices[i], source, cfg.combine_word);
    total_w += w;
  }
  if (cfg.combine_tweet == Combine::Avg && total_w > 0) acc /= total_w;
  return acc;
}

/// Mean embedding over the concatenated tokens of tweets involving both
/// users, restricted to tweets strictly before `before` when given.
inline Eigen::VectorXd pairwise_interaction_vector(const std::string& a, const std::string& b,
                                                   const ContextCorpus& corpus, const Timeline& timeline,
                                                   const EmbeddingMatrix& emb,
                                                   std::optional<Timestamp> before = std::nullopt) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.dim()));
  if (canonical_name(a) == canonical_name(b)) return sum;
  std::size_t n = 0;
  for (const auto& e : timeline.mutual(a, b)) {
    if (before && e.timestamp >= *before) break;
    for (auto tok : corpus.indices[e.tweet]) {
      if (tok == Vocab::kPad || tok == Vocab::kUnknown) continue;
      sum += emb.row(tok).transpose();
      ++n;
    }
  }
  if (n > 0) sum /= static_cast<double>(n);
  return sum;
}

/// Mean embedding over every token the user authored.
inline Eigen::VectorXd user_profile_vector(const std::string& user, const ContextCorpus& corpus,
                                           const Timeline& timeline, const EmbeddingMatrix& emb) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.dim()));
  std::size_t n = 0;
  for (const auto& e : timeline.user(user)) {
    if (!(e.kinds & kSelf)) continue;
    for (auto tok : corpus.indices[e.tweet]) {
      if (tok == Vocab::kPad || tok == Vocab::kUnknown) continue;
      sum += emb.row(tok).transpose();
      ++n;
    }
  }
  if (n > 0) sum /= static_cast<double>(n);
  return sum;
}

struct ContextBundle {
  Eigen::VectorXd emb_history;
  Eigen::VectorXd splex_history;
  Eigen::VectorXd interaction;

  Eigen::Index dim() const { return emb_history.size() + splex_history.size() + interaction.size(); }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(dim());
    out << emb_history, splex_history, interaction;
    return out;
  }

  bool operator==(const ContextBundle& o) const {
    return emb_history == o.emb_history && splex_history == o.splex_history && interaction == o.interaction;
  }
};

struct ContextResources {
  const ContextCorpus* corpus = nullptr;
  const Timeline* timeline = nullptr;
  const EmbeddingMatrix* emb = nullptr;
  const SPLexLexicon::Aligned* lexicon = nullptr;
  HistoryConfig emb_cfg = default_embedding_history();
  HistoryConfig splex_cfg = default_splex_history();
};

/// Bundle for `tweet`; every feature uses only tweets strictly earlier than it.
inline ContextBundle context_bundle(const Tweet& tweet, const ContextResources& r) {
  const auto& corpus = *r.corpus;
  const auto& tl = *r.timeline;
  const auto dim = static_cast<Eigen::Index>(r.emb->dim());
  ContextBundle b;
  auto emb_cfg = r.emb_cfg;
  emb_cfg.representation = Representation::Embedding;
  auto splex_cfg = r.splex_cfg;
  splex_cfg.representation = Representation::SPLex;

  auto h1 = user_history_window(tweet.author, tweet.timestamp, tl, emb_cfg);
  b.emb_history = history_vector(h1, tweet.timestamp, corpus, *r.emb, emb_cfg, dim);
  auto h2 = user_history_window(tweet.author, tweet.timestamp, tl, splex_cfg);
  b.splex_history = history_vector(h2, tweet.timestamp, corpus, *r.lexicon, splex_cfg, 2);

  std::vector<std::string> refs;
  const auto author = canonical_name(tweet.author);
  auto add = [&](const std::string& u) {
    auto c = canonical_name(u);
    if (c != author && std::find(refs.begin(), refs.end(), c) == refs.end()) refs.push_back(c);
  };
  if (tweet.retweet_source) add(*tweet.retweet_source);
  for (const auto& m : tweet.mentions) add(m);
  b.interaction = Eigen::VectorXd::Zero(dim);
  for (const auto& u : refs)
    b.interaction += pairwise_interaction_vector(author, u, corpus, tl, *r.emb, tweet.timestamp);
  if (!refs.empty()) b.interaction /= static_cast<double>(refs.size());
  return b;
}

/// TSV: id then all bundle values (history, SPLex history, interaction).
inline void save_context_bundles(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, ContextBundle>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write context file: " + path.string());
  char buf[32];
  for (const auto& [id, b] : rows) {
    out << id;
    auto flat = b.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      auto r = std::to_chars(buf, buf + sizeof(buf), flat(i), std::chars_format::general, 9);
      out << '\t';
      out.write(buf, r.ptr - buf);
    }
    out << '\n';
  }
}

inline std::unordered_map<std::string, ContextBundle> load_context_bundles(const std::filesystem::path& path,
                                                                           Eigen::Index emb_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read context file: " + path.string());
  std::unordered_map<std::string, ContextBundle> out;
  const Eigen::Index total = 2 * emb_dim + 2;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ValidationError("bad context row in " + path.string());
    Eigen::VectorXd flat(total);
    const char* p = line.data() + tab;
    const char* end = line.data() + line.size();
    for (Eigen::Index i = 0; i < total; ++i) {
      if (p >= end || *p != '\t') throw ValidationError("short context row in " + path.string());
      ++p;
      auto r = std::from_chars(p, end, flat(i));
      if (r.ec != std::errc()) throw ValidationError("bad context value in " + path.string());
      p = r.ptr;
    }
    ContextBundle b;
    b.emb_history = flat.head(emb_dim);
    b.splex_history = flat.segment(emb_dim, 2);
    b.interaction = flat.tail(emb_dim);
    out.emplace(line.substr(0, tab), std::move(b));
  }
  return out;
}

}  // namespace clex
