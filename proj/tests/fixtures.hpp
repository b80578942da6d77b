#pragma once

// Random annotated corpora shared by unit and acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "clex/context.hpp"

namespace clex::test {

struct ContextWorld {
  Vocab vocab;
  EmbeddingMatrix emb;
  SPLexLexicon::Aligned lexicon;
};

/// Vocabulary w0..w{n-1}, random embeddings and lexicon scores for every
/// content token except the last two (out of lexicon).
inline ContextWorld make_world(std::size_t n_words, Eigen::Index dim, std::mt19937_64& rng) {
  ContextWorld w;
  for (std::size_t i = 0; i < n_words; ++i) w.vocab.push("w" + std::to_string(i));
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix m(static_cast<Eigen::Index>(w.vocab.size()), dim);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = g(rng);
  m.row(Vocab::kPad).setZero();
  w.emb = EmbeddingMatrix(std::move(m), EmbeddingKind::External);
  w.lexicon.scores.assign(w.vocab.size(), {0.0, 0.0});
  w.lexicon.present.assign(w.vocab.size(), 0);
  for (std::size_t i = Vocab::kNumReserved; i + 2 < w.vocab.size(); ++i) {
    w.lexicon.scores[i] = {g(rng), g(rng)};
    w.lexicon.present[i] = 1;
  }
  return w;
}

/// Random annotated tweets with authors, retweets and mentions among
/// `n_users` users, timestamps spread over `days`.
inline std::vector<Tweet> random_tweets(std::size_t n, std::size_t n_users, std::size_t n_words, double days,
                                        std::mt19937_64& rng, const std::string& id_prefix = "t") {
  std::uniform_int_distribution<std::size_t> user(0, n_users - 1), word(0, n_words + 1), len(0, 12);
  std::uniform_real_distribution<double> when(0.0, days * 86400.0), u(0.0, 1.0);
  std::vector<Tweet> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tweet t;
    t.id = id_prefix + std::to_string(i);
    t.author = "u" + std::to_string(user(rng));
    // Coarse timestamps so ties occur.
    t.timestamp = 1420070400 + static_cast<Timestamp>(when(rng)) / 3600 * 3600;
    for (std::size_t k = len(rng); k > 0; --k) {
      const auto w = word(rng);
      t.tokens.push_back(w < n_words ? "w" + std::to_string(w) : (w == n_words ? "user" : "oov"));
    }
    if (u(rng) < 0.2) t.retweet_source = "u" + std::to_string(user(rng));
    if (u(rng) < 0.5) t.mentions.push_back("u" + std::to_string(user(rng)));
    if (u(rng) < 0.2) t.mentions.push_back("u" + std::to_string(user(rng)));
    t.text = "synthetic";
    out.push_back(std::move(t));
  }
  return out;
}

/// Bundle of `corpus.tweets[target]` computed over a fresh corpus/timeline.
inline ContextBundle bundle_for(const std::vector<Tweet>& tweets, std::size_t target, const ContextWorld& w,
                                const HistoryConfig& emb_cfg = default_embedding_history(),
                                const HistoryConfig& splex_cfg = default_splex_history()) {
  ContextCorpus corpus(tweets, w.vocab);
  Timeline tl(corpus);
  ContextResources r{&corpus, &tl, &w.emb, &w.lexicon, emb_cfg, splex_cfg};
  return context_bundle(corpus.tweets[target], r);
}

/// Applies one random change to `t`, keeping its timestamp >= `floor`.
inline void mutate_tweet(Tweet& t, Timestamp floor, std::size_t n_users, std::size_t n_words, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> user(0, n_users - 1), word(0, n_words - 1);
  switch (rng() % 6) {
    case 0:
      t.tokens.push_back("w" + std::to_string(word(rng)));
      break;
    case 1:
      t.tokens.clear();
      break;
    case 2:
      t.author = "u" + std::to_string(user(rng));
      break;
    case 3:
      t.mentions.push_back("u" + std::to_string(user(rng)));
      break;
    case 4:
      t.retweet_source = "u" + std::to_string(user(rng));
      break;
    default:
      t.timestamp = floor + static_cast<Timestamp>(rng() % (30 * 86400));
      break;
  }
}

}  // namespace clex::test
