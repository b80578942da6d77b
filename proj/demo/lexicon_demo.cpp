// Induces a lexicon from a small synthetic corpus and prints the tokens
// scoring highest for each class.

#include <algorithm>
#include <iostream>
#include <numeric>

#include "clex/clex.hpp"

int main() {
  clex::log::set_quiet(true);
  clex::SyntheticSpec spec;
  spec.n_users = 120;
  spec.n_labeled = 600;
  spec.n_unlabeled = 6000;
  const auto aggr = clex::default_aggression_seeds();
  const auto loss = clex::default_loss_seeds();
  auto corpus = clex::generate_synthetic(spec, aggr, loss);

  std::vector<clex::Tweet> all = corpus.labeled;
  all.insert(all.end(), corpus.unlabeled.begin(), corpus.unlabeled.end());
  std::vector<std::vector<std::string>> tokens;
  for (auto& t : all) tokens.push_back(t.tokens = clex::normalize_tweet(t.text));
  const auto vocab = clex::build_vocab(tokens);
  std::vector<std::vector<std::int32_t>> ids;
  for (const auto& t : tokens) ids.push_back(clex::index_tokens(t, vocab));

  const auto counts = clex::build_cooccurrence(ids, vocab.size());
  const auto emb = clex::svd_embed(clex::compute_ppmi(counts), 100);
  const auto lex = clex::induce_lexicon(emb, vocab, aggr, loss).lexicon;

  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> order(lex.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return lex.scores()[a][c] > lex.scores()[b][c]; });
    std::cout << (c == 0 ? "aggression:" : "loss:");
    for (std::size_t k = 0; k < 15 && k < order.size(); ++k) std::cout << ' ' << lex.tokens()[order[k]];
    std::cout << '\n';
  }
}
