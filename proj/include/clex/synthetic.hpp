#pragma once

// Synthetic labeled + unlabeled tweet corpora for desk-scale runs.
//
// Each user posts a timeline of ordinary tweets and short single-class
// episodes (a burst of Aggression or Loss tweets within hours, followed by a
// quiet gap of a few days). Strong class tweets draw several words from the
// class pool; weak ones carry no class words at all and are recoverable only
// from the author's recent history and interactions. The construction is
// synthetic and says nothing about real data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "corpus.hpp"
#include "splex.hpp"

namespace clex {

struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_labeled = 5000;
  std::size_t n_unlabeled = 50000;
  std::array<double, kNumLabels> proportions{329.0 / 4936, 734.0 / 4936, 3873.0 / 4936};
  std::size_t class_pool_extra = 60;  // generated class words beyond the seeds
  std::size_t background_size = 3000;
  double weak_fraction = 0.12;       // class tweets without class words
  double other_noise = 0.03;         // Other tweets with one stray class word
  double mention_rate = 0.35;
  double retweet_rate = 0.06;
  double days = 365;
  Timestamp base_time = 1420070400;  // 2015-01-01
  std::uint64_t seed = 1;

  void validate() const {
    double s = 0;
    for (double p : proportions) {
      if (p < 0) throw ValidationError("synthetic proportions must be nonnegative");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) throw ValidationError("synthetic proportions must sum to 1");
    if (n_users < 2 && n_labeled + n_unlabeled > 0) throw ValidationError("synthetic corpus needs at least 2 users");
    if (weak_fraction < 0 || weak_fraction > 1) throw ValidationError("weak_fraction must be in [0,1]");
    if (days <= 0) throw ValidationError("days must be positive");
  }
};

struct SyntheticPools {
  std::vector<std::string> aggression, loss, background;
  std::vector<std::string> aggression_emoji, loss_emoji;
};

/// Class pools: seed words first, then generated class words. The background
/// pool is disjoint from both.
inline SyntheticPools synthetic_pools(const SyntheticSpec& spec, const SeedSet& aggr, const SeedSet& loss) {
  SyntheticPools p;
  p.aggression = aggr.words;
  p.loss = loss.words;
  for (std::size_t i = 0; i < spec.class_pool_extra; ++i) {
    p.aggression.push_back("agg" + std::to_string(i));
    p.loss.push_back("loss" + std::to_string(i));
  }
  p.aggression_emoji = {"\xF0\x9F\x98\xA1", "\xF0\x9F\x94\xAB", "\xF0\x9F\x92\xAF", "\xF0\x9F\x98\xA4"};
  p.loss_emoji = {"\xF0\x9F\x98\xA2", "\xF0\x9F\x98\xAD", "\xF0\x9F\x99\x8F", "\xF0\x9F\x92\x94"};
  std::set<std::string> taken(p.aggression.begin(), p.aggression.end());
  taken.insert(p.loss.begin(), p.loss.end());
  static constexpr const char* kOnset[] = {"b", "d", "f", "g", "h", "j", "k", "l", "m", "n",
                                           "p", "r", "s", "t", "v", "w", "z", "ch", "sh", "tr"};
  static constexpr const char* kNucleus[] = {"a", "e", "i", "o", "u", "ai", "ou", "ee"};
  static constexpr const char* kCoda[] = {"", "n", "r", "s", "t", "x", "m", "ng"};
  std::mt19937_64 rng(spec.seed ^ 0xB4C6ull);
  std::uniform_int_distribution<int> on(0, 19), nu(0, 7), co(0, 7), syl(2, 3);
  while (p.background.size() < spec.background_size) {
    std::string w;
    for (int s = syl(rng); s > 0; --s) w += std::string(kOnset[on(rng)]) + kNucleus[nu(rng)];
    w += kCoda[co(rng)];
    if (taken.insert(w).second) p.background.push_back(w);
  }
  return p;
}

struct SyntheticCorpus {
  std::vector<Tweet> labeled;
  std::vector<Tweet> unlabeled;
};

namespace detail {

/// Zipf sampler over ranks 0..n-1 with exponent s.
class Zipf {
 public:
  Zipf(std::size_t n, double s) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
    dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }
  template <class R>
  std::size_t operator()(R& rng) { return dist_(rng); }

 private:
  std::discrete_distribution<std::size_t> dist_;
};

struct SynthUser {
  std::string name;
  std::array<double, 2> disposition{};  // episode mix: aggression, loss
  double episode_rate = 0;
  std::vector<std::size_t> friends, rivals;
};

struct SynthEvent {
  std::size_t user = 0;
  double day = 0;
  Label cls = Label::Other;
  bool weak = false;
  std::size_t episode = 0;  // 0 = none
};

}  // namespace detail

inline std::array<std::size_t, kNumLabels> synthetic_label_counts(const SyntheticSpec& spec) {
  std::array<std::size_t, kNumLabels> counts{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c + 1 < kNumLabels; ++c) {
    counts[c] = static_cast<std::size_t>(std::llround(spec.proportions[c] * static_cast<double>(spec.n_labeled)));
    assigned += counts[c];
  }
  counts[kNumLabels - 1] = spec.n_labeled - std::min(assigned, spec.n_labeled);
  return counts;
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, const SeedSet& aggr, const SeedSet& loss) {
  using detail::SynthEvent;
  spec.validate();
  SyntheticCorpus out;
  const std::size_t total = spec.n_labeled + spec.n_unlabeled;
  if (total == 0) return out;

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto pools = synthetic_pools(spec, aggr, loss);

  // Users: a third lean aggressive, a third grieving, the rest mixed or calm.
  std::vector<detail::SynthUser> users(spec.n_users);
  for (std::size_t u = 0; u < users.size(); ++u) {
    auto& usr = users[u];
    usr.name = "user" + std::to_string(u);
    const double r = unif(rng);
    if (r < 0.3) usr.disposition = {0.85, 0.15};
    else if (r < 0.65) usr.disposition = {0.1, 0.9};
    else usr.disposition = {0.4, 0.6};
    usr.episode_rate = 0.5 + unif(rng);
  }
  std::uniform_int_distribution<std::size_t> pick_user(0, users.size() - 1);
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (int k = 0; k < 6; ++k) {
      auto v = pick_user(rng);
      if (v != u) users[u].friends.push_back(v);
    }
    for (int k = 0; k < 3; ++k) {
      auto v = pick_user(rng);
      if (v != u) users[u].rivals.push_back(v);
    }
    if (users[u].friends.empty()) users[u].friends.push_back((u + 1) % users.size());
    if (users[u].rivals.empty()) users[u].rivals.push_back((u + 2) % users.size());
  }

  // Class fraction of the whole stream matches the labeled proportions, with
  // a small surplus of class tweets so exact labeled counts can be drawn.
  const double class_share = std::min(0.9, (spec.proportions[0] + spec.proportions[1]) * 1.05);
  std::vector<double> weight(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) weight[u] = users[u].episode_rate;
  double wsum = 0;
  for (double w : weight) wsum += w;

  // Per-user tweet budgets.
  std::vector<std::size_t> budget(users.size(), total / users.size());
  for (std::size_t i = 0; i < total % users.size(); ++i) ++budget[i];

  std::vector<SynthEvent> events;
  events.reserve(total + 16);
  std::size_t episode_id = 0;
  std::uniform_int_distribution<int> burst(2, 6);
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& usr = users[u];
    const double share = std::min(0.9, class_share * usr.episode_rate * static_cast<double>(users.size()) / wsum);
    const std::size_t class_total =
        std::min(budget[u], static_cast<std::size_t>(std::llround(share * static_cast<double>(budget[u]))));
    std::size_t n_class = class_total;
    // Blocks: episode sizes summing to n_class, plus single Other tweets.
    std::vector<std::pair<Label, int>> blocks;
    while (n_class > 0) {
      int k = std::min<int>(burst(rng), static_cast<int>(n_class));
      const Label c = unif(rng) < usr.disposition[0] ? Label::Aggression : Label::Loss;
      blocks.emplace_back(c, k);
      n_class -= static_cast<std::size_t>(k);
    }
    const std::size_t n_other = budget[u] - class_total;
    for (std::size_t i = 0; i < n_other; ++i) blocks.emplace_back(Label::Other, 1);
    std::shuffle(blocks.begin(), blocks.end(), rng);

    // Time layout: episodes are followed by a quiet gap of 2.5-4 days.
    std::size_t n_episodes = 0;
    for (const auto& b : blocks) n_episodes += b.first != Label::Other;
    const double quiet = 3.0 * static_cast<double>(n_episodes);
    const double other_gap = std::max(0.05, (spec.days - quiet) / static_cast<double>(blocks.size() + 1));
    std::exponential_distribution<double> gap(1.0 / other_gap);
    double day = gap(rng) * unif(rng);
    for (const auto& [cls, k] : blocks) {
      if (cls == Label::Other) {
        events.push_back({u, day, Label::Other, false, 0});
        day += gap(rng);
        continue;
      }
      ++episode_id;
      for (int i = 0; i < k; ++i) {
        // Only non-leading tweets go weak; scaled so the overall rate matches.
        const bool weak = i > 0 && unif(rng) < spec.weak_fraction * k / std::max(1, k - 1);
        events.push_back({u, day, cls, weak, episode_id});
        day += (10.0 + 170.0 * unif(rng)) / (24.0 * 60.0);
      }
      day += 2.5 + 1.5 * unif(rng);
    }
  }

  // Chronological order; ids assigned in that order.
  std::stable_sort(events.begin(), events.end(), [](const SynthEvent& a, const SynthEvent& b) { return a.day < b.day; });

  detail::Zipf bg_zipf(pools.background.size(), 1.05);
  detail::Zipf agg_zipf(pools.aggression.size(), 0.6);
  detail::Zipf loss_zipf(pools.loss.size(), 0.6);
  std::uniform_int_distribution<int> len_bg(5, 12), n_cls(2, 4);

  std::vector<Tweet> all;
  all.reserve(events.size());
  std::vector<Label> latent;
  latent.reserve(events.size());
  // Recent tweets per user for retweeting: (index into all).
  std::vector<std::vector<std::size_t>> recent(users.size());

  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    const auto& usr = users[ev.user];
    Tweet t;
    t.id = "t" + std::to_string(e);
    t.author = usr.name;
    t.timestamp = spec.base_time + static_cast<Timestamp>(std::llround(ev.day * 86400.0));
    if (!all.empty() && t.timestamp <= all.back().timestamp) t.timestamp = all.back().timestamp + 1;

    // Retweet an earlier tweet of the same class by a friend.
    bool retweeted = false;
    if (unif(rng) < spec.retweet_rate) {
      const auto src = usr.friends[std::uniform_int_distribution<std::size_t>(0, usr.friends.size() - 1)(rng)];
      for (auto it = recent[src].rbegin(); it != recent[src].rend() && it - recent[src].rbegin() < 8; ++it) {
        const auto& cand = all[*it];
        if (latent[*it] != ev.cls || cand.retweet_source) continue;
        if (t.timestamp - cand.timestamp > 3 * 86400) break;
        t.text = "RT @" + cand.author + ": " + cand.text;
        t.retweet_source = cand.author;
        retweeted = true;
        break;
      }
    }
    if (!retweeted) {
      std::vector<std::string> words;
      const int n = len_bg(rng);
      for (int i = 0; i < n; ++i) words.push_back(pools.background[bg_zipf(rng)]);
      auto insert = [&](const std::string& w) {
        auto pos = std::uniform_int_distribution<std::size_t>(0, words.size())(rng);
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), w);
      };
      if (ev.cls != Label::Other && !ev.weak) {
        const bool a = ev.cls == Label::Aggression;
        for (int i = n_cls(rng); i > 0; --i)
          insert(a ? pools.aggression[agg_zipf(rng)] : pools.loss[loss_zipf(rng)]);
        if (unif(rng) < 0.3) {
          const auto& em = a ? pools.aggression_emoji : pools.loss_emoji;
          words.push_back(em[std::uniform_int_distribution<std::size_t>(0, em.size() - 1)(rng)]);
        }
      } else if (ev.cls == Label::Other && unif(rng) < spec.other_noise) {
        insert(unif(rng) < 0.5 ? pools.aggression[agg_zipf(rng)] : pools.loss[loss_zipf(rng)]);
      }
      // Aggression addresses rivals, Loss and weak tweets address friends.
      const bool weak_class = ev.cls != Label::Other && ev.weak;
      if (weak_class || unif(rng) < spec.mention_rate) {
        const auto& circle = ev.cls == Label::Aggression ? usr.rivals : usr.friends;
        const auto v = circle[std::uniform_int_distribution<std::size_t>(0, circle.size() - 1)(rng)];
        words.insert(words.begin(), "@" + users[v].name);
      }
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      t.text = std::move(text);
    }
    latent.push_back(ev.cls);
    recent[ev.user].push_back(all.size());
    all.push_back(std::move(t));
  }

  // Exact labeled counts per class, drawn uniformly from the latent classes.
  const auto counts = synthetic_label_counts(spec);
  std::vector<char> is_labeled(all.size(), 0);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (index_of(latent[i]) == c) pool.push_back(i);
    if (pool.size() < counts[c])
      throw RuntimeError("synthetic stream too small for requested " + std::string(to_string(kLabels[c])) + " count");
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < counts[c]; ++k) is_labeled[pool[k]] = 1;
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (is_labeled[i]) {
      all[i].label = latent[i];
      out.labeled.push_back(std::move(all[i]));
    } else {
      out.unlabeled.push_back(std::move(all[i]));
    }
  }
  return out;
}

}  // namespace clex
