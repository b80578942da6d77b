#pragma once

// Stratified folds, per-class metrics, run aggregation and the approximate
// randomization significance test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "common.hpp"

namespace clex {

struct Fold {
  std::vector<std::size_t> train, validation, test;  // ascending indices
};

inline constexpr double kValidationFraction = 0.2;  // of the non-test part: 16% of the data

/// Per-class seeded shuffle, then round-robin over folds with a pointer that
/// carries across classes so fold sizes stay within one of each other.
inline std::vector<Fold> stratified_folds(std::span<const Label> labels, std::size_t k, std::uint64_t seed,
                                          double validation_fraction = kValidationFraction) {
  if (k < 2) throw ValidationError("need at least 2 folds");
  std::array<std::vector<std::size_t>, kNumLabels> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(index_of(labels[i]))].push_back(i);
  for (std::size_t c = 0; c < kNumLabels; ++c)
    if (by_class[static_cast<std::size_t>(c)].size() < k)
      throw ValidationError("class " + std::string(to_string(kLabels[static_cast<std::size_t>(c)])) + " has fewer than " +
                            std::to_string(k) + " examples");

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> fold_of_class(kNumLabels * k);
  std::size_t ptr = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& ids = by_class[static_cast<std::size_t>(c)];
    std::shuffle(ids.begin(), ids.end(), rng);
    for (auto id : ids) fold_of_class[static_cast<std::size_t>(c) * k + (ptr++ % k)].push_back(id);
  }

  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    auto& fold = folds[f];
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      std::vector<std::size_t> rest;
      // Remaining examples in the class's shuffled order.
      for (std::size_t g = 1; g < k; ++g) {
        const auto& part = fold_of_class[static_cast<std::size_t>(c) * k + (f + g) % k];
        rest.insert(rest.end(), part.begin(), part.end());
      }
      const auto& test = fold_of_class[static_cast<std::size_t>(c) * k + f];
      fold.test.insert(fold.test.end(), test.begin(), test.end());
      // Validation size absorbs half the test rounding error so that every
      // split stays within one example of its share of the class.
      const double n = static_cast<double>(rest.size() + test.size());
      const double test_err = static_cast<double>(test.size()) - n / static_cast<double>(k);
      const double ideal = n * (1.0 - 1.0 / static_cast<double>(k)) * validation_fraction - test_err / 2;
      const auto nval = static_cast<std::size_t>(std::clamp<long long>(std::llround(ideal), 0, static_cast<long long>(rest.size())));
      fold.validation.insert(fold.validation.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(nval));
      fold.train.insert(fold.train.end(), rest.begin() + static_cast<std::ptrdiff_t>(nval), rest.end());
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.validation.begin(), fold.validation.end());
    std::sort(fold.test.begin(), fold.test.end());
  }
  return folds;
}

struct ClassScores {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

struct EvalReport {
  std::array<ClassScores, kNumLabels> per_class;
  double macro_f1 = 0;
};

inline ClassScores class_scores(std::span<const Label> pred, std::span<const Label> gold, Label c) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == c, g = gold[i] == c;
    tp += p && g, fp += p && !g, fn += !p && g;
  }
  ClassScores s;
  s.support = tp + fn;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
  return s;
}

inline EvalReport metrics(std::span<const Label> pred, std::span<const Label> gold) {
  if (pred.size() != gold.size()) throw ValidationError("prediction and gold lengths differ");
  if (gold.empty()) throw ValidationError("empty prediction list");
  EvalReport r;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    r.per_class[static_cast<std::size_t>(c)] = class_scores(pred, gold, kLabels[static_cast<std::size_t>(c)]);
    r.macro_f1 += r.per_class[static_cast<std::size_t>(c)].f1;
  }
  r.macro_f1 /= kNumLabels;
  return r;
}

/// Element-wise mean of several reports (the per-run averaging mode).
inline EvalReport mean_report(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ValidationError("no reports to average");
  EvalReport m;
  for (const auto& r : reports) {
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      m.per_class[c].precision += r.per_class[c].precision;
      m.per_class[c].recall += r.per_class[c].recall;
      m.per_class[c].f1 += r.per_class[c].f1;
      m.per_class[c].support += r.per_class[c].support;
    }
  }
  const double n = static_cast<double>(reports.size());
  m.macro_f1 = 0;
  for (auto& c : m.per_class) {
    c.precision /= n, c.recall /= n, c.f1 /= n;
    c.support = static_cast<std::size_t>(std::llround(static_cast<double>(c.support) / n));
    m.macro_f1 += c.f1;
  }
  m.macro_f1 /= kNumLabels;
  return m;
}

/// Modal label per position; ties go to Aggression, then Loss, then Other.
inline std::vector<Label> majority_vote(const std::vector<std::vector<Label>>& runs) {
  if (runs.empty()) throw ValidationError("majority vote over zero runs");
  const std::size_t n = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != n) throw ValidationError("runs differ in length");
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<int, kNumLabels> votes{};
    for (const auto& r : runs) ++votes[static_cast<std::size_t>(index_of(r[i]))];
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumLabels; ++c)
      if (votes[c] > votes[best]) best = c;
    out[i] = kLabels[best];
  }
  return out;
}

namespace detail {

struct F1Counts {
  long tp = 0, fp = 0, fn = 0;
  double f1() const { return tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0; }
  void add(bool pred, bool gold, int sign = 1) {
    tp += sign * (pred && gold), fp += sign * (pred && !gold), fn += sign * (!pred && gold);
  }
};

inline constexpr double kStatTolerance = 1e-12;

}  // namespace detail

/// Monte-Carlo paired permutation test on the F1 of class `cls`:
/// p = (#{shuffled |dF| >= observed |dF|} + 1) / (shuffles + 1).
/// Shards draw from streams derived from `seed`, so results depend on the
/// shard count but not on scheduling.
inline double approx_randomization_test(std::span<const Label> a, std::span<const Label> b,
                                        std::span<const Label> gold, Label cls, std::size_t shuffles = 10000,
                                        std::uint64_t seed = 1, std::size_t shards = 1) {
  if (a.size() != gold.size() || b.size() != gold.size()) throw ValidationError("ART inputs not aligned");
  if (shuffles < 1) throw ValidationError("ART needs at least one shuffle");
  if (shards < 1) shards = 1;
  detail::F1Counts ca, cb;
  std::vector<std::size_t> diff;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == cls;
    ca.add(a[i] == cls, g);
    cb.add(b[i] == cls, g);
    if ((a[i] == cls) != (b[i] == cls)) diff.push_back(i);
  }
  const double observed = std::abs(ca.f1() - cb.f1());

  // Only positions where the two systems disagree on `cls` change the counts
  // when swapped.
  auto run = [&](std::size_t shard, std::size_t count) {
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (shard + 1)));
    std::bernoulli_distribution coin(0.5);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < count; ++s) {
      detail::F1Counts x = ca, y = cb;
      for (auto i : diff) {
        if (!coin(rng)) continue;
        const bool g = gold[i] == cls;
        const bool pa = a[i] == cls, pb = b[i] == cls;
        x.add(pa, g, -1), x.add(pb, g);
        y.add(pb, g, -1), y.add(pa, g);
      }
      if (std::abs(x.f1() - y.f1()) >= observed - detail::kStatTolerance) ++hits;
    }
    return hits;
  };

  std::vector<std::size_t> hits(shards, 0);
  if (shards == 1) {
    hits[0] = run(0, shuffles);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t count = shuffles / shards + (s < shuffles % shards ? 1 : 0);
      pool.emplace_back([&, s, count] { hits[s] = run(s, count); });
    }
    for (auto& t : pool) t.join();
  }
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total + 1) / static_cast<double>(shuffles + 1);
}

inline std::vector<double> bonferroni(std::span<const double> p, std::size_t m) {
  if (m < 1) throw ValidationError("Bonferroni comparison count must be >= 1");
  if (m < p.size()) throw ValidationError("Bonferroni comparison count below number of p-values");
  std::vector<double> out;
  out.reserve(p.size());
  for (double v : p) out.push_back(std::min(1.0, v * static_cast<double>(m)));
  return out;
}

}  // namespace clex
