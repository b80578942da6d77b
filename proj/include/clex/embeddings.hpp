#pragma once

// Word embeddings: CBOW with negative sampling, and PPMI + truncated SVD.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "common.hpp"
#include "corpus.hpp"
#include "lanczos.hpp"

namespace clex {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double>;

enum class EmbeddingKind { Cbow, Svd, External };

inline constexpr std::size_t kEmbeddingDim = 300;

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(RowMatrix values, EmbeddingKind kind) : values_(std::move(values)), kind_(kind) {
    if (!values_.allFinite()) throw RuntimeError("embedding matrix has non-finite entries");
  }

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }
  EmbeddingKind kind() const { return kind_; }
  const RowMatrix& values() const { return values_; }

  auto row(std::int32_t i) const { return values_.row(i); }

 private:
  RowMatrix values_;
  EmbeddingKind kind_ = EmbeddingKind::External;
};

namespace detail {

inline void write_double(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  out.write(buf, res.ptr - buf);
}

}  // namespace detail

/// Word-vectors text format: "<rows> <dim>" then "token v1 ... vdim" per row.
inline void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb,
                            const Vocab& vocab) {
  if (emb.rows() != vocab.size())
    throw ValidationError("embedding rows do not match vocabulary size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write embeddings: " + path.string());
  out << emb.rows() << ' ' << emb.dim() << '\n';
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    out << vocab.token(static_cast<std::int32_t>(i));
    for (std::size_t d = 0; d < emb.dim(); ++d) {
      out << ' ';
      detail::write_double(out, emb.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)));
    }
    out << '\n';
  }
}

/// Loads a word-vectors file onto `vocab` order. Tokens absent from the file
/// get zero rows; file tokens absent from the vocabulary are ignored.
inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                       EmbeddingKind kind = EmbeddingKind::External) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read embeddings: " + path.string());
  std::string line;
  std::size_t rows = 0, dim = 0;
  if (!std::getline(in, line)) throw ValidationError("empty embeddings file: " + path.string());
  {
    std::istringstream hs(line);
    if (!(hs >> rows >> dim) || dim == 0)
      throw ValidationError("bad embeddings header: " + path.string());
  }
  RowMatrix values = RowMatrix::Zero(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(dim));
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++seen;
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw ValidationError("bad embeddings row in " + path.string());
    auto idx = vocab.find(line.substr(0, sp));
    if (!idx) continue;
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    for (std::size_t d = 0; d < dim; ++d) {
      while (p < end && *p == ' ') ++p;
      double v = 0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw ValidationError("bad embeddings value in " + path.string());
      values(*idx, static_cast<Eigen::Index>(d)) = v;
      p = res.ptr;
    }
  }
  if (seen != rows) throw ValidationError("embeddings row count mismatch: " + path.string());
  return EmbeddingMatrix(std::move(values), kind);
}

// ---------------------------------------------------------------------------
// CBOW with negative sampling

struct CbowConfig {
  std::size_t dim = kEmbeddingDim;
  std::size_t window = 5;
  std::size_t min_count = 5;
  std::size_t epochs = 20;
  std::size_t negative = 5;
  double alpha = 0.025;
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // > 1 enables unsynchronized parallel updates
};

/// One training example: averaged context predicts the center against
/// explicit negative samples.
struct CbowExample {
  std::vector<std::int32_t> context;
  std::int32_t center = 0;
  std::vector<std::int32_t> negatives;
};

namespace detail {

inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// Loss of one example plus dL/dh and dL/d(score) per target (center first).
struct CbowKernel {
  Eigen::VectorXd h;
  Eigen::VectorXd grad_h;
  std::vector<double> dscore;

  double run(const RowMatrix& in, const RowMatrix& out, const CbowExample& ex) {
    const auto dim = in.cols();
    h.setZero(dim);
    for (auto c : ex.context) h += in.row(c).transpose();
    h /= static_cast<double>(ex.context.size());
    grad_h.setZero(dim);
    dscore.assign(1 + ex.negatives.size(), 0.0);
    double loss = 0;
    for (std::size_t t = 0; t <= ex.negatives.size(); ++t) {
      const auto target = t == 0 ? ex.center : ex.negatives[t - 1];
      const double y = t == 0 ? 1.0 : 0.0;
      const double s = out.row(target).dot(h);
      loss -= t == 0 ? log_sigmoid(s) : log_sigmoid(-s);
      dscore[t] = sigmoid(s) - y;
      grad_h += dscore[t] * out.row(target).transpose();
    }
    return loss;
  }
};

}  // namespace detail

inline double cbow_loss(const RowMatrix& in, const RowMatrix& out, const CbowExample& ex) {
  detail::CbowKernel k;
  return k.run(in, out, ex);
}

/// Accumulates the analytic gradient of `cbow_loss` into the two buffers.
inline double cbow_gradient(const RowMatrix& in, const RowMatrix& out, const CbowExample& ex,
                            RowMatrix& grad_in, RowMatrix& grad_out) {
  detail::CbowKernel k;
  double loss = k.run(in, out, ex);
  const double inv = 1.0 / static_cast<double>(ex.context.size());
  for (auto c : ex.context) grad_in.row(c) += inv * k.grad_h.transpose();
  for (std::size_t t = 0; t <= ex.negatives.size(); ++t) {
    const auto target = t == 0 ? ex.center : ex.negatives[t - 1];
    grad_out.row(target) += k.dscore[t] * k.h.transpose();
  }
  return loss;
}

struct CbowResult {
  EmbeddingMatrix embeddings;
  std::vector<double> epoch_loss;  // mean loss per example
  std::vector<std::size_t> counts;
};

/// Trains CBOW over index sequences; rows of tokens below `min_count` (and
/// PAD/UNKNOWN) stay zero.
inline CbowResult train_cbow(const std::vector<std::vector<std::int32_t>>& corpus,
                             std::size_t vocab_size, const CbowConfig& cfg) {
  if (cfg.dim == 0) throw ValidationError("embedding dimension must be positive");
  std::vector<std::size_t> counts(vocab_size, 0);
  for (const auto& s : corpus)
    for (auto t : s) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
        throw ValidationError("token index out of range");
      ++counts[static_cast<std::size_t>(t)];
    }
  std::vector<char> trainable(vocab_size, 0);
  std::vector<std::int32_t> noise_tokens;
  std::vector<double> noise_cdf;
  double acc = 0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (static_cast<std::int32_t>(i) == Vocab::kPad || static_cast<std::int32_t>(i) == Vocab::kUnknown)
      continue;
    if (counts[i] >= cfg.min_count && counts[i] > 0) {
      trainable[i] = 1;
      noise_tokens.push_back(static_cast<std::int32_t>(i));
      acc += std::pow(static_cast<double>(counts[i]), 0.75);
      noise_cdf.push_back(acc);
    }
  }
  if (noise_tokens.empty()) throw ValidationError("no trainable vocabulary");

  std::vector<std::vector<std::int32_t>> sentences;
  std::size_t total_words = 0;
  for (const auto& s : corpus) {
    std::vector<std::int32_t> kept;
    for (auto t : s)
      if (trainable[static_cast<std::size_t>(t)]) kept.push_back(t);
    total_words += kept.size();
    if (!kept.empty()) sentences.push_back(std::move(kept));
  }

  const auto rows = static_cast<Eigen::Index>(vocab_size);
  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  RowMatrix in = RowMatrix::Zero(rows, dim);
  RowMatrix out = RowMatrix::Zero(rows, dim);
  {
    std::mt19937_64 init_rng(cfg.seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (Eigen::Index i = 0; i < rows; ++i)
      if (trainable[static_cast<std::size_t>(i)])
        for (Eigen::Index d = 0; d < dim; ++d) in(i, d) = u(init_rng) / static_cast<double>(cfg.dim);
  }

  const double budget = static_cast<double>(cfg.epochs) * static_cast<double>(total_words) + 1.0;
  const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
  std::vector<double> epoch_loss;

  auto run_shard = [&](std::size_t epoch, std::size_t shard, double& loss_sum, std::size_t& n_ex) {
    std::mt19937_64 rng(cfg.seed * 1000003ULL + epoch * 7919ULL + shard);
    std::uniform_real_distribution<double> unif(0.0, noise_cdf.back());
    detail::CbowKernel kernel;
    CbowExample ex;
    std::size_t processed = epoch * total_words;
    for (std::size_t si = shard; si < sentences.size(); si += threads) {
      const auto& s = sentences[si];
      const double alpha =
          cfg.alpha * std::max(1e-4, 1.0 - static_cast<double>(processed) / budget);
      processed += s.size() * threads;
      for (std::size_t pos = 0; pos < s.size(); ++pos) {
        ex.context.clear();
        const std::size_t lo = pos >= cfg.window ? pos - cfg.window : 0;
        const std::size_t hi = std::min(s.size() - 1, pos + cfg.window);
        for (std::size_t c = lo; c <= hi; ++c)
          if (c != pos) ex.context.push_back(s[c]);
        if (ex.context.empty()) continue;
        ex.center = s[pos];
        ex.negatives.clear();
        for (std::size_t k = 0; k < cfg.negative; ++k) {
          auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), unif(rng));
          auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - noise_cdf.begin()),
                                           noise_tokens.size() - 1);
          auto neg = noise_tokens[idx];
          if (neg != ex.center) ex.negatives.push_back(neg);
        }
        loss_sum += kernel.run(in, out, ex);
        ++n_ex;
        for (std::size_t t = 0; t <= ex.negatives.size(); ++t) {
          const auto target = t == 0 ? ex.center : ex.negatives[t - 1];
          out.row(target) -= (alpha * kernel.dscore[t]) * kernel.h.transpose();
        }
        const double step = alpha / static_cast<double>(ex.context.size());
        for (auto c : ex.context) in.row(c) -= step * kernel.grad_h.transpose();
      }
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> loss(threads, 0.0);
    std::vector<std::size_t> n(threads, 0);
    if (threads == 1) {
      run_shard(epoch, 0, loss[0], n[0]);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] { run_shard(epoch, t, loss[t], n[t]); });
    }
    double l = 0;
    std::size_t cnt = 0;
    for (std::size_t t = 0; t < threads; ++t) l += loss[t], cnt += n[t];
    epoch_loss.push_back(cnt ? l / static_cast<double>(cnt) : 0.0);
  }

  for (Eigen::Index i = 0; i < rows; ++i)
    if (!trainable[static_cast<std::size_t>(i)]) in.row(i).setZero();
  return {EmbeddingMatrix(std::move(in), EmbeddingKind::Cbow), std::move(epoch_loss),
          std::move(counts)};
}

// ---------------------------------------------------------------------------
// Co-occurrence, PPMI, SVD

struct CooccurrenceCounts {
  SparseMatrix counts;            // symmetric
  Eigen::VectorXd row_totals;
  double total = 0;
};

/// Symmetric windowed counts; each position pair within the window adds one
/// to both (a,b) and (b,a). Tokens below `min_count`, PAD and UNKNOWN are
/// removed before windowing.
inline CooccurrenceCounts build_cooccurrence(const std::vector<std::vector<std::int32_t>>& corpus,
                                             std::size_t vocab_size, std::size_t window = 5,
                                             std::size_t min_count = 5) {
  std::vector<std::size_t> freq(vocab_size, 0);
  for (const auto& s : corpus)
    for (auto t : s) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
        throw ValidationError("token index out of range");
      ++freq[static_cast<std::size_t>(t)];
    }
  auto keep = [&](std::int32_t t) {
    return t != Vocab::kPad && t != Vocab::kUnknown && freq[static_cast<std::size_t>(t)] >= min_count;
  };
  std::unordered_map<std::uint64_t, double> cells;
  std::vector<std::int32_t> kept;
  for (const auto& s : corpus) {
    kept.clear();
    for (auto t : s)
      if (keep(t)) kept.push_back(t);
    for (std::size_t p = 0; p < kept.size(); ++p)
      for (std::size_t q = p + 1; q < kept.size() && q - p <= window; ++q) {
        auto a = static_cast<std::uint64_t>(kept[p]);
        auto b = static_cast<std::uint64_t>(kept[q]);
        cells[(a << 32) | b] += 1.0;
        cells[(b << 32) | a] += 1.0;
      }
  }
  std::vector<std::pair<std::uint64_t, double>> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(sorted.size());
  for (auto [key, v] : sorted)
    trip.emplace_back(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffULL), v);
  CooccurrenceCounts out;
  const auto n = static_cast<Eigen::Index>(vocab_size);
  out.counts.resize(n, n);
  out.counts.setFromTriplets(trip.begin(), trip.end());
  out.row_totals = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < out.counts.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(out.counts, k); it; ++it) out.row_totals(it.row()) += it.value();
  out.total = out.row_totals.sum();
  return out;
}

/// max(0, log(p(i,j) / (p(i) p(j)))); zero counts stay zero.
inline SparseMatrix compute_ppmi(const CooccurrenceCounts& c) {
  if (!(c.total > 0)) throw ValidationError("co-occurrence total is zero");
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index k = 0; k < c.counts.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(c.counts, k); it; ++it) {
      if (it.value() <= 0) continue;
      const double v = std::log(it.value() * c.total / (c.row_totals(it.row()) * c.row_totals(it.col())));
      if (v > 0) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), v);
    }
  SparseMatrix m(c.counts.rows(), c.counts.cols());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Token i is row i of the left singular vectors for the top `dim`
/// directions (no singular-value scaling); columns beyond the rank are zero.
inline EmbeddingMatrix svd_embed(const SparseMatrix& ppmi, long dim = static_cast<long>(kEmbeddingDim),
                                 std::uint64_t seed = 1) {
  if (dim <= 0) throw ValidationError("SVD dimension must be positive");
  if (ppmi.rows() == 0 || ppmi.cols() == 0) throw ValidationError("empty PPMI matrix");
  auto svd = truncated_svd(ppmi, static_cast<std::size_t>(dim), seed);
  RowMatrix u = RowMatrix::Zero(ppmi.rows(), dim);
  u.leftCols(svd.U.cols()) = svd.U;
  return EmbeddingMatrix(std::move(u), EmbeddingKind::Svd);
}

}  // namespace clex
