#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "clex/embeddings.hpp"
#include "test_util.hpp"

using namespace clex;
using Corpus = std::vector<std::vector<std::int32_t>>;

namespace {

constexpr std::int32_t R = Vocab::kNumReserved;  // first content index

RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  RowMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

double cosine(const EmbeddingMatrix& e, std::int32_t a, std::int32_t b) {
  return e.row(a).dot(e.row(b)) / (e.row(a).norm() * e.row(b).norm());
}

}  // namespace

TEST(Cbow, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int point = 0; point < 5; ++point) {
    const Eigen::Index V = 12, D = 6;
    RowMatrix in = random_matrix(V, D, rng), out = random_matrix(V, D, rng);
    CbowExample ex{{4, 5, 7, 5}, 6, {8, 9, 10, 11, 4}};
    RowMatrix gin = RowMatrix::Zero(V, D), gout = RowMatrix::Zero(V, D);
    cbow_gradient(in, out, ex, gin, gout);
    const double h = 1e-5;
    for (auto* which : {&in, &out}) {
      const RowMatrix& g = which == &in ? gin : gout;
      for (Eigen::Index i = 0; i < V; ++i)
        for (Eigen::Index j = 0; j < D; ++j) {
          const double keep = (*which)(i, j);
          (*which)(i, j) = keep + h;
          const double lp = cbow_loss(in, out, ex);
          (*which)(i, j) = keep - h;
          const double lm = cbow_loss(in, out, ex);
          (*which)(i, j) = keep;
          const double num = (lp - lm) / (2 * h);
          if (std::abs(num) < 1e-9 && std::abs(g(i, j)) < 1e-9) continue;
          EXPECT_LT(rel_err(g(i, j), num), 1e-4) << "point " << point << " (" << i << "," << j << ")";
        }
    }
  }
}

TEST(Cbow, SingleRepeatedTokenTrains) {
  Corpus c(20, std::vector<std::int32_t>(10, R));
  CbowConfig cfg;
  cfg.dim = 8, cfg.epochs = 3;
  auto res = train_cbow(c, R + 1, cfg);
  EXPECT_TRUE(res.embeddings.values().allFinite());
  EXPECT_GT(res.embeddings.row(R).norm(), 0.0);
}

TEST(Cbow, NoTrainableVocabularyIsError) {
  Corpus c = {{R, R + 1}};
  CbowConfig cfg;
  cfg.dim = 4;
  try {
    train_cbow(c, R + 2, cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "no trainable vocabulary");
  }
}

TEST(Cbow, DeterministicUnderSeed) {
  std::mt19937_64 rng(1);
  Corpus c;
  for (int s = 0; s < 100; ++s) {
    std::vector<std::int32_t> sent;
    for (int k = 0; k < 8; ++k) sent.push_back(R + static_cast<std::int32_t>(rng() % 20));
    c.push_back(sent);
  }
  CbowConfig cfg;
  cfg.dim = 16, cfg.epochs = 3, cfg.min_count = 1, cfg.seed = 9;
  auto a = train_cbow(c, R + 20, cfg), b = train_cbow(c, R + 20, cfg);
  EXPECT_EQ(a.embeddings.values(), b.embeddings.values());
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Cbow, CooccurringTokensEndCloser) {
  // Tokens 0/1 of a group always appear together; groups never mix.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    Corpus c;
    const std::int32_t groups = 10;
    for (int s = 0; s < 200; ++s) {
      const auto g = static_cast<std::int32_t>(rng() % groups);
      std::vector<std::int32_t> sent;
      for (int k = 0; k < 6; ++k) sent.push_back(R + 2 * g + static_cast<std::int32_t>(k % 2));
      c.push_back(sent);
    }
    CbowConfig cfg;
    cfg.dim = 20, cfg.epochs = 20, cfg.min_count = 1, cfg.seed = seed;
    auto e = train_cbow(c, R + 2 * groups, cfg).embeddings;
    EXPECT_GT(cosine(e, R, R + 1), cosine(e, R, R + 2)) << "seed " << seed;
  }
}

TEST(Cbow, LossNonIncreasingEarly) {
  std::mt19937_64 rng(77);
  Corpus c;
  for (int s = 0; s < 1000; ++s) {
    const auto topic = static_cast<std::int32_t>(rng() % 5);
    std::vector<std::int32_t> sent;
    for (int k = 0; k < 10; ++k) sent.push_back(R + topic * 10 + static_cast<std::int32_t>(rng() % 10));
    c.push_back(sent);
  }
  CbowConfig cfg;
  cfg.dim = 32, cfg.epochs = 3, cfg.seed = 3;
  auto res = train_cbow(c, R + 50, cfg);
  ASSERT_EQ(res.epoch_loss.size(), 3u);
  for (std::size_t e = 1; e < 3; ++e) EXPECT_LE(res.epoch_loss[e], res.epoch_loss[e - 1] * 1.01);
}

TEST(Cooccurrence, PairCounts) {
  auto c = build_cooccurrence({{R, R + 1}}, R + 2, 1, 1);
  EXPECT_EQ(c.counts.coeff(R, R + 1), 1.0);
  EXPECT_EQ(c.counts.coeff(R + 1, R), 1.0);
  auto d = build_cooccurrence({{R, R + 1, R, R + 1}}, R + 2, 1, 1);
  EXPECT_EQ(d.counts.coeff(R, R + 1), 3.0);
  EXPECT_EQ(d.counts.coeff(R + 1, R), 3.0);
  EXPECT_EQ(d.counts.coeff(R, R), 0.0);
  auto z = build_cooccurrence({{R, R + 1, R}}, R + 2, 0, 1);
  EXPECT_EQ(z.total, 0.0);
  EXPECT_EQ(z.counts.nonZeros(), 0);
  EXPECT_THROW(compute_ppmi(z), ValidationError);
}

TEST(Cooccurrence, MinCountDropsBeforeWindowing) {
  // "b" occurs once and is removed, so a and c become adjacent.
  auto c = build_cooccurrence({{R, R + 1, R + 2}, {R, R + 2}}, R + 3, 1, 2);
  EXPECT_EQ(c.counts.coeff(R, R + 2), 2.0);
  EXPECT_EQ(c.counts.coeff(R, R + 1), 0.0);
}

TEST(Ppmi, UniformCountsGiveZero) {
  CooccurrenceCounts c;
  const int n = 4;
  c.counts.resize(n, n);
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.emplace_back(i, j, 3.0);
  c.counts.setFromTriplets(t.begin(), t.end());
  c.row_totals = Eigen::VectorXd::Constant(n, 12.0);
  c.total = 48.0;
  EXPECT_EQ(compute_ppmi(c).nonZeros(), 0);
}

TEST(Ppmi, MatchesDirectFormulaOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    Corpus corpus(1 + rng() % 6);
    for (auto& s : corpus)
      for (int k = static_cast<int>(rng() % 10); k >= 0; --k) s.push_back(R + static_cast<std::int32_t>(rng() % n));
    const auto V = static_cast<std::size_t>(R + n);
    auto c = build_cooccurrence(corpus, V, 2, 1);
    if (c.total == 0) continue;
    auto m = compute_ppmi(c);
    // Oracle: counts and PPMI straight from the definition.
    Eigen::MatrixXd cnt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(V));
    for (const auto& s : corpus)
      for (std::size_t p = 0; p < s.size(); ++p)
        for (std::size_t q = 0; q < s.size(); ++q)
          if (p != q && (p > q ? p - q : q - p) <= 2) cnt(s[p], s[q]) += 1;
    const double total = cnt.sum();
    for (Eigen::Index i = 0; i < cnt.rows(); ++i)
      for (Eigen::Index j = 0; j < cnt.cols(); ++j) {
        double expect = 0;
        if (cnt(i, j) > 0) {
          const double pmi = std::log((cnt(i, j) / total) / ((cnt.row(i).sum() / total) * (cnt.col(j).sum() / total)));
          expect = std::max(0.0, pmi);
        }
        EXPECT_NEAR(m.coeff(i, j), expect, 1e-12);
        EXPECT_GE(m.coeff(i, j), 0.0);
        EXPECT_EQ(m.coeff(i, j), m.coeff(j, i));
      }
  }
}

TEST(SvdEmbed, RankOneDominantVector) {
  Eigen::VectorXd v(5);
  v << 0.1, -0.4, 0.7, 0.2, -0.3;
  v.normalize();
  Eigen::MatrixXd a = 2.5 * v * v.transpose();
  SparseMatrix s = a.sparseView();
  auto e = svd_embed(s, 1);
  Eigen::VectorXd u = e.values().col(0);
  EXPECT_LT((u - v).norm(), 1e-8);  // largest-magnitude entry (0.7) already positive
  auto svd = truncated_svd(s, 1);
  EXPECT_LT((svd.U * svd.S.asDiagonal() * svd.V.transpose() - a).norm(), 1e-8);
}

TEST(SvdEmbed, FullRankReconstructionAndOrthonormality) {
  std::mt19937_64 rng(8);
  Eigen::MatrixXd a = random_matrix(12, 12, rng, 1.0);
  a = (a + a.transpose()).eval().cwiseAbs();
  SparseMatrix s = a.sparseView();
  auto svd = truncated_svd(s, 20);
  EXPECT_LT((svd.U * svd.S.asDiagonal() * svd.V.transpose() - a).norm(), 1e-6);
  auto e = svd_embed(s, 20);
  EXPECT_EQ(e.dim(), 20u);
  Eigen::MatrixXd u = e.values().leftCols(12);
  EXPECT_LT((u.transpose() * u - Eigen::MatrixXd::Identity(12, 12)).norm(), 1e-6);
  EXPECT_EQ(e.values().rightCols(8).norm(), 0.0);
  EXPECT_THROW(svd_embed(s, 0), ValidationError);
}

TEST(EmbeddingFile, RoundTripToWrittenPrecision) {
  test::TempDir dir;
  std::vector<std::vector<std::string>> stream = {{"a", "b", "c"}};
  auto vocab = build_vocab(stream);
  std::mt19937_64 rng(4);
  EmbeddingMatrix e(random_matrix(static_cast<Eigen::Index>(vocab.size()), 7, rng), EmbeddingKind::Cbow);
  save_embeddings(dir / "e.txt", e, vocab);
  auto back = load_embeddings(dir / "e.txt", vocab, EmbeddingKind::Cbow);
  EXPECT_LT((back.values() - e.values()).cwiseAbs().maxCoeff(), 1e-8);
  auto header = test::read_file(dir / "e.txt");
  EXPECT_EQ(header.substr(0, header.find('\n')), std::to_string(vocab.size()) + " 7");
  // Saving the reloaded matrix reproduces the file byte for byte.
  save_embeddings(dir / "f.txt", back, vocab);
  EXPECT_EQ(test::read_file(dir / "e.txt"), test::read_file(dir / "f.txt"));
}
