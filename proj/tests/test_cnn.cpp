#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "clex/cnn.hpp"

using namespace clex;

namespace {

constexpr std::int32_t R = Vocab::kNumReserved;

EmbeddingMatrix random_embedding(Eigen::Index V, Eigen::Index E, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  RowMatrix m(V, E);
  for (Eigen::Index i = 0; i < V; ++i)
    for (Eigen::Index j = 0; j < E; ++j) m(i, j) = g(rng);
  return EmbeddingMatrix(std::move(m), EmbeddingKind::External);
}

EncodedTweet encode(const std::vector<std::int32_t>& toks) {
  EncodedTweet e;
  for (std::size_t i = 0; i < toks.size() && i < kSequenceLength; ++i) e.indices[i] = toks[i];
  return e;
}

LabeledDataset random_dataset(std::size_t n, Eigen::Index V, Eigen::Index C, std::mt19937_64& rng) {
  LabeledDataset d;
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int32_t> toks(1 + rng() % kSequenceLength);
    for (auto& t : toks) t = 1 + static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(V - 1));
    d.x.push_back(encode(toks));
    d.y.push_back(kLabels[rng() % 3]);
  }
  d.context.resize(static_cast<Eigen::Index>(n), C);
  for (Eigen::Index i = 0; i < d.context.rows(); ++i)
    for (Eigen::Index j = 0; j < C; ++j) d.context(i, j) = g(rng);
  return d;
}

CnnHyper small_hyper() {
  CnnHyper h;
  h.filters = 6, h.hidden = 8, h.max_epochs = 20, h.batch = 16;
  return h;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

}  // namespace

TEST(CnnForward, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int point = 0; point < 5; ++point) {
    const Eigen::Index V = 10, E = 4, C = 3;
    auto emb = random_embedding(V, E, rng);
    CnnHyper h;
    h.filters = 3, h.hidden = 5;
    auto p = init_cnn<double>(emb, C, h, rng);
    std::normal_distribution<double> g(0.0, 0.3);
    for (Eigen::Index i = 0; i < p.conv1_b.size(); ++i) p.conv1_b(i) = g(rng), p.conv2_b(i) = g(rng);
    for (Eigen::Index i = 0; i < p.dense_b.size(); ++i) p.dense_b(i) = 0.5 + g(rng);
    p.out_b = g(rng);
    auto data = random_dataset(4, V, C, rng);
    data.x[0] = encode({2, 3, 4});  // short: pooling sees the padding window
    std::vector<std::size_t> idx{0, 1, 2, 3};
    std::vector<double> target{1, 0, 1, 0};
    CnnWorkspace<double> ws;
    CnnGrads<double> grads;
    grads.reset(p);
    cnn_batch<double>(p, data, idx, target, false, 0.0, nullptr, &grads, nullptr, ws);
    auto loss = [&] { return cnn_batch<double>(p, data, idx, target, false, 0.0, nullptr, nullptr, nullptr, ws); };
    const double step = 1e-6;
    auto check = [&](auto& param, const auto& grad, const char* name) {
      for (Eigen::Index k = 0; k < param.size(); ++k) {
        const double keep = param.data()[k];
        param.data()[k] = keep + step;
        const double lp = loss();
        param.data()[k] = keep - step;
        const double lm = loss();
        param.data()[k] = keep;
        const double num = (lp - lm) / (2 * step);
        EXPECT_LT(rel_err(grad.data()[k], num), 1e-4) << name << "[" << k << "] point " << point;
      }
    };
    auto gemb = grads.dense_embedding(V);
    gemb.row(Vocab::kPad).setZero();
    {
      // PAD row is frozen, so only non-PAD rows are checked.
      auto& e = p.embedding;
      for (Eigen::Index r = 1; r < V; ++r)
        for (Eigen::Index c = 0; c < E; ++c) {
          const double keep = e(r, c);
          e(r, c) = keep + step;
          const double lp = loss();
          e(r, c) = keep - step;
          const double lm = loss();
          e(r, c) = keep;
          EXPECT_LT(rel_err(gemb(r, c), (lp - lm) / (2 * step)), 1e-4) << "embedding point " << point;
        }
    }
    check(p.conv1_w, grads.conv1_w, "conv1_w");
    check(p.conv1_b, grads.conv1_b, "conv1_b");
    check(p.conv2_w, grads.conv2_w, "conv2_w");
    check(p.conv2_b, grads.conv2_b, "conv2_b");
    check(p.dense_w, grads.dense_w, "dense_w");
    check(p.dense_b, grads.dense_b, "dense_b");
    check(p.out_w, grads.out_w, "out_w");
    const double keep = p.out_b;
    p.out_b = keep + step;
    const double lp = loss();
    p.out_b = keep - step;
    const double lm = loss();
    p.out_b = keep;
    EXPECT_LT(rel_err(grads.out_b, (lp - lm) / (2 * step)), 1e-4);
  }
}

TEST(CnnForward, OutputInOpenUnitInterval) {
  std::mt19937_64 rng(3);
  auto emb = random_embedding(30, 8, rng);
  auto p = init_cnn<float>(emb, 0, small_hyper(), rng);
  auto data = random_dataset(200, 30, 0, rng);
  for (float v : cnn_predict(p, data)) {
    EXPECT_GT(v, 0.f);
    EXPECT_LT(v, 1.f);
  }
}

TEST(CnnForward, AllPadInputsAgree) {
  std::mt19937_64 rng(4);
  auto emb = random_embedding(30, 8, rng);
  auto p = init_cnn<double>(emb, 0, small_hyper(), rng);
  p.conv1_b.setConstant(0.3);
  LabeledDataset d;
  d.x.assign(3, EncodedTweet{});
  d.y.assign(3, Label::Other);
  d.context.resize(3, 0);
  auto probs = cnn_predict(p, d);
  EXPECT_EQ(probs[0], probs[1]);
  EXPECT_EQ(probs[1], probs[2]);
  // Oracle: every pooled feature is relu(bias).
  Eigen::VectorXd r(2 * p.filters());
  r << p.conv1_b.cwiseMax(0.0), p.conv2_b.cwiseMax(0.0);
  Eigen::VectorXd hid = (p.dense_w.transpose() * r + p.dense_b).cwiseMax(0.0);
  const double z = hid.dot(p.out_w) + p.out_b;
  EXPECT_NEAR(probs[0], 1.0 / (1.0 + std::exp(-z)), 1e-12);
}

TEST(CnnForward, EvalModeIgnoresRng) {
  std::mt19937_64 rng(5);
  auto emb = random_embedding(30, 8, rng);
  auto p = init_cnn<float>(emb, 4, small_hyper(), rng);
  auto data = random_dataset(20, 30, 4, rng);
  std::vector<std::size_t> idx(20);
  std::iota(idx.begin(), idx.end(), 0);
  CnnWorkspace<float> ws;
  std::vector<float> a, b;
  std::mt19937_64 r1(1), r2(999);
  cnn_batch<float>(p, data, idx, {}, false, 0.5, &r1, nullptr, &a, ws);
  cnn_batch<float>(p, data, idx, {}, false, 0.5, &r2, nullptr, &b, ws);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, cnn_predict(p, data));
}

TEST(CnnForward, WidthOnePoolingIsPermutationInvariant) {
  std::mt19937_64 rng(6);
  auto emb = random_embedding(30, 8, rng);
  auto p = init_cnn<double>(emb, 0, small_hyper(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::int32_t> slots(kSequenceLength, Vocab::kPad);
    const auto n = 1 + rng() % kSequenceLength;
    for (std::size_t i = 0; i < n; ++i) slots[i] = 1 + static_cast<std::int32_t>(rng() % 29);
    auto shuffled = slots;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    LabeledDataset d;
    d.x = {encode(slots), encode(shuffled)};
    d.y = {Label::Other, Label::Other};
    d.context.resize(2, 0);
    CnnWorkspace<double> ws;
    std::vector<std::size_t> idx{0, 1};
    cnn_batch<double>(p, d, idx, {}, false, 0.0, nullptr, nullptr, nullptr, ws);
    for (Eigen::Index f = 0; f < p.filters(); ++f) EXPECT_NEAR(ws.pre1(0, f), ws.pre1(1, f), 1e-12);
  }
}

TEST(CnnForward, ContextDimensionMismatchIsError) {
  std::mt19937_64 rng(7);
  auto emb = random_embedding(30, 8, rng);
  auto p = init_cnn<float>(emb, 5, small_hyper(), rng);
  auto data = random_dataset(3, 30, 4, rng);
  EXPECT_THROW(cnn_predict(p, data), ValidationError);
  auto none = random_dataset(3, 30, 0, rng);
  EXPECT_THROW(cnn_predict(p, none), ValidationError);
}

namespace {

// Aggression tweets contain one of tokens R..R+4, the rest one of R+5..R+9,
// both mixed with shared noise tokens.
LabeledDataset separable(std::size_t n, std::mt19937_64& rng) {
  LabeledDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    std::vector<std::int32_t> toks(3 + rng() % 10);
    for (auto& t : toks) t = R + 10 + static_cast<std::int32_t>(rng() % 20);
    toks[rng() % toks.size()] = R + (pos ? 0 : 5) + static_cast<std::int32_t>(rng() % 5);
    d.x.push_back(encode(toks));
    d.y.push_back(pos ? Label::Aggression : (i % 4 == 1 ? Label::Loss : Label::Other));
  }
  d.context.resize(static_cast<Eigen::Index>(n), 0);
  return d;
}

}  // namespace

TEST(TrainCnn, SeparableSetReachesPerfectTrainingAccuracy) {
  std::mt19937_64 rng(8);
  auto train = separable(200, rng), val = separable(60, rng);
  auto emb = random_embedding(R + 30, static_cast<Eigen::Index>(kEmbeddingDim), rng);
  CnnHyper h;  // default architecture, dropout and optimizer
  h.patience = 20;
  auto res = train_cnn(train, val, Label::Aggression, emb, h);
  EXPECT_LE(res.log.size(), 20u);
  auto probs = cnn_predict(res.params, train);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < train.size(); ++i) correct += (probs[i] > 0.5f) == (train.y[i] == Label::Aggression);
  EXPECT_EQ(correct, train.size());
}

TEST(TrainCnn, PatienceZeroStopsAfterFirstEpoch) {
  std::mt19937_64 rng(9);
  auto train = separable(64, rng), val = separable(32, rng);
  auto emb = random_embedding(R + 30, 8, rng);
  auto h = small_hyper();
  h.patience = 0;
  auto res = train_cnn(train, val, Label::Aggression, emb, h);
  ASSERT_EQ(res.log.size(), 1u);
  EXPECT_EQ(res.best_epoch, 1u);
  EXPECT_TRUE(res.log[0].improved);
  h.max_epochs = 1;
  h.patience = 5;
  auto one = train_cnn(train, val, Label::Aggression, emb, h);
  EXPECT_EQ(res.params.conv1_w, one.params.conv1_w);
  EXPECT_EQ(res.params.out_w, one.params.out_w);
}

TEST(TrainCnn, SameSeedIdenticalParameters) {
  std::mt19937_64 rng(10);
  auto train = separable(80, rng), val = separable(30, rng);
  auto emb = random_embedding(R + 30, 8, rng);
  auto h = small_hyper();
  h.max_epochs = 4;
  for (auto opt : {CnnHyper::Optimizer::Adam, CnnHyper::Optimizer::Nadam}) {
    h.optimizer = opt;
    auto a = train_cnn(train, val, Label::Loss, emb, h), b = train_cnn(train, val, Label::Loss, emb, h);
    EXPECT_EQ(a.params.embedding, b.params.embedding);
    EXPECT_EQ(a.params.conv2_w, b.params.conv2_w);
    EXPECT_EQ(a.params.dense_w, b.params.dense_w);
    EXPECT_EQ(a.params.out_w, b.params.out_w);
    EXPECT_EQ(a.params.out_b, b.params.out_b);
    EXPECT_EQ(a.best_epoch, b.best_epoch);
    EXPECT_EQ(a.params.embedding.row(Vocab::kPad).norm(), 0.f);
  }
}

TEST(TrainCnn, AbsentTargetClassIsError) {
  std::mt19937_64 rng(12);
  auto train = separable(20, rng), val = separable(10, rng);
  for (auto& y : train.y)
    if (y == Label::Aggression) y = Label::Other;
  auto emb = random_embedding(R + 30, 8, rng);
  EXPECT_THROW(train_cnn(train, val, Label::Aggression, emb, small_hyper()), ValidationError);
  LabeledDataset empty;
  empty.context.resize(0, 0);
  EXPECT_THROW(train_cnn(train, empty, Label::Loss, emb, small_hyper()), ValidationError);
}
