#pragma once

// Word-level CNN: embedding -> dropout -> conv widths 1 and 2 -> ReLU ->
// global max-pool -> dropout -> dense(ReLU) -> [h ; context] -> sigmoid.
//
// Batches are packed without trailing padding. A window made entirely of PAD
// rows evaluates to the filter bias exactly (the PAD row is held at zero), so
// all such windows collapse into a single pooling candidate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "corpus.hpp"
#include "embeddings.hpp"

namespace clex {

inline constexpr Eigen::Index kContextDim = 2 * static_cast<Eigen::Index>(kEmbeddingDim) + 2;

/// Encoded tweets with optional context rows and gold labels.
struct LabeledDataset {
  std::vector<EncodedTweet> x;
  RowMatrix context;  // size() x context_dim, zero columns when absent
  std::vector<Label> y;

  std::size_t size() const { return x.size(); }
  Eigen::Index context_dim() const { return context.cols(); }
};

template <class Real>
struct CnnParams {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

  Mat embedding;  // V x E, PAD row held at zero
  Mat conv1_w;    // F x E
  Vec conv1_b;    // F
  Mat conv2_w;    // F x 2E, [first position | second position]
  Vec conv2_b;    // F
  Mat dense_w;    // 2F x H
  Vec dense_b;    // H
  Vec out_w;      // H + context_dim
  Real out_b = 0;
  Eigen::Index context_dim = 0;

  Eigen::Index embed_dim() const { return embedding.cols(); }
  Eigen::Index filters() const { return conv1_w.rows(); }
  Eigen::Index hidden() const { return dense_w.cols(); }

  template <class T>
  CnnParams<T> cast() const {
    CnnParams<T> o;
    o.embedding = embedding.template cast<T>();
    o.conv1_w = conv1_w.template cast<T>();
    o.conv1_b = conv1_b.template cast<T>();
    o.conv2_w = conv2_w.template cast<T>();
    o.conv2_b = conv2_b.template cast<T>();
    o.dense_w = dense_w.template cast<T>();
    o.dense_b = dense_b.template cast<T>();
    o.out_w = out_w.template cast<T>();
    o.out_b = static_cast<T>(out_b);
    o.context_dim = context_dim;
    return o;
  }

  bool all_finite() const {
    return embedding.allFinite() && conv1_w.allFinite() && conv1_b.allFinite() && conv2_w.allFinite() &&
           conv2_b.allFinite() && dense_w.allFinite() && dense_b.allFinite() && out_w.allFinite() &&
           std::isfinite(static_cast<double>(out_b));
  }
};

template <class Real>
struct CnnGrads {
  using Mat = typename CnnParams<Real>::Mat;
  using Vec = typename CnnParams<Real>::Vec;

  std::vector<std::int32_t> emb_rows;  // touched vocabulary rows
  Mat emb;                             // gradient per touched row
  Mat conv1_w;
  Vec conv1_b;
  Mat conv2_w;
  Vec conv2_b;
  Mat dense_w;
  Vec dense_b;
  Vec out_w;
  Real out_b = 0;
  std::vector<std::int32_t> slot;  // vocabulary row -> index into emb_rows, or -1

  void reset(const CnnParams<Real>& p) {
    for (auto r : emb_rows) slot[static_cast<std::size_t>(r)] = -1;
    if (slot.size() != static_cast<std::size_t>(p.embedding.rows())) slot.assign(static_cast<std::size_t>(p.embedding.rows()), -1);
    emb_rows.clear();
    emb.resize(0, p.embed_dim());
    conv1_w.setZero(p.conv1_w.rows(), p.conv1_w.cols());
    conv1_b.setZero(p.conv1_b.size());
    conv2_w.setZero(p.conv2_w.rows(), p.conv2_w.cols());
    conv2_b.setZero(p.conv2_b.size());
    dense_w.setZero(p.dense_w.rows(), p.dense_w.cols());
    dense_b.setZero(p.dense_b.size());
    out_w.setZero(p.out_w.size());
    out_b = 0;
  }

  /// Full dense gradient of the embedding table (tests only).
  Mat dense_embedding(Eigen::Index vocab) const {
    Mat g = Mat::Zero(vocab, emb.cols());
    for (std::size_t i = 0; i < emb_rows.size(); ++i) g.row(emb_rows[i]) = emb.row(static_cast<Eigen::Index>(i));
    return g;
  }
};

template <class Real>
struct CnnWorkspace {
  using Mat = typename CnnParams<Real>::Mat;
  using Vec = typename CnnParams<Real>::Vec;
  std::vector<Eigen::Index> start, len;
  std::vector<std::int32_t> row_token;
  Mat X, maskX, Y1, A2, B2, dX;
  Mat pre1, pre2;  // pooled pre-activations, B x F
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg1, arg2;
  Mat R, maskR, Hpre, H, ctx, dH, dR;
  Vec z, dz;
};

struct CnnHyper {
  Eigen::Index filters = 200;
  Eigen::Index hidden = 256;
  double dropout = 0.5;
  double lr = 0.002;
  std::size_t batch = 32;
  std::size_t patience = 5;
  std::size_t max_epochs = 20;
  enum class Optimizer { Adam, Nadam } optimizer = Optimizer::Adam;
  enum class StopMetric { ValLoss, ValMacroF } stop = StopMetric::ValLoss;
  std::uint64_t seed = 1;
};

namespace detail {

template <class Real>
Real softplus(Real x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class Real>
Real sigmoid_r(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, embedding copied from `init` (PAD
/// row zeroed).
template <class Real>
CnnParams<Real> init_cnn(const EmbeddingMatrix& init, Eigen::Index context_dim, const CnnHyper& h,
                         std::mt19937_64& rng) {
  using P = CnnParams<Real>;
  P p;
  const auto E = static_cast<Eigen::Index>(init.dim());
  const Eigen::Index F = h.filters, H = h.hidden;
  p.embedding = init.values().cast<Real>();
  p.embedding.row(Vocab::kPad).setZero();
  auto glorot = [&](typename P::Mat& m, Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<Real>(u(rng));
  };
  glorot(p.conv1_w, F, E, 1.0 * E, 1.0 * F);
  glorot(p.conv2_w, F, 2 * E, 2.0 * E, 2.0 * F);
  glorot(p.dense_w, 2 * F, H, 2.0 * F, 1.0 * H);
  typename P::Mat ow;
  glorot(ow, H + context_dim, 1, 1.0 * (H + context_dim), 1.0);
  p.out_w = ow.col(0);
  p.conv1_b.setZero(F);
  p.conv2_b.setZero(F);
  p.dense_b.setZero(H);
  p.out_b = 0;
  p.context_dim = context_dim;
  return p;
}

/// Forward pass over `data[idx]`, returning the mean binary NLL against
/// `target` (or 0 when `target` is empty). With `grads`, also accumulates
/// gradients. Dropout applies only when `train` is set.
template <class Real>
Real cnn_batch(const CnnParams<Real>& p, const LabeledDataset& data, std::span<const std::size_t> idx,
               std::span<const Real> target, bool train, double dropout, std::mt19937_64* rng,
               CnnGrads<Real>* grads, std::vector<Real>* probs, CnnWorkspace<Real>& ws) {
  using Eigen::Index;
  const Index B = static_cast<Index>(idx.size());
  const Index E = p.embed_dim(), F = p.filters(), Hd = p.hidden(), C = p.context_dim;
  constexpr Index L = static_cast<Index>(kSequenceLength);
  if (data.context_dim() != C)
    throw ValidationError("context dimension " + std::to_string(data.context_dim()) +
                          " does not match model context dimension " + std::to_string(C));
  const bool use_dropout = train && dropout > 0;
  if (use_dropout && !rng) throw ValidationError("training mode requires an rng");
  const Real keep_scale = use_dropout ? Real(1.0 / (1.0 - dropout)) : Real(1);
  std::bernoulli_distribution keep(1.0 - dropout);

  ws.start.resize(static_cast<std::size_t>(B));
  ws.len.resize(static_cast<std::size_t>(B));
  Index total = 0;
  for (Index e = 0; e < B; ++e) {
    const auto& enc = data.x[idx[static_cast<std::size_t>(e)]].indices;
    Index n = L;
    while (n > 0 && enc[static_cast<std::size_t>(n - 1)] == Vocab::kPad) --n;
    ws.start[static_cast<std::size_t>(e)] = total;
    ws.len[static_cast<std::size_t>(e)] = n;
    total += n;
  }
  ws.X.resize(total, E);
  ws.row_token.resize(static_cast<std::size_t>(total));
  for (Index e = 0; e < B; ++e) {
    const auto& enc = data.x[idx[static_cast<std::size_t>(e)]].indices;
    for (Index t = 0; t < ws.len[static_cast<std::size_t>(e)]; ++t) {
      const auto tok = enc[static_cast<std::size_t>(t)];
      if (tok < 0 || tok >= p.embedding.rows()) throw ValidationError("token index out of range");
      const Index r = ws.start[static_cast<std::size_t>(e)] + t;
      ws.X.row(r) = p.embedding.row(tok);
      ws.row_token[static_cast<std::size_t>(r)] = tok;
    }
  }
  if (use_dropout) {
    ws.maskX.resize(total, E);
    for (Index i = 0; i < total; ++i)
      for (Index j = 0; j < E; ++j) ws.maskX(i, j) = keep(*rng) ? keep_scale : Real(0);
    ws.X.array() *= ws.maskX.array();
  }

  ws.Y1.noalias() = ws.X * p.conv1_w.transpose();
  ws.A2.noalias() = ws.X * p.conv2_w.leftCols(E).transpose();
  ws.B2.noalias() = ws.X * p.conv2_w.rightCols(E).transpose();

  ws.pre1.resize(B, F);
  ws.pre2.resize(B, F);
  ws.arg1.resize(B, F);
  ws.arg2.resize(B, F);
  ws.R.resize(B, 2 * F);
  const Real neg_inf = -std::numeric_limits<Real>::infinity();
  for (Index e = 0; e < B; ++e) {
    const Index s = ws.start[static_cast<std::size_t>(e)];
    const Index n = ws.len[static_cast<std::size_t>(e)];
    const Index windows2 = std::min(n, L - 1);
    for (Index f = 0; f < F; ++f) {
      Real best = neg_inf;
      int arg = -1;
      for (Index t = 0; t < n; ++t) {
        const Real v = ws.Y1(s + t, f);
        if (v > best) best = v, arg = static_cast<int>(t);
      }
      if (n < L && Real(0) > best) best = 0, arg = -1;
      ws.pre1(e, f) = best + p.conv1_b(f);
      ws.arg1(e, f) = arg;

      best = neg_inf;
      arg = -1;
      for (Index j = 0; j < windows2; ++j) {
        const Real v = ws.A2(s + j, f) + (j + 1 < n ? ws.B2(s + j + 1, f) : Real(0));
        if (v > best) best = v, arg = static_cast<int>(j);
      }
      if (n <= L - 2 && Real(0) > best) best = 0, arg = -1;
      ws.pre2(e, f) = best + p.conv2_b(f);
      ws.arg2(e, f) = arg;

      ws.R(e, f) = std::max(Real(0), ws.pre1(e, f));
      ws.R(e, F + f) = std::max(Real(0), ws.pre2(e, f));
    }
  }
  if (use_dropout) {
    ws.maskR.resize(B, 2 * F);
    for (Index i = 0; i < B; ++i)
      for (Index j = 0; j < 2 * F; ++j) ws.maskR(i, j) = keep(*rng) ? keep_scale : Real(0);
    ws.R.array() *= ws.maskR.array();
  }

  ws.Hpre.noalias() = ws.R * p.dense_w;
  ws.Hpre.rowwise() += p.dense_b.transpose();
  ws.H = ws.Hpre.cwiseMax(Real(0));
  ws.z = ws.H * p.out_w.head(Hd);
  if (C > 0) {
    ws.ctx.resize(B, C);
    for (Index e = 0; e < B; ++e) ws.ctx.row(e) = data.context.row(static_cast<Index>(idx[static_cast<std::size_t>(e)])).template cast<Real>();
    ws.z.noalias() += ws.ctx * p.out_w.tail(C);
  }
  ws.z.array() += p.out_b;

  if (probs) {
    probs->resize(static_cast<std::size_t>(B));
    for (Index e = 0; e < B; ++e) (*probs)[static_cast<std::size_t>(e)] = detail::sigmoid_r(ws.z(e));
  }
  if (target.empty()) return Real(0);
  Real loss = 0;
  for (Index e = 0; e < B; ++e) {
    const Real y = target[static_cast<std::size_t>(e)];
    loss += y * detail::softplus(-ws.z(e)) + (Real(1) - y) * detail::softplus(ws.z(e));
  }
  loss /= static_cast<Real>(B);
  if (!grads) return loss;

  // Backward.
  auto& g = *grads;
  ws.dz.resize(B);
  for (Index e = 0; e < B; ++e)
    ws.dz(e) = (detail::sigmoid_r(ws.z(e)) - target[static_cast<std::size_t>(e)]) / static_cast<Real>(B);
  g.out_w.head(Hd).noalias() += ws.H.transpose() * ws.dz;
  if (C > 0) g.out_w.tail(C).noalias() += ws.ctx.transpose() * ws.dz;
  g.out_b += ws.dz.sum();

  ws.dH.noalias() = ws.dz * p.out_w.head(Hd).transpose();
  ws.dH.array() *= (ws.Hpre.array() > Real(0)).template cast<Real>();
  g.dense_w.noalias() += ws.R.transpose() * ws.dH;
  g.dense_b.noalias() += ws.dH.colwise().sum().transpose();
  ws.dR.noalias() = ws.dH * p.dense_w.transpose();
  if (use_dropout) ws.dR.array() *= ws.maskR.array();

  ws.dX.setZero(total, E);
  for (Index e = 0; e < B; ++e) {
    const Index s = ws.start[static_cast<std::size_t>(e)];
    const Index n = ws.len[static_cast<std::size_t>(e)];
    for (Index f = 0; f < F; ++f) {
      if (ws.pre1(e, f) > Real(0)) {
        const Real d = ws.dR(e, f);
        g.conv1_b(f) += d;
        if (const int a = ws.arg1(e, f); a >= 0) {
          g.conv1_w.row(f).noalias() += d * ws.X.row(s + a);
          ws.dX.row(s + a).noalias() += d * p.conv1_w.row(f);
        }
      }
      if (ws.pre2(e, f) > Real(0)) {
        const Real d = ws.dR(e, F + f);
        g.conv2_b(f) += d;
        if (const int a = ws.arg2(e, f); a >= 0) {
          g.conv2_w.row(f).head(E).noalias() += d * ws.X.row(s + a);
          ws.dX.row(s + a).noalias() += d * p.conv2_w.row(f).head(E);
          if (a + 1 < n) {
            g.conv2_w.row(f).tail(E).noalias() += d * ws.X.row(s + a + 1);
            ws.dX.row(s + a + 1).noalias() += d * p.conv2_w.row(f).tail(E);
          }
        }
      }
    }
  }
  if (use_dropout) ws.dX.array() *= ws.maskX.array();

  for (Index r = 0; r < total; ++r) {
    const auto tok = ws.row_token[static_cast<std::size_t>(r)];
    if (tok == Vocab::kPad) continue;
    auto& slot = g.slot[static_cast<std::size_t>(tok)];
    if (slot < 0) {
      slot = static_cast<std::int32_t>(g.emb_rows.size());
      g.emb_rows.push_back(tok);
      g.emb.conservativeResize(static_cast<Index>(g.emb_rows.size()), E);
      g.emb.row(slot).setZero();
    }
    g.emb.row(slot) += ws.dX.row(r);
  }
  return loss;
}

/// Adam / Nadam; embedding moments update lazily on touched rows only.
template <class Real>
class CnnOptimizer {
 public:
  using Mat = typename CnnParams<Real>::Mat;
  using Vec = typename CnnParams<Real>::Vec;

  CnnOptimizer(const CnnParams<Real>& p, double lr, CnnHyper::Optimizer kind) : lr_(lr), kind_(kind) {
    emb_m_ = Mat::Zero(p.embedding.rows(), p.embedding.cols());
    emb_v_ = emb_m_;
    init(c1w_, p.conv1_w), init(c1b_, p.conv1_b), init(c2w_, p.conv2_w), init(c2b_, p.conv2_b);
    init(dw_, p.dense_w), init(db_, p.dense_b), init(ow_, p.out_w);
  }

  void step(CnnParams<Real>& p, const CnnGrads<Real>& g) {
    ++t_;
    const double b1t = std::pow(kBeta1, static_cast<double>(t_));
    const double b1t1 = std::pow(kBeta1, static_cast<double>(t_ + 1));
    const double b2t = std::pow(kBeta2, static_cast<double>(t_));
    auto update = [&](auto param, auto grad, auto m, auto v) {
      m = Real(kBeta1) * m + Real(1 - kBeta1) * grad;
      v = Real(kBeta2) * v + Real(1 - kBeta2) * grad.square();
      if (kind_ == CnnHyper::Optimizer::Adam) {
        const Real a = Real(lr_ * std::sqrt(1 - b2t) / (1 - b1t));
        param -= a * m / (v.sqrt() + Real(kEps));
      } else {
        const auto mhat = Real(kBeta1 / (1 - b1t1)) * m + Real((1 - kBeta1) / (1 - b1t)) * grad;
        const auto vhat = v / Real(1 - b2t);
        param -= Real(lr_) * mhat / (vhat.sqrt() + Real(kEps));
      }
    };
    update(p.conv1_w.array(), g.conv1_w.array(), c1w_.m.array(), c1w_.v.array());
    update(p.conv1_b.array(), g.conv1_b.array(), c1b_.m.array(), c1b_.v.array());
    update(p.conv2_w.array(), g.conv2_w.array(), c2w_.m.array(), c2w_.v.array());
    update(p.conv2_b.array(), g.conv2_b.array(), c2b_.m.array(), c2b_.v.array());
    update(p.dense_w.array(), g.dense_w.array(), dw_.m.array(), dw_.v.array());
    update(p.dense_b.array(), g.dense_b.array(), db_.m.array(), db_.v.array());
    update(p.out_w.array(), g.out_w.array(), ow_.m.array(), ow_.v.array());
    {
      Eigen::Array<Real, 1, 1> pb, gb;
      pb(0) = p.out_b, gb(0) = g.out_b;
      Eigen::Array<Real, 1, 1> mb, vb;
      mb(0) = ob_m_, vb(0) = ob_v_;
      update(pb, gb, mb, vb);
      p.out_b = pb(0), ob_m_ = mb(0), ob_v_ = vb(0);
    }
    for (std::size_t i = 0; i < g.emb_rows.size(); ++i) {
      const auto r = g.emb_rows[i];
      if (r == Vocab::kPad) continue;
      update(p.embedding.row(r).array(), g.emb.row(static_cast<Eigen::Index>(i)).array(),
             emb_m_.row(r).array(), emb_v_.row(r).array());
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-7;

  template <class M>
  struct Moments {
    M m, v;
  };
  template <class M>
  static void init(Moments<M>& mo, const M& like) {
    mo.m = M::Zero(like.rows(), like.cols());
    mo.v = mo.m;
  }

  double lr_;
  CnnHyper::Optimizer kind_;
  long t_ = 0;
  Mat emb_m_, emb_v_;
  Moments<Mat> c1w_, c2w_, dw_;
  Moments<Vec> c1b_, c2b_, db_, ow_;
  Real ob_m_ = 0, ob_v_ = 0;
};

/// Eval-mode probabilities for every example.
template <class Real>
std::vector<Real> cnn_predict(const CnnParams<Real>& p, const LabeledDataset& data, std::size_t batch = 256) {
  std::vector<Real> out(data.size());
  CnnWorkspace<Real> ws;
  std::vector<std::size_t> idx;
  std::vector<Real> probs;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    idx.clear();
    for (std::size_t i = b; i < std::min(data.size(), b + batch); ++i) idx.push_back(i);
    cnn_batch<Real>(p, data, idx, {}, false, 0.0, nullptr, nullptr, &probs, ws);
    std::copy(probs.begin(), probs.end(), out.begin() + static_cast<std::ptrdiff_t>(b));
  }
  return out;
}

template <class Real>
double cnn_mean_loss(const CnnParams<Real>& p, const LabeledDataset& data, std::span<const Real> target,
                     std::size_t batch = 256) {
  CnnWorkspace<Real> ws;
  std::vector<std::size_t> idx;
  double total = 0;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    idx.clear();
    for (std::size_t i = b; i < std::min(data.size(), b + batch); ++i) idx.push_back(i);
    const double l = cnn_batch<Real>(p, data, idx, target.subspan(b, idx.size()), false, 0.0, nullptr, nullptr,
                                     nullptr, ws);
    total += l * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_macro_f = 0;
  bool improved = false;
};

struct CnnTrainResult {
  CnnParams<float> params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

namespace detail {

inline double binary_macro_f(const std::vector<float>& probs, const std::vector<float>& target) {
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] > 0.5f;
    const bool gold = target[i] > 0.5f;
    tp += pred && gold, fp += pred && !gold, fn += !pred && gold, tn += !pred && !gold;
  }
  auto f1 = [](double a, double b, double c) { return a > 0 ? 2 * a / (2 * a + b + c) : 0.0; };
  return 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
}

}  // namespace detail

/// One-vs-rest training for `target_class` with early stopping on the
/// validation split; returns the best-validation parameters.
inline CnnTrainResult train_cnn(const LabeledDataset& train, const LabeledDataset& val, Label target_class,
                                const EmbeddingMatrix& init_emb, const CnnHyper& h) {
  if (train.size() == 0 || val.size() == 0) throw ValidationError("training and validation splits must be nonempty");
  if (train.context_dim() != val.context_dim()) throw ValidationError("train/validation context mismatch");
  if (std::none_of(train.y.begin(), train.y.end(), [&](Label l) { return l == target_class; }))
    throw ValidationError(std::string("target class ") + std::string(to_string(target_class)) +
                          " absent from training data");
  if (h.batch == 0) throw ValidationError("batch size must be positive");

  std::mt19937_64 rng(h.seed);
  CnnTrainResult res;
  auto params = init_cnn<float>(init_emb, train.context_dim(), h, rng);
  CnnOptimizer<float> opt(params, h.lr, h.optimizer);
  CnnGrads<float> grads;
  grads.reset(params);
  CnnWorkspace<float> ws;

  auto targets = [&](const LabeledDataset& d) {
    std::vector<float> t(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) t[i] = d.y[i] == target_class ? 1.f : 0.f;
    return t;
  };
  const auto ytrain = targets(train);
  const auto yval = targets(val);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> bidx;
  std::vector<float> btarget;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  res.params = params;

  for (std::size_t epoch = 1; epoch <= h.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += h.batch) {
      const std::size_t e = std::min(order.size(), b + h.batch);
      bidx.assign(order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e));
      btarget.clear();
      for (auto i : bidx) btarget.push_back(ytrain[i]);
      grads.reset(params);
      const float l = cnn_batch<float>(params, train, bidx, btarget, true, h.dropout, &rng, &grads, nullptr, ws);
      opt.step(params, grads);
      train_loss += static_cast<double>(l) * static_cast<double>(bidx.size());
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_loss / static_cast<double>(train.size());
    log.val_loss = cnn_mean_loss<float>(params, val, yval);
    log.val_macro_f = detail::binary_macro_f(cnn_predict(params, val), yval);
    const double score = h.stop == CnnHyper::StopMetric::ValLoss ? log.val_loss : -log.val_macro_f;
    if (score < best) {
      best = score;
      res.params = params;
      res.best_epoch = epoch;
      log.improved = true;
      wait = 0;
    } else {
      ++wait;
    }
    res.log.push_back(log);
    if (wait >= h.patience) break;
  }
  if (!res.params.all_finite()) throw RuntimeError("CNN training diverged (non-finite parameters)");
  return res;
}

}  // namespace clex
