#pragma once

// Threshold tuning, the three-way cascade, and the linear one-vs-rest
// baseline over averaged embeddings plus summed lexicon scores.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cnn.hpp"
#include "common.hpp"
#include "context.hpp"
#include "splex.hpp"

namespace clex {

struct Thresholds {
  double t_A = 0.5;
  double t_L = 0.5;
};

inline Label cascade_predict(double p_A, double p_L, const Thresholds& th) {
  if (p_A > th.t_A) return Label::Aggression;
  if (p_L > th.t_L) return Label::Loss;
  return Label::Other;
}

inline std::vector<Label> cascade_predict(std::span<const float> p_A, std::span<const float> p_L,
                                          const Thresholds& th) {
  if (p_A.size() != p_L.size()) throw ValidationError("probability lists differ in length");
  std::vector<Label> out(p_A.size());
  for (std::size_t i = 0; i < p_A.size(); ++i) out[i] = cascade_predict(p_A[i], p_L[i], th);
  return out;
}

/// F1 of one class, with 0/0 taken as 0.
inline double class_f1(std::span<const Label> pred, std::span<const Label> gold, Label c) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == c, g = gold[i] == c;
    tp += p && g, fp += p && !g, fn += !p && g;
  }
  return tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline constexpr int kThresholdSteps = 100;

inline double grid_threshold(int i) { return static_cast<double>(i) / kThresholdSteps; }

/// Grid search over {0.00, ..., 1.00}: t_A maximizes Aggression F1 under the
/// cascade, then t_L maximizes Loss F1 given t_A. Ties keep the smallest t.
inline Thresholds tune_thresholds(std::span<const float> p_A, std::span<const float> p_L, std::span<const Label> gold) {
  if (gold.empty()) throw ValidationError("empty validation set");
  if (p_A.size() != gold.size() || p_L.size() != gold.size())
    throw ValidationError("probability lists not aligned with gold labels");

  std::vector<Label> pred(gold.size());
  auto search = [&](Label c, auto&& predict) {
    if (std::none_of(gold.begin(), gold.end(), [&](Label g) { return g == c; })) {
      log::warn(std::string("no ") + std::string(to_string(c)) + " examples in validation set; threshold set to 1.0");
      return 1.0;
    }
    double best_t = 0, best_f = -1;
    for (int i = 0; i <= kThresholdSteps; ++i) {
      const double t = grid_threshold(i);
      for (std::size_t k = 0; k < gold.size(); ++k) pred[k] = predict(k, t);
      const double f = class_f1(pred, gold, c);
      if (f > best_f) best_f = f, best_t = t;
    }
    return best_t;
  };
  Thresholds th;
  // Loss threshold 1.0 while tuning t_A so nothing falls through to Loss;
  // Aggression F1 does not depend on it anyway.
  th.t_A = search(Label::Aggression, [&](std::size_t k, double t) {
    return cascade_predict(p_A[k], p_L[k], Thresholds{t, 1.0});
  });
  th.t_L = search(Label::Loss, [&](std::size_t k, double t) {
    return cascade_predict(p_A[k], p_L[k], Thresholds{th.t_A, t});
  });
  return th;
}

inline constexpr Eigen::Index kLinearDim = static_cast<Eigen::Index>(kEmbeddingDim) + 2;

/// [mean embedding ; summed lexicon scores], optionally followed by the
/// flattened context bundle.
inline Eigen::VectorXd linear_features(std::span<const std::int32_t> tokens, const EmbeddingMatrix& emb,
                                       const SPLexLexicon::Aligned& lex, const ContextBundle* ctx = nullptr) {
  const auto e = tweet_repr(tokens, emb, Combine::Avg);
  const auto s = tweet_repr(tokens, lex, Combine::Sum);
  const Eigen::Index extra = ctx ? ctx->dim() : 0;
  Eigen::VectorXd out(e.size() + s.size() + extra);
  out.head(e.size()) = e;
  out.segment(e.size(), 2) = s;
  if (ctx) out.tail(extra) = ctx->flatten();
  return out;
}

inline constexpr std::array<double, kNumLabels> kDefaultClassWeights{2.0, 1.0, 0.12};

struct LinearConfig {
  std::array<double, kNumLabels> class_weights = kDefaultClassWeights;
  double lambda = 1e-4;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
};

class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(Eigen::MatrixXd w, Eigen::VectorXd b, std::array<double, kNumLabels> class_weights)
      : w_(std::move(w)), b_(std::move(b)), class_weights_(class_weights) {
    if (w_.rows() != kNumLabels || b_.size() != kNumLabels) throw ValidationError("linear model needs 3 classes");
    if (!w_.allFinite() || !b_.allFinite()) throw ValidationError("non-finite linear weights");
  }

  Eigen::Index dim() const { return w_.cols(); }
  const Eigen::MatrixXd& weights() const { return w_; }
  const Eigen::VectorXd& bias() const { return b_; }
  const std::array<double, kNumLabels>& class_weights() const { return class_weights_; }

  Eigen::Vector3d decision(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != w_.cols()) throw ValidationError("feature dimension mismatch");
    return w_ * x + b_;
  }

  /// Argmax; ties resolved in class order Aggression, Loss, Other.
  Label predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const auto d = decision(x);
    int best = 0;
    for (std::size_t c = 1; c < kNumLabels; ++c)
      if (d(c) > d(best)) best = c;
    return kLabels[static_cast<std::size_t>(best)];
  }

 private:
  Eigen::MatrixXd w_;  // 3 x dim
  Eigen::VectorXd b_;
  std::array<double, kNumLabels> class_weights_ = kDefaultClassWeights;
};

/// Weighted hinge loss + L2 per class, minimized by Pegasos stochastic
/// subgradient steps (step 1/(lambda t)). The bias is a constant unit
/// feature, regularized with the weights. Features are rows of `X`.
inline LinearModel train_linear(const RowMatrix& X, std::span<const Label> gold, const LinearConfig& cfg = {}) {
  if (static_cast<std::size_t>(X.rows()) != gold.size()) throw ValidationError("features not aligned with labels");
  std::array<bool, kNumLabels> seen{};
  for (auto g : gold) seen[static_cast<std::size_t>(index_of(g))] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) throw ValidationError("linear training needs at least 2 classes");
  if (cfg.lambda <= 0) throw ValidationError("lambda must be positive");

  const Eigen::Index n = X.rows(), d = X.cols();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(kNumLabels, d);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(kNumLabels);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(c));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0;
    double scale = 1.0;  // true weights are scale * (w, b)
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (auto i : order) {
        ++t;
        const double eta = 1.0 / (cfg.lambda * static_cast<double>(t + 1));
        const double y = index_of(gold[i]) == c ? 1.0 : -1.0;
        const double sw = cfg.class_weights[static_cast<std::size_t>(index_of(gold[i]))];
        const auto xi = X.row(static_cast<Eigen::Index>(i));
        const double margin = y * scale * (xi.dot(w.transpose()) + b);
        scale *= 1.0 - eta * cfg.lambda;
        if (scale < 1e-9) {
          w *= scale, b *= scale;
          scale = 1.0;
        }
        if (sw > 0 && margin < 1.0) {
          const double step = eta * sw * y / scale;
          w += step * xi.transpose();
          b += step;
        }
      }
    }
    W.row(c) = (scale * w).transpose();
    bias(c) = scale * b;
  }
  return LinearModel(std::move(W), std::move(bias), cfg.class_weights);
}

}  // namespace clex
