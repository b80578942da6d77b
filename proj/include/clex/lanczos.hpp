#pragma once

// Truncated SVD by Golub-Kahan-Lanczos bidiagonalization with full
// reorthogonalization. The Krylov basis grows until the leading k Ritz
// triplets have converged or the basis spans the whole space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace clex {

struct SvdResult {
  Eigen::MatrixXd U;  // m x r, orthonormal columns
  Eigen::VectorXd S;  // r, descending, all > 0
  Eigen::MatrixXd V;  // n x r
};

namespace detail {

inline void reorthogonalize(Eigen::Ref<Eigen::VectorXd> x, const Eigen::MatrixXd& Q, Eigen::Index cols) {
  if (cols == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd c = Q.leftCols(cols).transpose() * x;
    x -= Q.leftCols(cols) * c;
  }
}

inline Eigen::VectorXd random_unit_orthogonal(Eigen::Index n, const Eigen::MatrixXd& Q,
                                              Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = g(rng);
    reorthogonalize(x, Q, cols);
    const double nrm = x.norm();
    if (nrm > 1e-8) return x / nrm;
  }
  return Eigen::VectorXd::Zero(n);
}

}  // namespace detail

/// Leading min(k, rank) singular triplets of `A` (dense or sparse Eigen
/// matrix). Columns are sign-fixed so each U column's largest-magnitude
/// entry is positive.
template <class Matrix>
SvdResult truncated_svd(const Matrix& A, std::size_t k, std::uint64_t seed = 1, double tol = 1e-10) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const Index m = A.rows();
  const Index n = A.cols();
  const Index p = std::min(m, n);
  const Index want = std::min<Index>(static_cast<Index>(k), p);
  SvdResult res;
  if (want == 0) {
    res.U.resize(m, 0), res.S.resize(0), res.V.resize(n, 0);
    return res;
  }

  std::mt19937_64 rng(seed);
  Index cap = std::min<Index>(p, 2 * want + 20);
  MatrixXd Ub(m, cap);
  MatrixXd Vb(n, cap + 1);
  std::vector<double> alpha, beta;
  double anorm = 0;
  const double eps = std::numeric_limits<double>::epsilon();

  Vb.col(0) = detail::random_unit_orthogonal(n, Vb, 0, rng);
  Index steps = 0;
  Eigen::BDCSVD<MatrixXd> bsvd;
  MatrixXd B;

  while (true) {
    const Index j = steps;
    VectorXd u = A * Vb.col(j);
    if (j > 0) u -= beta[static_cast<std::size_t>(j - 1)] * Ub.col(j - 1);
    detail::reorthogonalize(u, Ub, j);
    double a = u.norm();
    anorm = std::max(anorm, a);
    if (a <= 1e-12 * anorm || a == 0.0) {
      a = 0.0;
      u = detail::random_unit_orthogonal(m, Ub, j, rng);
    } else {
      u /= a;
    }
    Ub.col(j) = u;
    alpha.push_back(a);

    VectorXd w = A.transpose() * Ub.col(j);
    w -= a * Vb.col(j);
    detail::reorthogonalize(w, Vb, j + 1);
    double b = w.norm();
    anorm = std::max(anorm, b);
    const bool space_full = j + 1 >= n;
    if (b <= 1e-12 * anorm || b == 0.0 || space_full) {
      b = 0.0;
      w = space_full ? VectorXd::Zero(n) : detail::random_unit_orthogonal(n, Vb, j + 1, rng);
    } else {
      w /= b;
    }
    Vb.col(j + 1) = w;
    beta.push_back(b);
    steps = j + 1;

    if (steps < cap && steps < p) continue;

    B = MatrixXd::Zero(steps, steps);
    for (Index i = 0; i < steps; ++i) {
      B(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < steps) B(i, i + 1) = beta[static_cast<std::size_t>(i)];
    }
    bsvd.compute(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd& sv = bsvd.singularValues();
    const double smax = std::max(sv(0), eps);
    bool converged = steps >= p;
    if (!converged) {
      converged = true;
      const double last_beta = beta.back();
      for (Index i = 0; i < want; ++i)
        if (last_beta * std::abs(bsvd.matrixU()(steps - 1, i)) > tol * smax) {
          converged = false;
          break;
        }
    }
    if (converged) break;
    cap = std::min<Index>(p, cap * 2);
    Ub.conservativeResize(Eigen::NoChange, cap);
    Vb.conservativeResize(Eigen::NoChange, cap + 1);
  }

  const VectorXd& sv = bsvd.singularValues();
  const double cutoff = std::max<double>(static_cast<double>(std::max(m, n)) * eps * sv(0), 1e-300);
  Index rank = 0;
  while (rank < want && sv(rank) > cutoff) ++rank;

  res.S = sv.head(rank);
  res.U = Ub.leftCols(steps) * bsvd.matrixU().leftCols(rank);
  res.V = Vb.leftCols(steps) * bsvd.matrixV().leftCols(rank);
  for (Index c = 0; c < rank; ++c) {
    Index arg = 0;
    res.U.col(c).cwiseAbs().maxCoeff(&arg);
    if (res.U(arg, c) < 0) {
      res.U.col(c) *= -1.0;
      res.V.col(c) *= -1.0;
    }
  }
  return res;
}

}  // namespace clex
