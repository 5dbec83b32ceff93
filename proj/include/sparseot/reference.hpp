#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "sparseot/common.hpp"
#include "sparseot/penalty.hpp"

namespace sparseot {

// Half squared Euclidean cost matrix between two clouds.
inline Mat pairwise_half_sq(const PointCloud& a, const PointCloud& b) {
  require(a.cols() == b.cols(), "cost matrix: dimension mismatch");
  Mat C = -(a * b.transpose());
  C.colwise() += 0.5 * a.rowwise().squaredNorm();
  C.rowwise() += 0.5 * b.rowwise().squaredNorm().transpose();
  return C.cwiseMax(0.0);
}

// Elastic cost: half squared Euclidean plus lambda times the l1 distance.
inline Mat pairwise_elastic(const PointCloud& a, const PointCloud& b,
                            double lambda) {
  Mat C = pairwise_half_sq(a, b);
  if (lambda != 0.0)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        C(i, j) += lambda * (a.row(i) - b.row(j)).lpNorm<1>();
  return C;
}

struct Assignment {
  std::vector<int> target_of;  // source row i matched to target row target_of[i]
  double mean_cost = 0;        // mean over rows of the matched cost entries
};

inline constexpr int kAssignmentMaxN = 512;

// Minimum-cost perfect matching on a square cost matrix via the
// Jonker-Volgenant shortest augmenting path scheme with dual potentials.
inline Assignment solve_assignment(const Mat& C) {
  require(C.rows() == C.cols(), "assignment: cost matrix must be square");
  int n = static_cast<int>(C.rows());
  require(n >= 1, "assignment: empty problem");
  require(n <= kAssignmentMaxN, "assignment: n exceeds exact-solver limit");

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = C(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.target_of.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.target_of[p[j] - 1] = j - 1;
  double total = 0;
  for (int i = 0; i < n; ++i) total += C(i, out.target_of[i]);
  out.mean_cost = total / n;
  return out;
}

// Exact optimal transport between equally weighted clouds of the same size
// under cost 0.5 ||x - y||^2. mean_cost keeps the 1/2 factor.
inline Assignment exact_assignment_w2(const PointCloud& a, const PointCloud& b) {
  require(a.rows() == b.rows(), "exact_assignment_w2: clouds must match in size");
  return solve_assignment(pairwise_half_sq(a, b));
}

struct Coupling {
  Mat plan;  // marginals equal the weight vectors
  Vec f, g;  // dual potentials; plan = exp((f_i + g_j - C_ij) / eps)
  Vec a, b;  // weights
  int iters = 0;
  double marginal_err = 0;
};

// Log-domain Sinkhorn on an explicit cost matrix. Alternates exact dual
// updates via row/column log-sum-exp; stops when the worst absolute marginal
// violation falls below tol. Throws if max_iters is exhausted first.
inline Coupling sinkhorn_cost(const Mat& C, Vec a, Vec b, double eps,
                              int max_iters = 200000, double tol = 1e-6) {
  if (!(eps > 0)) throw ConfigError("sinkhorn: epsilon must be positive");
  require(C.rows() == a.size() && C.cols() == b.size(),
          "sinkhorn: weight sizes must match the cost matrix");
  if (!(a.minCoeff() > 0 && b.minCoeff() > 0))
    throw ConfigError("sinkhorn: weights must be positive");
  a /= a.sum();
  b /= b.sum();
  const Eigen::Index n = C.rows(), m = C.cols();
  Vec loga = a.array().log().matrix(), logb = b.array().log().matrix();
  Vec f = Vec::Zero(n), g = Vec::Zero(m);

  auto lse_rows = [&](Vec& out) {  // out_i = LSE_j((f_i + g_j - C_ij)/eps) - f_i/eps
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j)
        mx = std::max(mx, (g(j) - C(i, j)) / eps);
      double s = 0;
      for (Eigen::Index j = 0; j < m; ++j)
        s += std::exp((g(j) - C(i, j)) / eps - mx);
      out(i) = mx + std::log(s);
    }
  };
  auto lse_cols = [&](Vec& out) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i)
        mx = std::max(mx, (f(i) - C(i, j)) / eps);
      double s = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        s += std::exp((f(i) - C(i, j)) / eps - mx);
      out(j) = mx + std::log(s);
    }
  };

  Vec tmp_n(n), tmp_m(m);
  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iters; ++it) {
    lse_rows(tmp_n);
    f = eps * (loga - tmp_n);
    lse_cols(tmp_m);
    g = eps * (logb - tmp_m);
    // column marginals are exact after the g update; check the rows
    lse_rows(tmp_n);
    err = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      err = std::max(err, std::abs(std::exp(f(i) / eps + tmp_n(i)) - a(i)));
    if (err < tol) break;
  }
  if (err >= tol) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "sinkhorn failed to converge: marginal error %.3e after %d "
                  "iterations",
                  err, max_iters);
    throw NumericalError(buf);
  }

  Coupling out;
  out.plan = ((f.replicate(1, m) + g.transpose().replicate(n, 1) - C) / eps)
                 .array()
                 .exp()
                 .matrix();
  out.f = f;
  out.g = g;
  out.a = a;
  out.b = b;
  out.iters = it + 1;
  out.marginal_err = err;
  return out;
}

// Entropic OT between uniformly weighted clouds under the half squared
// Euclidean cost.
inline Coupling sinkhorn(const PointCloud& x, const PointCloud& y,
                         double eps = 1e-3, int max_iters = 200000,
                         double tol = 1e-6) {
  Vec a = Vec::Constant(x.rows(), 1.0 / x.rows());
  Vec b = Vec::Constant(y.rows(), 1.0 / y.rows());
  return sinkhorn_cost(pairwise_half_sq(x, y), a, b, eps, max_iters, tol);
}

inline double coupling_cost(const Coupling& c, const Mat& C) {
  return (c.plan.array() * C.array()).sum();
}

// Gibbs weights over target atoms for a (possibly out-of-sample) source
// point. The duals absorb the marginal weights, so for in-sample x these are
// exactly the normalized plan rows.
inline Vec elastic_gibbs_weights(const Vec& x, const PointCloud& Y,
                                 double lambda, double eps, const Vec& g_dual) {
  Eigen::Index m = Y.rows();
  Vec logits(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Vec diff = x - Y.row(j).transpose();
    double cost = 0.5 * diff.squaredNorm() + lambda * diff.lpNorm<1>();
    logits(j) = (g_dual(j) - cost) / eps;
  }
  double mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp();
  return p / p.sum();
}

// Entropic estimate of the Monge map under the elastic cost
//   c(x, y) = 0.5 ||x - y||^2 + lambda ||y - x||_1.
// With dual g from a Sinkhorn run on that cost,
//   p_j(x) = softmax_j((g_j - c(x, y_j)) / eps)
//   T(x)   = x - prox_{lambda l1}(x - sum_j p_j(x) (y_j + lambda sign(y_j - x)))
// so a single target atom is hit exactly for every lambda, and lambda = 0
// reduces to the entropic barycentric projection.
inline PointCloud elastic_map_l1(const PointCloud& X, const PointCloud& Y,
                                 double lambda, double eps,
                                 const Coupling& duals) {
  if (!(lambda >= 0))
    throw ConfigError("elastic_map_l1: lambda must be nonnegative");
  if (!(eps > 0)) throw ConfigError("elastic_map_l1: epsilon must be positive");
  require(X.cols() == Y.cols(), "elastic_map_l1: dimension mismatch");
  require(duals.g.size() == Y.rows(),
          "elastic_map_l1: dual size must match the target cloud");

  PointCloud out(X.rows(), X.cols());
  parallel_for(X.rows(), [&](Eigen::Index i) {
    Vec x = X.row(i).transpose();
    Eigen::Index m = Y.rows();
    Vec p = elastic_gibbs_weights(x, Y, lambda, eps, duals.g);

    Vec bar = Vec::Zero(X.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      Vec yj = Y.row(j).transpose();
      Vec s = yj;
      if (lambda != 0.0)
        for (Eigen::Index k = 0; k < s.size(); ++k) {
          double dk = yj(k) - x(k);
          s(k) += lambda * (dk > 0 ? 1.0 : (dk < 0 ? -1.0 : 0.0));
        }
      bar += p(j) * s;
    }
    out.row(i) = (x - prox_l1(x - bar, lambda)).transpose();
  });
  return out;
}

}  // namespace sparseot
