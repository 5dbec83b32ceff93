#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "sparseot/common.hpp"
#include "sparseot/penalty.hpp"

namespace sparseot {

// Mean penalty value of the displacement rows: the sparsity score.
inline double spa(const PointCloud& displacement, const Penalty& tau) {
  return tau.mean_value(displacement);
}

// Sliced squared 2-Wasserstein distance: mean over random unit directions of
// the squared 1-D distance between sorted projections, scaled by the ambient
// dimension (E[(u.z)^2] = ||z||^2/d on the unit sphere, so the scaling makes
// a pure translation estimated without bias). In 1-D the factor is 1 and the
// result is the exact squared W2, with no 1/2. Unequal sample counts are
// handled by deterministically subsampling the larger cloud.
inline double sliced_w2(const PointCloud& a_in, const PointCloud& b_in,
                        int n_proj, uint64_t seed) {
  require(a_in.cols() == b_in.cols(), "sliced_w2: dimension mismatch");
  require(a_in.cols() > 0, "sliced_w2: zero-dimensional clouds");
  require(a_in.rows() > 0 && b_in.rows() > 0, "sliced_w2: empty cloud");
  require(n_proj > 0, "sliced_w2: n_proj must be positive");

  auto subsample = [&](const PointCloud& big, Eigen::Index m) {
    std::vector<Eigen::Index> idx(big.rows());
    std::iota(idx.begin(), idx.end(), 0);
    Rng r(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(idx.begin(), idx.end(), r);
    PointCloud out(m, big.cols());
    for (Eigen::Index i = 0; i < m; ++i) out.row(i) = big.row(idx[i]);
    return out;
  };
  Eigen::Index m = std::min(a_in.rows(), b_in.rows());
  PointCloud a = a_in.rows() == m ? a_in : subsample(a_in, m);
  PointCloud b = b_in.rows() == m ? b_in : subsample(b_in, m);

  Eigen::Index d = a.cols();
  Mat dirs(n_proj, d);
  Rng rng(seed);
  for (int p = 0; p < n_proj; ++p) {
    Vec dir;
    do {
      dir = gaussian_matrix(rng, d, 1).col(0);
    } while (dir.norm() < 1e-12);
    dirs.row(p) = dir.transpose() / dir.norm();
  }

  std::vector<double> per_proj(n_proj, 0.0);
  Mat pa = a * dirs.transpose();  // m x n_proj
  Mat pb = b * dirs.transpose();
  parallel_for(n_proj, [&](Eigen::Index p) {
    std::vector<double> xs(pa.col(p).data(), pa.col(p).data() + m);
    std::vector<double> ys(pb.col(p).data(), pb.col(p).data() + m);
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double s = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      double diff = xs[i] - ys[i];
      s += diff * diff;
    }
    per_proj[p] = s / static_cast<double>(m);
  });
  double total = 0;
  for (double v : per_proj) total += v;
  return static_cast<double>(d) * total / n_proj;
}

// Expanding min/max window used to normalize Spa and Res before mixing.
struct EvalBounds {
  double spa_lo = std::numeric_limits<double>::infinity();
  double spa_hi = -std::numeric_limits<double>::infinity();
  double res_lo = std::numeric_limits<double>::infinity();
  double res_hi = -std::numeric_limits<double>::infinity();

  void expand(double spa_v, double res_v) {
    spa_lo = std::min(spa_lo, spa_v);
    spa_hi = std::max(spa_hi, spa_v);
    res_lo = std::min(res_lo, res_v);
    res_hi = std::max(res_hi, res_v);
  }

  bool seen() const { return spa_hi >= spa_lo; }
};

// Eval = a * norm(Spa) + (1-a) * norm(Res) with min-max normalization over
// the supplied bounds; a degenerate window (hi == lo) normalizes to 0.
inline double eval_score(double spa_v, double res_v, double a,
                         const EvalBounds& bounds) {
  if (!(a >= 0.0 && a <= 1.0))
    throw ConfigError("eval_score: weight must be in [0,1]");
  auto norm = [](double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.0;
  };
  return a * norm(spa_v, bounds.spa_lo, bounds.spa_hi) +
         (1.0 - a) * norm(res_v, bounds.res_lo, bounds.res_hi);
}

// Mean number of coordinates per row whose displacement magnitude exceeds
// the threshold.
inline double displacement_dim(const PointCloud& disp, double threshold = 1e-2) {
  require(disp.rows() > 0, "displacement_dim: empty input");
  double total = 0;
  for (Eigen::Index i = 0; i < disp.rows(); ++i)
    for (Eigen::Index j = 0; j < disp.cols(); ++j)
      if (std::abs(disp(i, j)) > threshold) total += 1;
  return total / static_cast<double>(disp.rows());
}

// Fraction of the true coordinate set recovered by taking the |truth| largest
// coordinates by mean absolute displacement. Coordinates whose mean magnitude
// stays at or below the threshold are never selected, so a map that moved
// fewer than |truth| coordinates is penalized.
inline double gene_overlap(const PointCloud& disp, const std::vector<int>& truth,
                           double threshold = 1e-2) {
  require(!truth.empty(), "gene_overlap: empty truth set");
  require(truth.size() <= static_cast<size_t>(disp.cols()),
          "gene_overlap: truth set larger than the dimension");
  require(disp.rows() > 0, "gene_overlap: empty displacement");
  for (int t : truth)
    require(t >= 0 && t < disp.cols(), "gene_overlap: truth index out of range");

  Vec mean_abs = disp.cwiseAbs().colwise().mean().transpose();
  std::vector<int> order(disp.cols());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return mean_abs(i) > mean_abs(j); });

  size_t k = truth.size();
  std::vector<char> selected(disp.cols(), 0);
  size_t taken = 0;
  for (int idx : order) {
    if (taken == k) break;
    if (mean_abs(idx) <= threshold) break;  // sorted, so the rest is smaller
    selected[idx] = 1;
    ++taken;
  }
  size_t hits = 0;
  for (int t : truth) hits += selected[t];
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace sparseot
