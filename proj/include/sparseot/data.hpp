#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "sparseot/common.hpp"
#include "sparseot/trainer.hpp"

namespace sparseot {

// Central source cloud plus an equal mixture over eight ring modes, the
// standard 2-D benchmark pair. Deterministic in the seed.
inline std::pair<PointCloud, PointCloud> gen_eight_gaussians(int n,
                                                             double radius,
                                                             double std_dev,
                                                             uint64_t seed) {
  if (n < 8) throw ConfigError("eight gaussians: need n >= 8");
  if (!(radius > 0) || !(std_dev > 0))
    throw ConfigError("eight gaussians: radius and std must be positive");
  Rng rng(seed);
  PointCloud source = std_dev * gaussian_matrix(rng, n, 2);
  PointCloud target = std_dev * gaussian_matrix(rng, n, 2);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double angle = 2.0 * pi * (i % 8) / 8.0;
    target(i, 0) += radius * std::cos(angle);
    target(i, 1) += radius * std::sin(angle);
  }
  return {std::move(source), std::move(target)};
}

struct SyntheticSpec {
  int n = 512;               // cells per side
  int d = 10;                // genes per cell
  int k = 2;                 // perturbed genes
  double effect = 5.0;       // per-gene shift magnitude
  double noise_sigma = 0.1;  // noise on unperturbed genes, jitter on shifted
  uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.n < 2) throw ConfigError("synthetic: need n >= 2");
  if (spec.k < 1 || spec.k > spec.d)
    throw ConfigError("synthetic: need 1 <= k <= d");
  if (!(spec.effect > 0)) throw ConfigError("synthetic: effect must be > 0");
  if (spec.noise_sigma < 0)
    throw ConfigError("synthetic: noise_sigma must be >= 0");
}

struct SyntheticData {
  PointCloud control;    // base expression draws
  PointCloud perturbed;  // base draws shifted on the truth coordinates
  std::vector<int> truth;
};

// Control cells draw each gene from |N(0,1)|; perturbed cells are the same
// cells with the k truth genes shifted by effect, plus N(0, noise_sigma^2)
// jitter on every gene (per-cell effect variability on the shifted genes,
// measurement noise on the rest). The ground-truth displacement is therefore
// k-sparse up to the jitter. The truth set is a seed-deterministic sample of
// k gene indices.
inline SyntheticData gen_synthetic_perturbation(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);

  std::vector<int> idx(spec.d);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < spec.k; ++i) {
    int j = i + static_cast<int>(rng() % (spec.d - i));
    std::swap(idx[i], idx[j]);
  }
  SyntheticData out;
  out.truth.assign(idx.begin(), idx.begin() + spec.k);
  std::sort(out.truth.begin(), out.truth.end());

  out.control = gaussian_matrix(rng, spec.n, spec.d).cwiseAbs();
  out.perturbed =
      out.control + spec.noise_sigma * gaussian_matrix(rng, spec.n, spec.d);
  for (int g : out.truth) out.perturbed.col(g).array() += spec.effect;
  return out;
}

// Batch sampler drawing rows with replacement from a fixed cloud.
inline Sampler make_resampler(PointCloud cloud) {
  require(cloud.rows() > 0, "resampler: empty cloud");
  return [cloud = std::move(cloud)](Eigen::Index n, Rng& rng) {
    PointCloud batch(n, cloud.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      batch.row(i) = cloud.row(static_cast<Eigen::Index>(
          rng() % static_cast<uint64_t>(cloud.rows())));
    return batch;
  };
}

}  // namespace sparseot
