#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sparseot {

// Rows are samples, columns are coordinates.
using PointCloud = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a computation produces NaN/Inf; callers abort rather than clip.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Mat gaussian_matrix(Rng& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Mat out(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = normal(rng);
  return out;
}

// Worker-thread cap for parallel metric evaluation. Defaults to the hardware
// count; SPARSE_OT_THREADS overrides it.
inline int worker_threads() {
  if (const char* env = std::getenv("SPARSE_OT_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Work is split
// into contiguous chunks so any reduction done per-index stays deterministic.
template <typename Fn>
void parallel_for(Eigen::Index n, Fn&& fn) {
  int nt = std::min<Eigen::Index>(worker_threads(), n);
  if (nt <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  Eigen::Index chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    Eigen::Index lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (Eigen::Index i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace sparseot
