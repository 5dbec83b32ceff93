#pragma once

#include <cmath>
#include <map>
#include <string>

#include "sparseot/common.hpp"

namespace sparseot {

// Sparsity penalties applied coordinatewise to displacement vectors.
//   l1    sum |z_i|
//   stvs  gamma^2 * sum (u + 1/2 - exp(-2u)/2), u = asinh(|z_i| / (2 gamma))
//   sl0   sum (1 - exp(-z_i^2 / (2 xi^2)))
// All three are even, vanish at the origin, and are nondecreasing in |z_i|;
// stvs takes asinh of the magnitude so those properties hold on both signs.
enum class PenaltyKind { l1, stvs, sl0 };

struct Penalty {
  PenaltyKind kind = PenaltyKind::l1;
  double gamma = 100.0;  // stvs shape parameter
  double xi = 1.0;       // sl0 length scale

  double value1(double z) const {
    switch (kind) {
      case PenaltyKind::l1:
        return std::abs(z);
      case PenaltyKind::stvs: {
        double u = std::asinh(std::abs(z) / (2.0 * gamma));
        return gamma * gamma * (u + 0.5 - 0.5 * std::exp(-2.0 * u));
      }
      case PenaltyKind::sl0:
        return 1.0 - std::exp(-z * z / (2.0 * xi * xi));
    }
    return 0.0;
  }

  // Subgradient convention at kinks: 0.
  double grad1(double z) const {
    switch (kind) {
      case PenaltyKind::l1:
        return z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
      case PenaltyKind::stvs: {
        if (z == 0) return 0.0;
        double r = std::abs(z) / (2.0 * gamma);
        double u = std::asinh(r);
        double du = 1.0 / (2.0 * gamma * std::sqrt(1.0 + r * r));
        double g = gamma * gamma * (1.0 + std::exp(-2.0 * u)) * du;
        return z > 0 ? g : -g;
      }
      case PenaltyKind::sl0:
        return z / (xi * xi) * std::exp(-z * z / (2.0 * xi * xi));
    }
    return 0.0;
  }

  double value(const Vec& z) const {
    check_finite(z);
    double s = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += value1(z(i));
    return s;
  }

  Vec grad(const Vec& z) const {
    check_finite(z);
    Vec g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) g(i) = grad1(z(i));
    return g;
  }

  // Per-row value of an n x d displacement matrix.
  Vec value_rows(const Mat& rows) const {
    check_finite(rows);
    Vec out = Vec::Zero(rows.rows());
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      for (Eigen::Index i = 0; i < rows.rows(); ++i)
        out(i) += value1(rows(i, j));
    return out;
  }

  double mean_value(const Mat& rows) const {
    if (rows.rows() == 0) throw DimensionError("penalty over empty matrix");
    return value_rows(rows).mean();
  }

  Mat grad_rows(const Mat& rows) const {
    check_finite(rows);
    Mat out(rows.rows(), rows.cols());
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      for (Eigen::Index i = 0; i < rows.rows(); ++i)
        out(i, j) = grad1(rows(i, j));
    return out;
  }

 private:
  static void check_finite(const Mat& z) {
    if (!z.allFinite()) throw NumericalError("penalty input contains NaN/Inf");
  }
};

inline Penalty penalty_from_config(const std::string& name,
                                   const std::map<std::string, double>& params) {
  Penalty p;
  auto take = [&params](const char* key, double fallback, double& dst) {
    auto it = params.find(key);
    dst = it == params.end() ? fallback : it->second;
  };
  if (name == "l1") {
    p.kind = PenaltyKind::l1;
    if (!params.empty())
      throw ConfigError("penalty 'l1' takes no parameters");
    return p;
  }
  if (name == "stvs") {
    p.kind = PenaltyKind::stvs;
    for (const auto& [k, v] : params)
      if (k != "gamma") throw ConfigError("penalty 'stvs' only accepts 'gamma'");
    take("gamma", 100.0, p.gamma);
    if (p.gamma <= 0) throw ConfigError("stvs gamma must be positive");
    return p;
  }
  if (name == "sl0") {
    p.kind = PenaltyKind::sl0;
    for (const auto& [k, v] : params)
      if (k != "xi") throw ConfigError("penalty 'sl0' only accepts 'xi'");
    take("xi", 1.0, p.xi);
    if (p.xi <= 0) throw ConfigError("sl0 xi must be positive");
    return p;
  }
  throw ConfigError("unknown penalty '" + name + "' (valid: l1, stvs, sl0)");
}

inline std::string to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::l1: return "l1";
    case PenaltyKind::stvs: return "stvs";
    case PenaltyKind::sl0: return "sl0";
  }
  return "?";
}

// Soft-thresholding, the proximal map of t * l1.
inline Vec prox_l1(const Vec& v, double t) {
  if (t < 0) throw ConfigError("prox threshold must be nonnegative");
  if (!v.allFinite()) throw NumericalError("prox input contains NaN/Inf");
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double mag = std::abs(v(i)) - t;
    out(i) = mag > 0 ? (v(i) > 0 ? mag : -mag) : 0.0;
  }
  return out;
}

inline Mat prox_l1_rows(const Mat& rows, double t) {
  if (t < 0) throw ConfigError("prox threshold must be nonnegative");
  if (!rows.allFinite()) throw NumericalError("prox input contains NaN/Inf");
  Mat out(rows.rows(), rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j)
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      double v = rows(i, j);
      double mag = std::abs(v) - t;
      out(i, j) = mag > 0 ? (v > 0 ? mag : -mag) : 0.0;
    }
  return out;
}

}  // namespace sparseot
