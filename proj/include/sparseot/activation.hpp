#pragma once

#include <cmath>
#include <string>

#include "sparseot/common.hpp"

namespace sparseot {

// Convex nondecreasing scalar nonlinearities. leaky_softplus mixes in a small
// linear term so the slope never vanishes: a*t + (1-a)*softplus(t).
enum class Activation { softplus, relu, leaky_softplus };

inline constexpr double kLeakySlope = 0.05;

inline double stable_softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// order 0 = value, 1 = first derivative, 2 = second derivative.
inline double activation_eval(Activation a, double t, int order) {
  switch (a) {
    case Activation::softplus:
      if (order == 0) return stable_softplus(t);
      if (order == 1) return sigmoid(t);
      {
        double s = sigmoid(t);
        return s * (1.0 - s);
      }
    case Activation::relu:
      if (order == 0) return t > 0 ? t : 0.0;
      if (order == 1) return t > 0 ? 1.0 : 0.0;
      return 0.0;
    case Activation::leaky_softplus:
      if (order == 0) return kLeakySlope * t + (1.0 - kLeakySlope) * stable_softplus(t);
      if (order == 1) return kLeakySlope + (1.0 - kLeakySlope) * sigmoid(t);
      {
        double s = sigmoid(t);
        return (1.0 - kLeakySlope) * s * (1.0 - s);
      }
  }
  throw ConfigError("unknown activation");
}

inline Mat activation_apply(Activation a, int order, const Mat& in) {
  Mat out(in.rows(), in.cols());
  for (Eigen::Index j = 0; j < in.cols(); ++j)
    for (Eigen::Index i = 0; i < in.rows(); ++i)
      out(i, j) = activation_eval(a, in(i, j), order);
  return out;
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "softplus") return Activation::softplus;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_softplus") return Activation::leaky_softplus;
  throw ConfigError("unknown activation '" + s +
                    "' (valid: softplus, relu, leaky_softplus)");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
    case Activation::leaky_softplus: return "leaky_softplus";
  }
  return "?";
}

}  // namespace sparseot
