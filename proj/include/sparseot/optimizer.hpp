#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sparseot/icnn.hpp"

namespace sparseot {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

// Moment accumulators shaped like the trainable network parameters. The
// quadratic head is a fixed inductive bias and is not updated.
struct AdamState {
  std::vector<Mat> mWy, vWy, mWz, vWz;
  std::vector<Vec> mb, vb;
  long step = 0;
};

inline AdamState adam_state_like(const IcnnNet& net) {
  AdamState s;
  for (int l = 0; l < net.n_layers(); ++l) {
    s.mWy.push_back(Mat::Zero(net.Wy[l].rows(), net.Wy[l].cols()));
    s.vWy.push_back(Mat::Zero(net.Wy[l].rows(), net.Wy[l].cols()));
    if (l > 0) {
      s.mWz.push_back(Mat::Zero(net.Wz[l].rows(), net.Wz[l].cols()));
      s.vWz.push_back(Mat::Zero(net.Wz[l].rows(), net.Wz[l].cols()));
    } else {
      s.mWz.emplace_back();
      s.vWz.emplace_back();
    }
    s.mb.push_back(Vec::Zero(net.b[l].size()));
    s.vb.push_back(Vec::Zero(net.b[l].size()));
  }
  return s;
}

namespace detail {

template <typename T>
void adam_update_one(T& w, T& m, T& v, const T& grad, const AdamConfig& cfg,
                     double direction, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square())
          .matrix();
  w += direction * cfg.lr *
       ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps)).matrix();
}

}  // namespace detail

// One adaptive-moment update over every trainable parameter. direction = -1
// descends, +1 ascends. Non-finite gradients abort with the offending layer.
inline void adam_apply(IcnnNet& net, AdamState& st, const IcnnGrads& g,
                       const AdamConfig& cfg, double direction) {
  require(static_cast<int>(g.dWy.size()) == net.n_layers(),
          "adam: gradient layer count mismatch");
  st.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (int l = 0; l < net.n_layers(); ++l) {
    if (!g.dWy[l].allFinite() || !g.db[l].allFinite() ||
        (l > 0 && !g.dWz[l].allFinite()))
      throw NumericalError("non-finite gradient in layer " + std::to_string(l));
    detail::adam_update_one(net.Wy[l], st.mWy[l], st.vWy[l], g.dWy[l], cfg,
                            direction, bc1, bc2);
    if (l > 0)
      detail::adam_update_one(net.Wz[l], st.mWz[l], st.vWz[l], g.dWz[l], cfg,
                              direction, bc1, bc2);
    detail::adam_update_one(net.b[l], st.mb[l], st.vb[l], g.db[l], cfg,
                            direction, bc1, bc2);
  }
}

}  // namespace sparseot
