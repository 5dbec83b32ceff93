#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sparseot/autodiff.hpp"
#include "sparseot/icnn.hpp"
#include "sparseot/metrics.hpp"
#include "sparseot/optimizer.hpp"
#include "sparseot/penalty.hpp"

namespace sparseot {

// Draws n fresh samples from a distribution using the caller's RNG stream.
using Sampler = std::function<PointCloud(Eigen::Index n, Rng& rng)>;

struct TrainConfig {
  int batch_size = 128;
  double lr_f = 1e-4;
  double lr_g = 1e-4;
  int inner_steps = 10;  // g updates per f update
  int total_iters = 1;
  double lambda = 0.0;
  Penalty penalty{PenaltyKind::l1};
  uint64_t seed = 0;
  int log_every = 100;
  int eval_n = 512;     // held-out cloud size used for trajectory metrics
  int n_proj = 128;     // projections for the residue metric
  double eval_a = 0.9;  // Spa weight inside the combined score
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (cfg.inner_steps < 1) throw ConfigError("train: inner_steps must be >= 1");
  if (cfg.total_iters < 0) throw ConfigError("train: total_iters must be >= 0");
  if (cfg.lambda < 0) throw ConfigError("train: lambda must be nonnegative");
  if (cfg.lr_f < 0 || cfg.lr_g < 0)
    throw ConfigError("train: learning rates must be nonnegative");
  if (cfg.log_every < 1) throw ConfigError("train: log_every must be >= 1");
  if (cfg.eval_n < 2) throw ConfigError("train: eval_n must be >= 2");
  if (cfg.n_proj < 1) throw ConfigError("train: n_proj must be >= 1");
  if (cfg.eval_a < 0 || cfg.eval_a > 1)
    throw ConfigError("train: eval_a must be in [0,1]");
}

struct DualPair {
  IcnnNet f, g;
  AdamState opt_f, opt_g;
};

// Both potentials start from the same architecture with a unit quadratic
// head, so the initial map is near the identity and exactly-zero
// displacements stay representable.
inline DualPair make_dual_pair(int input_dim, const std::vector<int>& widths,
                               Activation act, uint64_t seed) {
  DualPair pair;
  pair.f = icnn_init(input_dim, widths, act, seed * 2 + 1);
  pair.g = icnn_init(input_dim, widths, act, seed * 2 + 2);
  pair.f.quad_scale = 1.0;
  pair.g.quad_scale = 1.0;
  pair.opt_f = adam_state_like(pair.f);
  pair.opt_g = adam_state_like(pair.g);
  return pair;
}

// Map and displacement recovered from the potential g.
inline PointCloud transport(const IcnnNet& g, const PointCloud& ys) {
  return icnn_grad_input_batch(g, ys);
}

inline PointCloud displacement(const IcnnNet& g, const PointCloud& ys) {
  return transport(g, ys) - ys;
}

// C term of the dual identity: half the mean squared norms of both clouds.
inline double estimate_c(const PointCloud& xs, const PointCloud& ys) {
  require(xs.rows() > 0 && ys.rows() > 0, "estimate_c: empty batch");
  return 0.5 * (xs.rowwise().squaredNorm().mean() +
                ys.rowwise().squaredNorm().mean());
}

// Regularized dual objective
//   -E[f(x)] - E[<y, Gy> - f(Gy)] + lambda E[tau(Gy - y)],   Gy = grad g(y).
// The additive C constant is excluded; add estimate_c for the full value.
inline double dual_objective(const DualPair& pair, const PointCloud& xs,
                             const PointCloud& ys, double lambda,
                             const Penalty& tau) {
  require(xs.rows() > 0 && ys.rows() > 0, "dual_objective: empty batch");
  require(xs.cols() == ys.cols(), "dual_objective: dimension mismatch");
  PointCloud Gy = icnn_grad_input_batch(pair.g, ys);
  double f_x = icnn_eval_batch(pair.f, xs).col(0).mean();
  double f_gy = icnn_eval_batch(pair.f, Gy).col(0).mean();
  double corr = ys.cwiseProduct(Gy).rowwise().sum().mean();
  double value = -f_x - corr + f_gy;
  if (lambda != 0.0) value += lambda * tau.mean_value(Gy - ys);
  if (!std::isfinite(value))
    throw NumericalError("dual objective is non-finite");
  return value;
}

namespace detail {

// One descent step on g over the g-dependent terms
//   E[f(Gy) - <y, Gy>] + lambda E[tau(Gy - y)]
// with f's parameters frozen on the tape (gradients still flow through f's
// layers into Gy).
inline void g_update(DualPair& pair, const PointCloud& ys,
                     const TrainConfig& cfg) {
  Tape tape;
  IcnnTapeParams pf = icnn_register(tape, pair.f, /*frozen=*/true);
  IcnnTapeParams pg = icnn_register(tape, pair.g, /*frozen=*/false);
  NodeId yn = tape.leaf(ys);
  NodeId gy = icnn_grad_input_node(tape, pair.g, pg, yn);
  NodeId f_gy = icnn_value_node(tape, pair.f, pf, gy);
  NodeId loss = tape.sub(f_gy, tape.dot_rows(yn, gy));
  if (cfg.lambda != 0.0)
    loss = tape.add(loss, tape.scale(tape.penalty_rows(tape.sub(gy, yn),
                                                       cfg.penalty),
                                     cfg.lambda));
  tape.backward(tape.mean_all(loss));
  IcnnGrads grads = collect_grads(tape, pg);
  adam_apply(pair.g, pair.opt_g, grads,
             AdamConfig{.lr = cfg.lr_g, .beta1 = 0.5, .beta2 = 0.9, .eps = 1e-8},
             -1.0);
  icnn_project(pair.g);
}

// One ascent step on f over its part of the objective, E[f(Gy)] - E[f(x)].
// Gy is a constant input here, so no tape is needed for g.
inline void f_update(DualPair& pair, const PointCloud& xs, const PointCloud& ys,
                     const TrainConfig& cfg) {
  PointCloud Gy = icnn_grad_input_batch(pair.g, ys);
  Tape tape;
  IcnnTapeParams pf = icnn_register(tape, pair.f, /*frozen=*/false);
  NodeId value = tape.sub(
      tape.mean_all(icnn_value_node(tape, pair.f, pf, tape.leaf(Gy))),
      tape.mean_all(icnn_value_node(tape, pair.f, pf, tape.leaf(xs))));
  tape.backward(value);
  IcnnGrads grads = collect_grads(tape, pf);
  adam_apply(pair.f, pair.opt_f, grads,
             AdamConfig{.lr = cfg.lr_f, .beta1 = 0.5, .beta2 = 0.9, .eps = 1e-8},
             +1.0);
  icnn_project(pair.f);
}

}  // namespace detail

struct TrajectoryRecord {
  long iter = 0;
  double lambda = 0;
  double obj = 0;
  double spa = 0;
  double res = 0;
  double eval = 0;
  double dim = 0;
  bool has_accepted = false;  // set by the annealing controller
  bool accepted = false;
};

using Trajectory = std::vector<TrajectoryRecord>;

// Owns one minimax training run: the dual pair, its RNG stream, a fixed
// held-out evaluation pair of clouds, and the running normalization bounds.
// The annealing controller drives the same instance in chunks so optimizer
// moments, the data stream, and the bounds survive lambda changes.
class Trainer {
 public:
  Trainer(DualPair pair, Sampler sample_p, Sampler sample_q, TrainConfig cfg)
      : pair_(std::move(pair)),
        sample_p_(std::move(sample_p)),
        sample_q_(std::move(sample_q)),
        cfg_(cfg),
        rng_(cfg.seed) {
    validate(cfg_);
    eval_xs_ = sample_p_(cfg_.eval_n, rng_);
    eval_ys_ = sample_q_(cfg_.eval_n, rng_);
    require(eval_xs_.cols() == pair_.f.input_dim &&
                eval_ys_.cols() == pair_.g.input_dim,
            "trainer: sampler dimension does not match the networks");
  }

  // inner_steps descent updates on g with fresh target batches, then one
  // ascent update on f. Returns the objective on the f-step batch.
  double train_step() {
    try {
      for (int k = 0; k < cfg_.inner_steps; ++k)
        detail::g_update(pair_, sample_q_(cfg_.batch_size, rng_), cfg_);
      PointCloud xs = sample_p_(cfg_.batch_size, rng_);
      PointCloud ys = sample_q_(cfg_.batch_size, rng_);
      detail::f_update(pair_, xs, ys, cfg_);
      last_obj_ = dual_objective(pair_, xs, ys, cfg_.lambda, cfg_.penalty);
    } catch (const NumericalError& e) {
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "training aborted at iteration %ld (lambda=%.6g): %s",
                    iter_ + 1, cfg_.lambda, e.what());
      throw NumericalError(buf);
    }
    ++iter_;
    return last_obj_;
  }

  // Runs n train steps, logging a trajectory record every log_every.
  void train(int n) {
    for (int i = 0; i < n; ++i) {
      train_step();
      if (iter_ % cfg_.log_every == 0) log_record();
    }
  }

  // Metrics on the held-out clouds at the current parameters.
  TrajectoryRecord snapshot() {
    PointCloud disp = displacement(pair_.g, eval_ys_);
    TrajectoryRecord rec;
    rec.iter = iter_;
    rec.lambda = cfg_.lambda;
    rec.obj = last_obj_;
    rec.spa = spa(disp, cfg_.penalty);
    rec.res = sliced_w2(eval_ys_ + disp, eval_xs_, cfg_.n_proj, cfg_.seed);
    bounds_.expand(rec.spa, rec.res);
    rec.eval = eval_score(rec.spa, rec.res, cfg_.eval_a, bounds_);
    rec.dim = displacement_dim(disp);
    return rec;
  }

  void log_record() { trajectory_.push_back(snapshot()); }

  DualPair& pair() { return pair_; }
  const DualPair& pair() const { return pair_; }
  const Trajectory& trajectory() const { return trajectory_; }
  Trajectory& trajectory() { return trajectory_; }
  long iterations() const { return iter_; }
  double lambda() const { return cfg_.lambda; }
  void set_lambda(double lambda) {
    if (lambda < 0) throw ConfigError("trainer: lambda must be nonnegative");
    cfg_.lambda = lambda;
  }
  const TrainConfig& config() const { return cfg_; }
  const EvalBounds& bounds() const { return bounds_; }
  const PointCloud& eval_xs() const { return eval_xs_; }
  const PointCloud& eval_ys() const { return eval_ys_; }

 private:
  DualPair pair_;
  Sampler sample_p_, sample_q_;
  TrainConfig cfg_;
  Rng rng_;
  PointCloud eval_xs_, eval_ys_;
  EvalBounds bounds_;
  Trajectory trajectory_;
  long iter_ = 0;
  double last_obj_ = 0;
};

// One-shot training entry point.
inline std::pair<DualPair, Trajectory> fit(DualPair pair, Sampler sample_p,
                                           Sampler sample_q,
                                           const TrainConfig& cfg) {
  Trainer t(std::move(pair), std::move(sample_p), std::move(sample_q), cfg);
  t.train(cfg.total_iters);
  return {t.pair(), t.trajectory()};
}

}  // namespace sparseot
