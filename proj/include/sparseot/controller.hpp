#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sparseot/trainer.hpp"

namespace sparseot {

enum class AnnealMode { low_dim, high_dim };

// The printed acceptance rule rewards increases of the score that the search
// is supposed to minimize; "consistent" is the minimization-consistent
// Metropolis rule and the default, "paper" reproduces the printed one.
enum class AcceptRule { consistent, paper };

struct AnnealConfig {
  double lambda0 = 0.1;
  double tem0 = 1.0;
  double tem_min = 0.15;
  double decay = 0.95;
  double radius = 3.0;  // proposal radius shrink rate r
  double r_low = 0.05;  // lower clip of the proposal radius
  int n_ini = 20000;    // warmup iterations before the first proposal
  int n_tr = 2000;      // iterations trained on each proposed lambda
  int n_sm = 2000;      // extra iterations after a rejected proposal
  double a = 0.9;       // Spa weight of the score (low-dimensional mode)
  int l = 1;            // dimensionality constraint (high-dimensional mode)
  AcceptRule accept_rule = AcceptRule::consistent;
  uint64_t seed = 0;
};

inline void validate(const AnnealConfig& cfg) {
  if (cfg.lambda0 < 0) throw ConfigError("anneal: lambda0 must be nonnegative");
  if (!(cfg.tem0 > 0) || !(cfg.tem_min > 0))
    throw ConfigError("anneal: temperatures must be positive");
  if (!(cfg.decay > 0 && cfg.decay < 1))
    throw ConfigError("anneal: decay must lie in (0,1)");
  if (!(cfg.radius > 0)) throw ConfigError("anneal: radius must be positive");
  if (!(cfg.r_low > 0 && cfg.r_low <= 1))
    throw ConfigError("anneal: r_low must lie in (0,1]");
  if (cfg.n_ini < 1 || cfg.n_tr < 1 || cfg.n_sm < 1)
    throw ConfigError("anneal: step counts must be >= 1");
  if (cfg.a < 0 || cfg.a > 1) throw ConfigError("anneal: a must be in [0,1]");
  if (cfg.l < 1) throw ConfigError("anneal: l must be >= 1");
}

// Search radius at the given temperature: wide while hot, clipped below so
// late proposals keep a minimal wiggle.
inline double proposal_radius(double tem, double radius, double r_low) {
  return std::max(r_low, std::exp(-radius * (1.0 - tem)));
}

// Multiplicative lambda proposal. Low-dimensional mode explores both
// directions; high-dimensional mode increases lambda while the constraint is
// unmet and decreases it once met. The result never drops below 1e-8.
inline double propose(double tem, double lambda, AnnealMode mode,
                      bool constraint_met, double radius, double r_low,
                      Rng& rng) {
  if (!(lambda > 0)) throw ConfigError("propose: lambda must be positive");
  if (!(tem > 0)) throw ConfigError("propose: temperature must be positive");
  double R = proposal_radius(tem, radius, r_low);
  double u;
  if (mode == AnnealMode::low_dim) {
    u = uniform_real(rng, -R, R);
  } else if (!constraint_met) {
    u = uniform_real(rng, 0.0, R);
  } else {
    u = uniform_real(rng, -R, 0.0);
  }
  return std::max(1e-8, lambda * (1.0 + u));
}

// Metropolis acceptance on the minimized score: improvements always pass,
// degradations pass with probability exp(-delta / tem).
inline bool accept(double eval_new, double eval_old, double tem, Rng& rng,
                   AcceptRule rule = AcceptRule::consistent) {
  if (!(tem > 0)) throw ConfigError("accept: temperature must be positive");
  double delta = eval_new - eval_old;
  if (rule == AcceptRule::consistent)
    return delta < 0 || uniform_real(rng, 0.0, 1.0) < std::exp(-delta / tem);
  return delta > 0 || uniform_real(rng, 0.0, 1.0) < std::exp(delta / tem);
}

struct AnnealResult {
  DualPair pair;
  Trajectory trajectory;
  double final_lambda = 0;
  double final_dim = 0;
  double final_res = 0;
  // iteration counts where a phase ended: [warmup] for the low-dimensional
  // run, [warmup, sparsify] for the high-dimensional one
  std::vector<long> phase_boundaries;
};

namespace detail {

// Keeps trajectory iterations strictly increasing when a controller snapshot
// lands on an iteration the trainer already logged.
inline void push_record(Trajectory& traj, const TrajectoryRecord& rec) {
  if (!traj.empty() && traj.back().iter == rec.iter)
    traj.back() = rec;
  else
    traj.push_back(rec);
}

}  // namespace detail

// Alternating annealing search over lambda for the sparsity/fit trade-off:
// warm up at lambda0, then repeatedly propose a nearby lambda, train on it,
// and keep it only if the combined score passes the Metropolis test; a
// rejected proposal is followed by extra training at the retained lambda.
inline AnnealResult anneal_low_dim(DualPair pair, Sampler sample_p,
                                   Sampler sample_q, TrainConfig train_cfg,
                                   const AnnealConfig& cfg) {
  validate(cfg);
  train_cfg.lambda = cfg.lambda0;
  train_cfg.eval_a = cfg.a;
  validate(train_cfg);
  Trainer t(std::move(pair), std::move(sample_p), std::move(sample_q),
            train_cfg);
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  t.train(cfg.n_ini);
  TrajectoryRecord cur = t.snapshot();
  detail::push_record(t.trajectory(), cur);
  double eval_prev = cur.eval;

  AnnealResult out;
  out.phase_boundaries.push_back(t.iterations());

  double lambda = cfg.lambda0;
  double tem = cfg.tem0;
  while (tem > cfg.tem_min) {
    double proposed = propose(tem, lambda, AnnealMode::low_dim, false,
                              cfg.radius, cfg.r_low, rng);
    t.set_lambda(proposed);
    t.train(cfg.n_tr);
    TrajectoryRecord rec = t.snapshot();
    bool ok = accept(rec.eval, eval_prev, tem, rng, cfg.accept_rule);
    rec.has_accepted = true;
    rec.accepted = ok;
    detail::push_record(t.trajectory(), rec);
    if (ok) {
      lambda = proposed;
      eval_prev = rec.eval;
    } else {
      t.set_lambda(lambda);
      t.train(cfg.n_sm);
      TrajectoryRecord back = t.snapshot();
      detail::push_record(t.trajectory(), back);
      eval_prev = back.eval;
    }
    tem *= cfg.decay;
  }

  TrajectoryRecord last = t.snapshot();
  out.pair = std::move(t.pair());
  out.trajectory = t.trajectory();
  out.final_lambda = lambda;
  out.final_dim = last.dim;
  out.final_res = last.res;
  return out;
}

// Two-phase dimensionality-constrained search: raise lambda until the
// displacement dimensionality drops below l (adopting every increase), then
// lower lambda and keep only reductions that stay feasible. Returns the best
// feasible state seen, or the lowest-dimensional one if l was never reached.
inline AnnealResult anneal_high_dim(DualPair pair, Sampler sample_p,
                                    Sampler sample_q, TrainConfig train_cfg,
                                    const AnnealConfig& cfg) {
  validate(cfg);
  train_cfg.lambda = cfg.lambda0;
  validate(train_cfg);
  Trainer t(std::move(pair), std::move(sample_p), std::move(sample_q),
            train_cfg);
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

  AnnealResult out;
  bool have_feasible = false;
  bool have_any = false;
  double best_dim = std::numeric_limits<double>::infinity();
  double best_res = std::numeric_limits<double>::infinity();
  auto take = [&](const TrajectoryRecord& rec) {
    best_dim = rec.dim;
    best_res = rec.res;
    out.pair = t.pair();
    out.final_lambda = rec.lambda;
    out.final_dim = rec.dim;
    out.final_res = rec.res;
  };
  auto consider = [&](const TrajectoryRecord& rec) {
    if (rec.dim <= cfg.l) {
      if (!have_feasible || rec.res < best_res) take(rec);
      have_feasible = true;
    } else if (!have_feasible &&
               (!have_any || rec.dim < best_dim ||
                (rec.dim == best_dim && rec.res < best_res))) {
      take(rec);
    }
    have_any = true;
  };

  t.train(cfg.n_ini);
  TrajectoryRecord rec = t.snapshot();
  detail::push_record(t.trajectory(), rec);
  consider(rec);
  out.phase_boundaries.push_back(t.iterations());

  double lambda = cfg.lambda0;
  double tem = cfg.tem0;
  while (rec.dim >= cfg.l && tem > cfg.tem_min) {
    lambda = propose(tem, lambda, AnnealMode::high_dim, false, cfg.radius,
                     cfg.r_low, rng);
    t.set_lambda(lambda);
    t.train(cfg.n_tr);
    rec = t.snapshot();
    rec.has_accepted = true;
    rec.accepted = true;  // sparsification adopts every increase
    detail::push_record(t.trajectory(), rec);
    consider(rec);
    tem *= cfg.decay;
  }
  out.phase_boundaries.push_back(t.iterations());

  while (tem > cfg.tem_min) {
    double proposed = propose(tem, lambda, AnnealMode::high_dim, true,
                              cfg.radius, cfg.r_low, rng);
    t.set_lambda(proposed);
    t.train(cfg.n_tr);
    rec = t.snapshot();
    bool adopt = rec.dim <= cfg.l;
    rec.has_accepted = true;
    rec.accepted = adopt;
    detail::push_record(t.trajectory(), rec);
    consider(rec);
    if (adopt)
      lambda = proposed;
    else
      t.set_lambda(lambda);
    tem *= cfg.decay;
  }

  out.trajectory = t.trajectory();
  return out;
}

}  // namespace sparseot
