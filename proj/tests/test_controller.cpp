#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sparseot/controller.hpp"

using namespace sparseot;

namespace {

Sampler gaussian_sampler(int dim, double shift0 = 0.0) {
  return [dim, shift0](Eigen::Index n, Rng& rng) {
    PointCloud c = gaussian_matrix(rng, n, dim);
    c.col(0).array() += shift0;
    return c;
  };
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.inner_steps = 1;
  cfg.eval_n = 16;
  cfg.n_proj = 8;
  cfg.log_every = 1000;  // keep the trajectory to controller snapshots
  cfg.seed = 11;
  return cfg;
}

AnnealConfig tiny_anneal_config() {
  AnnealConfig cfg;
  cfg.lambda0 = 0.1;
  cfg.tem0 = 1.0;
  cfg.tem_min = 0.6;
  cfg.decay = 0.7;  // exactly two proposal rounds: tem = 1.0, 0.7
  cfg.n_ini = 20;
  cfg.n_tr = 6;
  cfg.n_sm = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(ProposalRadius, MatchesTheClippedExponential) {
  EXPECT_DOUBLE_EQ(proposal_radius(1.0, 3.0, 0.05), 1.0);
  EXPECT_DOUBLE_EQ(proposal_radius(0.5, 3.0, 0.05), std::exp(-1.5));
  // exp(-3 * (1 - 1e-6)) < 0.05, so the floor takes over
  EXPECT_DOUBLE_EQ(proposal_radius(1e-6, 3.0, 0.05), 0.05);
  EXPECT_DOUBLE_EQ(proposal_radius(0.9, 2.0, 0.01), std::exp(-0.2));
}

TEST(Propose, LowDimExploresBothSidesWithinTheRadius) {
  Rng rng(101);
  double lambda = 2.0;
  int above = 0, below = 0;
  for (int i = 0; i < 1000; ++i) {
    double next = propose(1.0, lambda, AnnealMode::low_dim, false, 3.0, 0.05,
                          rng);  // R = 1
    EXPECT_GE(next, 1e-8);
    EXPECT_LE(next, 2.0 * lambda);
    (next > lambda ? above : below)++;
  }
  EXPECT_GT(above, 100);
  EXPECT_GT(below, 100);
}

TEST(Propose, HighDimIncreasesWhileTheConstraintIsUnmet) {
  Rng rng(102);
  double lambda = 2.0;
  double R = std::exp(-1.5);
  double top = 0;
  for (int i = 0; i < 1000; ++i) {
    double next =
        propose(0.5, lambda, AnnealMode::high_dim, false, 3.0, 0.05, rng);
    EXPECT_GE(next, lambda);
    EXPECT_LE(next, lambda * (1.0 + R) + 1e-12);
    top = std::max(top, next);
  }
  EXPECT_GT(top, lambda * (1.0 + 0.8 * R));
}

TEST(Propose, HighDimDecreasesOnceTheConstraintIsMet) {
  Rng rng(103);
  double lambda = 2.0;
  double R = std::exp(-1.5);
  double bottom = lambda;
  for (int i = 0; i < 1000; ++i) {
    double next =
        propose(0.5, lambda, AnnealMode::high_dim, true, 3.0, 0.05, rng);
    EXPECT_LE(next, lambda);
    EXPECT_GE(next, lambda * (1.0 - R) - 1e-12);
    bottom = std::min(bottom, next);
  }
  EXPECT_LT(bottom, lambda * (1.0 - 0.8 * R));
}

TEST(Propose, ClampsAtThePositivityFloor) {
  Rng rng(104);
  bool clamped = false;
  for (int i = 0; i < 2000; ++i) {
    double next =
        propose(1.0, 1e-8, AnnealMode::low_dim, false, 3.0, 0.05, rng);
    EXPECT_GE(next, 1e-8);
    clamped |= next == 1e-8;
  }
  EXPECT_TRUE(clamped);
}

TEST(Propose, RejectsNonPositiveInputs) {
  Rng rng(105);
  EXPECT_THROW(propose(1.0, 0.0, AnnealMode::low_dim, false, 3.0, 0.05, rng),
               ConfigError);
  EXPECT_THROW(propose(1.0, -0.5, AnnealMode::low_dim, false, 3.0, 0.05, rng),
               ConfigError);
  EXPECT_THROW(propose(0.0, 1.0, AnnealMode::low_dim, false, 3.0, 0.05, rng),
               ConfigError);
}

TEST(Propose, DeterministicForAFixedSeed) {
  Rng r1(42), r2(42);
  for (int i = 0; i < 50; ++i) {
    double a = propose(0.8, 1.0, AnnealMode::low_dim, false, 3.0, 0.05, r1);
    double b = propose(0.8, 1.0, AnnealMode::low_dim, false, 3.0, 0.05, r2);
    EXPECT_DOUBLE_EQ(a, b);
  }
}

TEST(Accept, ImprovementsAlwaysPass) {
  Rng rng(106);
  for (int i = 0; i < 500; ++i)
    EXPECT_TRUE(accept(0.2, 0.5, 0.1 + 0.01 * i, rng));
}

TEST(Accept, DegradationByOneTemperaturePassesAtInverseEulerRate) {
  Rng rng(107);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += accept(1.3, 0.5, 0.8, rng);
  EXPECT_NEAR(hits / 10000.0, std::exp(-1.0), 0.02);
}

TEST(Accept, ColdTemperatureFreezesDegradations) {
  Rng rng(108);
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(accept(1.5, 0.5, 0.01, rng));
}

TEST(Accept, PaperRuleInvertsTheComparison) {
  Rng rng(109);
  // degradations of the minimized score always pass under the printed rule
  for (int i = 0; i < 200; ++i)
    EXPECT_TRUE(accept(0.9, 0.5, 0.3, rng, AcceptRule::paper));
  int hits = 0;
  for (int i = 0; i < 10000; ++i)
    hits += accept(0.5, 1.3, 0.8, rng, AcceptRule::paper);
  EXPECT_NEAR(hits / 10000.0, std::exp(-1.0), 0.02);
}

TEST(Accept, RejectsNonPositiveTemperature) {
  Rng rng(110);
  EXPECT_THROW(accept(0.5, 0.5, 0.0, rng), ConfigError);
}

TEST(AnnealConfig, ValidationRejectsBadValues) {
  auto check = [](auto mutate) {
    AnnealConfig cfg;
    mutate(cfg);
    EXPECT_THROW(validate(cfg), ConfigError);
  };
  check([](AnnealConfig& c) { c.lambda0 = -0.1; });
  check([](AnnealConfig& c) { c.tem0 = 0.0; });
  check([](AnnealConfig& c) { c.tem_min = -1.0; });
  check([](AnnealConfig& c) { c.decay = 1.0; });
  check([](AnnealConfig& c) { c.decay = 0.0; });
  check([](AnnealConfig& c) { c.radius = 0.0; });
  check([](AnnealConfig& c) { c.r_low = 0.0; });
  check([](AnnealConfig& c) { c.r_low = 1.5; });
  check([](AnnealConfig& c) { c.n_ini = 0; });
  check([](AnnealConfig& c) { c.n_tr = 0; });
  check([](AnnealConfig& c) { c.n_sm = 0; });
  check([](AnnealConfig& c) { c.a = 1.5; });
  check([](AnnealConfig& c) { c.l = 0; });
  EXPECT_NO_THROW(validate(AnnealConfig{}));
}

TEST(AnnealLowDim, ColdStartReducesToPureWarmup) {
  AnnealConfig acfg = tiny_anneal_config();
  acfg.tem0 = 0.1;  // already below tem_min: no proposals at all
  DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 3);
  AnnealResult out = anneal_low_dim(pair, gaussian_sampler(2, 2.0),
                                    gaussian_sampler(2), tiny_train_config(),
                                    acfg);
  EXPECT_DOUBLE_EQ(out.final_lambda, acfg.lambda0);
  ASSERT_EQ(out.phase_boundaries.size(), 1u);
  EXPECT_EQ(out.phase_boundaries[0], acfg.n_ini);
  ASSERT_FALSE(out.trajectory.empty());
  for (const auto& rec : out.trajectory) {
    EXPECT_LE(rec.iter, acfg.n_ini);
    EXPECT_FALSE(rec.has_accepted);
  }
}

TEST(AnnealLowDim, RunsTheExpectedNumberOfProposalRounds) {
  AnnealConfig acfg = tiny_anneal_config();
  DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 3);
  AnnealResult out = anneal_low_dim(pair, gaussian_sampler(2, 2.0),
                                    gaussian_sampler(2), tiny_train_config(),
                                    acfg);
  int proposals = 0;
  for (const auto& rec : out.trajectory) proposals += rec.has_accepted;
  EXPECT_EQ(proposals, 2);  // tem = 1.0 and 0.7 clear tem_min = 0.6
  EXPECT_GT(out.final_lambda, 0.0);
  for (const auto& rec : out.trajectory) EXPECT_GT(rec.lambda, 0.0);
  for (size_t i = 1; i < out.trajectory.size(); ++i)
    EXPECT_LT(out.trajectory[i - 1].iter, out.trajectory[i].iter);
}

TEST(AnnealLowDim, InterleavedTrainerLogsKeepIterationsStrictlyIncreasing) {
  AnnealConfig acfg = tiny_anneal_config();
  TrainConfig tcfg = tiny_train_config();
  tcfg.log_every = 5;  // trainer logs collide with controller snapshots
  DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 3);
  AnnealResult out = anneal_low_dim(pair, gaussian_sampler(2, 2.0),
                                    gaussian_sampler(2), tcfg, acfg);
  ASSERT_GT(out.trajectory.size(), 4u);
  for (size_t i = 1; i < out.trajectory.size(); ++i)
    EXPECT_LT(out.trajectory[i - 1].iter, out.trajectory[i].iter);
}

TEST(AnnealLowDim, DeterministicForAFixedSeed) {
  auto run = [] {
    DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 3);
    return anneal_low_dim(pair, gaussian_sampler(2, 2.0), gaussian_sampler(2),
                          tiny_train_config(), tiny_anneal_config());
  };
  AnnealResult a = run(), b = run();
  EXPECT_DOUBLE_EQ(a.final_lambda, b.final_lambda);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_EQ(a.trajectory[i].iter, b.trajectory[i].iter);
    EXPECT_DOUBLE_EQ(a.trajectory[i].lambda, b.trajectory[i].lambda);
    EXPECT_DOUBLE_EQ(a.trajectory[i].eval, b.trajectory[i].eval);
    EXPECT_EQ(a.trajectory[i].accepted, b.trajectory[i].accepted);
  }
  EXPECT_TRUE(a.pair.g.Wy[0] == b.pair.g.Wy[0]);
}

TEST(AnnealHighDim, LooseConstraintSkipsTheSparsificationPhase) {
  AnnealConfig acfg = tiny_anneal_config();
  acfg.l = 2;  // matched to the data dimension: met from the start
  DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 3);
  AnnealResult out = anneal_high_dim(pair, gaussian_sampler(2, 2.0),
                                     gaussian_sampler(2), tiny_train_config(),
                                     acfg);
  ASSERT_EQ(out.phase_boundaries.size(), 2u);
  EXPECT_EQ(out.phase_boundaries[0], acfg.n_ini);
  EXPECT_EQ(out.phase_boundaries[1], acfg.n_ini);  // phase one never ran
  // every proposal in the relaxation phase moves lambda downward
  double prev = acfg.lambda0;
  for (const auto& rec : out.trajectory) {
    if (!rec.has_accepted) continue;
    EXPECT_LE(rec.lambda, prev);
    if (rec.accepted) prev = rec.lambda;
  }
  EXPECT_LE(out.final_dim, acfg.l);
}

TEST(AnnealHighDim, UnattainableConstraintStillReturnsTheSparsestState) {
  AnnealConfig acfg = tiny_anneal_config();
  acfg.l = 1;
  DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 9);
  AnnealResult out = anneal_high_dim(pair, gaussian_sampler(2, 2.0),
                                     gaussian_sampler(2), tiny_train_config(),
                                     acfg);
  ASSERT_EQ(out.phase_boundaries.size(), 2u);
  double best = std::numeric_limits<double>::infinity();
  bool feasible_seen = false;
  double prev = acfg.lambda0;
  long boundary = out.phase_boundaries[1];
  for (const auto& rec : out.trajectory) {
    if (!rec.has_accepted) continue;
    feasible_seen |= rec.dim <= acfg.l;
    best = std::min(best, rec.dim);
    if (rec.iter <= boundary) {  // sparsification proposals never shrink
      EXPECT_GE(rec.lambda, prev);
      EXPECT_TRUE(rec.accepted);
      prev = rec.lambda;
    }
  }
  if (!feasible_seen) {
    double warm = out.trajectory.front().dim;
    EXPECT_DOUBLE_EQ(out.final_dim, std::min(best, warm));
  }
  EXPECT_GT(out.final_lambda, 0.0);
}

TEST(AnnealHighDim, DeterministicForAFixedSeed) {
  auto run = [] {
    AnnealConfig acfg = tiny_anneal_config();
    acfg.l = 1;
    DualPair pair = make_dual_pair(2, {8, 1}, Activation::softplus, 9);
    return anneal_high_dim(pair, gaussian_sampler(2, 2.0),
                           gaussian_sampler(2), tiny_train_config(), acfg);
  };
  AnnealResult a = run(), b = run();
  EXPECT_DOUBLE_EQ(a.final_lambda, b.final_lambda);
  EXPECT_DOUBLE_EQ(a.final_dim, b.final_dim);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (size_t i = 0; i < a.trajectory.size(); ++i)
    EXPECT_DOUBLE_EQ(a.trajectory[i].lambda, b.trajectory[i].lambda);
}
