#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sparseot/autodiff.hpp"
#include "sparseot/icnn.hpp"

using namespace sparseot;

namespace {

// Straight-line re-evaluation of the network with plain loops, kept
// deliberately independent of the tape machinery.
double naive_eval(const IcnnNet& net, const Vec& y) {
  int L = net.n_layers();
  Vec z;
  for (int l = 0; l < L; ++l) {
    Vec u = net.Wy[l] * y + net.b[l];
    if (l > 0) u += net.Wz[l] * z;
    z.resize(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      z(i) = activation_eval(net.activation, u(i), 0);
  }
  double out = z(0);
  out += 0.5 * net.quad_scale * y.squaredNorm();
  if (net.quad_matrix) out += 0.5 * (*net.quad_matrix * y).squaredNorm();
  return out;
}

IcnnNet tiny_fixed_net() {
  IcnnNet net;
  net.input_dim = 2;
  net.widths = {3, 1};
  net.activation = Activation::softplus;
  net.Wy.resize(2);
  net.Wz.resize(2);
  net.b.resize(2);
  net.Wy[0] = (Mat(3, 2) << 0.3, -0.7, 1.1, 0.4, -0.2, 0.9).finished();
  net.b[0] = (Vec(3) << 0.1, -0.3, 0.2).finished();
  net.Wy[1] = (Mat(1, 2) << -0.5, 0.25).finished();
  net.Wz[1] = (Mat(1, 3) << 0.6, 0.0, 1.2).finished();
  net.b[1] = (Vec(1) << 0.05).finished();
  return net;
}

}  // namespace

TEST(Forward, SingleLayerZeroWeightsIsSoftplusOfZero) {
  IcnnNet net;
  net.input_dim = 2;
  net.widths = {1};
  net.activation = Activation::softplus;
  net.Wy = {Mat::Zero(1, 2)};
  net.Wz = {Mat()};
  net.b = {Vec::Zero(1)};
  auto fwd = icnn_forward(net, (Vec(2) << 1.0, 2.0).finished());
  EXPECT_DOUBLE_EQ(fwd.value(), std::log(2.0));
}

TEST(Forward, ReluNetSummingInputs) {
  IcnnNet net;
  net.input_dim = 3;
  net.widths = {1};
  net.activation = Activation::relu;
  net.Wy = {Mat::Ones(1, 3)};
  net.Wz = {Mat()};
  net.b = {Vec::Zero(1)};
  auto fwd = icnn_forward(net, Vec::Ones(3));
  EXPECT_DOUBLE_EQ(fwd.value(), 3.0);
}

TEST(Forward, MatchesStraightLineRecomputation) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    IcnnNet net = icnn_init(4, {8, 8, 1}, Activation::softplus, 100 + trial);
    Vec y = gaussian_matrix(rng, 4, 1).col(0);
    auto fwd = icnn_forward(net, y);
    EXPECT_NEAR(fwd.value(), naive_eval(net, y), 1e-12);
  }
}

TEST(Forward, BatchAgreesWithSingleSampleEvaluation) {
  Rng rng(3);
  IcnnNet net = icnn_init(5, {6, 1}, Activation::leaky_softplus, 42);
  PointCloud Y = gaussian_matrix(rng, 7, 5);
  Mat vals = icnn_eval_batch(net, Y);
  ASSERT_EQ(vals.rows(), 7);
  for (int i = 0; i < 7; ++i)
    EXPECT_NEAR(vals(i, 0), icnn_eval(net, Y.row(i).transpose()), 1e-13);
}

TEST(GradParams, SingleWeightTimesInput) {
  // value = relu(w * y) with w = 0.5, y = 2: d value / d w = y = 2.
  IcnnNet net;
  net.input_dim = 1;
  net.widths = {1};
  net.activation = Activation::relu;
  net.Wy = {(Mat(1, 1) << 0.5).finished()};
  net.Wz = {Mat()};
  net.b = {Vec::Zero(1)};
  auto fwd = icnn_forward(net, (Vec(1) << 2.0).finished());
  IcnnGrads grads = icnn_grad_params(fwd);
  EXPECT_DOUBLE_EQ(grads.dWy[0](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(grads.db[0](0), 1.0);
}

TEST(GradInput, ConstantNetHasZeroGradient) {
  IcnnNet net = icnn_init(3, {4, 1}, Activation::softplus, 5);
  for (auto& W : net.Wy) W.setZero();
  Vec g = icnn_grad_input(net, (Vec(3) << 1.0, -2.0, 0.5).finished());
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(GradInput, QuadraticHeadGivesIdentityMapGradient) {
  IcnnNet net;
  net.input_dim = 2;
  net.widths = {1};
  net.activation = Activation::softplus;
  net.Wy = {Mat::Zero(1, 2)};
  net.Wz = {Mat()};
  net.b = {Vec::Zero(1)};
  net.quad_scale = 1.0;
  Vec y = (Vec(2) << 3.0, -1.0).finished();
  Vec g = icnn_grad_input(net, y);
  EXPECT_DOUBLE_EQ(g(0), 3.0);
  EXPECT_DOUBLE_EQ(g(1), -1.0);
}

namespace {

// Central-difference check of both gradient kinds on one (net, y) pair.
void check_gradients(const IcnnNet& net, const Vec& y, double h, double rel_tol) {
  auto fwd = icnn_forward(net, y);
  IcnnGrads grads = icnn_grad_params(fwd);
  Vec gy = icnn_grad_input(net, y);

  auto rel_err = [](double got, double fd, double scale) {
    return std::abs(got - fd) / std::max(1.0, scale);
  };

  Vec yp = y;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    yp(i) = y(i) + h;
    double up = icnn_eval(net, yp);
    yp(i) = y(i) - h;
    double dn = icnn_eval(net, yp);
    yp(i) = y(i);
    EXPECT_LT(rel_err(gy(i), (up - dn) / (2 * h), gy.norm()), rel_tol);
  }

  IcnnNet probe = net;
  int L = net.n_layers();
  for (int l = 0; l < L; ++l) {
    auto fd_entry = [&](Mat& W, Eigen::Index r, Eigen::Index c) {
      double keep = W(r, c);
      W(r, c) = keep + h;
      double up = icnn_eval(probe, y);
      W(r, c) = keep - h;
      double dn = icnn_eval(probe, y);
      W(r, c) = keep;
      return (up - dn) / (2 * h);
    };
    for (Eigen::Index r = 0; r < net.Wy[l].rows(); ++r)
      for (Eigen::Index c = 0; c < net.Wy[l].cols(); ++c)
        EXPECT_LT(rel_err(grads.dWy[l](r, c), fd_entry(probe.Wy[l], r, c),
                          grads.dWy[l].norm()),
                  rel_tol);
    if (l > 0)
      for (Eigen::Index r = 0; r < net.Wz[l].rows(); ++r)
        for (Eigen::Index c = 0; c < net.Wz[l].cols(); ++c)
          EXPECT_LT(rel_err(grads.dWz[l](r, c), fd_entry(probe.Wz[l], r, c),
                            grads.dWz[l].norm()),
                    rel_tol);
    for (Eigen::Index r = 0; r < net.b[l].size(); ++r) {
      double keep = probe.b[l](r);
      probe.b[l](r) = keep + h;
      double up = icnn_eval(probe, y);
      probe.b[l](r) = keep - h;
      double dn = icnn_eval(probe, y);
      probe.b[l](r) = keep;
      EXPECT_LT(rel_err(grads.db[l](r), (up - dn) / (2 * h), grads.db[l].norm()),
                rel_tol);
    }
  }
}

}  // namespace

TEST(GradCheck, RandomNetsAgreeWithCentralDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto act = trial % 2 == 0 ? Activation::softplus : Activation::leaky_softplus;
    IcnnNet net = icnn_init(3, {5, 4, 1}, act, 900 + trial);
    if (trial % 3 == 0) net.quad_scale = 0.7;
    Vec y = gaussian_matrix(rng, 3, 1).col(0);
    check_gradients(net, y, 1e-5, 1e-4);
  }
}

TEST(GradCheck, FixedNetAgreesWithCentralDifferences) {
  check_gradients(tiny_fixed_net(), (Vec(2) << 0.8, -1.3).finished(), 1e-5, 1e-6);
}

TEST(Tape, GradientsAreLinearInNetCombination) {
  IcnnNet n1 = icnn_init(3, {4, 1}, Activation::softplus, 21);
  IcnnNet n2 = icnn_init(3, {5, 1}, Activation::softplus, 22);
  Vec y = (Vec(3) << 0.4, -0.9, 1.5).finished();
  double a = 2.5, b = -1.25;

  Tape tape;
  auto p1 = icnn_register(tape, n1);
  auto p2 = icnn_register(tape, n2);
  NodeId yn = tape.leaf(y.transpose());
  NodeId combo = tape.add(tape.scale(icnn_value_node(tape, n1, p1, yn), a),
                          tape.scale(icnn_value_node(tape, n2, p2, yn), b));
  tape.backward(combo);

  auto f1 = icnn_forward(n1, y);
  auto g1 = icnn_grad_params(f1);
  auto f2 = icnn_forward(n2, y);
  auto g2 = icnn_grad_params(f2);

  EXPECT_NEAR((tape.matrix_grad(p1.Wy[0]) - a * g1.dWy[0]).norm(), 0.0, 1e-14);
  EXPECT_NEAR((tape.matrix_grad(p2.Wy[0]) - b * g2.dWy[0]).norm(), 0.0, 1e-14);
  EXPECT_NEAR((tape.matrix_grad(p1.Wz[1]) - a * g1.dWz[1]).norm(), 0.0, 1e-14);
  EXPECT_NEAR((tape.vector_grad(p2.b[1]) - b * g2.db[1]).norm(), 0.0, 1e-14);

  Vec gy = a * icnn_grad_input(n1, y) + b * icnn_grad_input(n2, y);
  EXPECT_NEAR((tape.adjoint(yn).transpose() - gy).norm(), 0.0, 1e-12);
}

TEST(Tape, GradInputNodeMatchesDirectGradient) {
  Rng rng(8);
  IcnnNet net = icnn_init(4, {6, 6, 1}, Activation::softplus, 31);
  net.quad_scale = 1.0;
  PointCloud Y = gaussian_matrix(rng, 9, 4);

  Tape tape;
  auto params = icnn_register(tape, net);
  NodeId yn = tape.leaf(Y);
  NodeId gn = icnn_grad_input_node(tape, net, params, yn);
  EXPECT_NEAR((tape.value(gn) - icnn_grad_input_batch(net, Y)).norm(), 0.0, 1e-12);
}

TEST(Tape, RepeatedRunsAreBitIdentical) {
  IcnnNet net = icnn_init(3, {4, 4, 1}, Activation::softplus, 64);
  Vec y = (Vec(3) << 0.3, 0.1, -0.7).finished();
  auto fa = icnn_forward(net, y);
  auto fb = icnn_forward(net, y);
  EXPECT_EQ(fa.value(), fb.value());
  auto ga = icnn_grad_params(fa);
  auto gb = icnn_grad_params(fb);
  for (size_t l = 0; l < ga.dWy.size(); ++l) {
    EXPECT_TRUE(ga.dWy[l] == gb.dWy[l]);
    EXPECT_TRUE(ga.db[l] == gb.db[l]);
  }
  EXPECT_TRUE(icnn_grad_input(net, y) == icnn_grad_input(net, y));
}

TEST(Tape, NonFiniteLeafIsRejected) {
  Tape tape;
  Mat bad(1, 2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.leaf(bad), NumericalError);
}
