#pragma once

#include <cstdint>
#include <vector>

#include "sparseot/activation.hpp"
#include "sparseot/common.hpp"
#include "sparseot/penalty.hpp"

namespace sparseot {

// Reverse-mode tape over batch-matrix values. Every node holds an n x k
// matrix (rows are samples); a scalar is a 1 x 1 node. Ops are recorded in
// construction order, which is already topological, so backward() is a single
// reverse sweep. Parameter storage stays with the caller; the tape keeps
// const pointers plus gradient accumulators.
using NodeId = int32_t;

class Tape {
 public:
  // Frozen parameters take part in the forward pass but skip gradient
  // accumulation (used when one net's weights are held fixed in a step).
  int add_matrix_param(const Mat* W, bool frozen = false) {
    mats_.push_back(W);
    mat_frozen_.push_back(frozen);
    mat_grads_.emplace_back(frozen ? Mat() : Mat::Zero(W->rows(), W->cols()));
    return static_cast<int>(mats_.size()) - 1;
  }

  int add_vector_param(const Vec* b, bool frozen = false) {
    vecs_.push_back(b);
    vec_frozen_.push_back(frozen);
    vec_grads_.emplace_back(frozen ? Vec() : Vec::Zero(b->size()));
    return static_cast<int>(vecs_.size()) - 1;
  }

  NodeId leaf(Mat v) {
    if (!v.allFinite()) throw NumericalError("tape leaf contains NaN/Inf");
    return push(Node{Op::leaf}, std::move(v));
  }

  // x * W^T + 1 b^T
  NodeId affine(NodeId x, int W, int b) {
    Node n{Op::affine, x, -1, W, b};
    Mat v = (val(x) * mats_[W]->transpose()).rowwise() + vecs_[b]->transpose();
    return push(std::move(n), std::move(v));
  }

  NodeId linmap(NodeId x, int W) {  // x * W^T
    return push(Node{Op::linmap, x, -1, W}, val(x) * mats_[W]->transpose());
  }

  NodeId linmap_rt(NodeId x, int W) {  // x * W
    return push(Node{Op::linmap_rt, x, -1, W}, val(x) * *mats_[W]);
  }

  NodeId linmap_const(NodeId x, Mat S) {  // x * S^T
    Node n{Op::linmap_const, x};
    Mat v = val(x) * S.transpose();
    n.constant = std::move(S);
    return push(std::move(n), std::move(v));
  }

  NodeId linmap_const_rt(NodeId x, Mat S) {  // x * S
    Node n{Op::linmap_const_rt, x};
    Mat v = val(x) * S;
    n.constant = std::move(S);
    return push(std::move(n), std::move(v));
  }

  NodeId add(NodeId a, NodeId b) {
    return push(Node{Op::add, a, b}, val(a) + val(b));
  }

  NodeId sub(NodeId a, NodeId b) {
    return push(Node{Op::sub, a, b}, val(a) - val(b));
  }

  NodeId hadamard(NodeId a, NodeId b) {
    return push(Node{Op::hadamard, a, b}, val(a).cwiseProduct(val(b)));
  }

  NodeId scale(NodeId a, double c) {
    Node n{Op::scale, a};
    n.c = c;
    return push(std::move(n), c * val(a));
  }

  // Elementwise activation derivative of the given order; backward uses the
  // next order up.
  NodeId activation(NodeId x, Activation act, int order) {
    Node n{Op::act, x};
    n.act = act;
    n.act_order = order;
    return push(std::move(n), activation_apply(act, order, val(x)));
  }

  NodeId dot_rows(NodeId a, NodeId b) {  // n x 1 of rowwise inner products
    Mat v = val(a).cwiseProduct(val(b)).rowwise().sum();
    return push(Node{Op::dot_rows, a, b}, std::move(v));
  }

  // n x 1 of per-row penalty values; backward uses the penalty's own gradient.
  NodeId penalty_rows(NodeId x, const Penalty& p) {
    Node n{Op::penalty_rows, x};
    n.pen = &p;
    return push(std::move(n), p.value_rows(val(x)));
  }

  NodeId mean_all(NodeId x) {
    Mat v(1, 1);
    v(0, 0) = val(x).mean();
    return push(Node{Op::mean_all, x}, std::move(v));
  }

  const Mat& value(NodeId id) const { return nodes_[id].value; }

  const Mat& adjoint(NodeId id) const { return nodes_[id].adj; }

  const Mat& matrix_grad(int id) const { return mat_grads_[id]; }

  Vec vector_grad(int id) const { return vec_grads_[id]; }

  // Seeds the root (a 1 x 1 node) with 1 and accumulates adjoints and
  // parameter gradients in one reverse sweep.
  void backward(NodeId root) {
    if (ran_backward_) throw NumericalError("tape backward already ran");
    ran_backward_ = true;
    require(nodes_[root].value.size() == 1, "backward root must be scalar");
    for (auto& n : nodes_) n.adj = Mat::Zero(n.value.rows(), n.value.cols());
    nodes_[root].adj(0, 0) = 1.0;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[id];
      const Mat& A = n.adj;
      switch (n.op) {
        case Op::leaf:
          break;
        case Op::affine:
          nodes_[n.a].adj.noalias() += A * *mats_[n.param];
          if (!mat_frozen_[n.param])
            mat_grads_[n.param].noalias() += A.transpose() * val(n.a);
          if (!vec_frozen_[n.bias])
            vec_grads_[n.bias].noalias() += A.colwise().sum().transpose();
          break;
        case Op::linmap:
          nodes_[n.a].adj.noalias() += A * *mats_[n.param];
          if (!mat_frozen_[n.param])
            mat_grads_[n.param].noalias() += A.transpose() * val(n.a);
          break;
        case Op::linmap_rt:
          nodes_[n.a].adj.noalias() += A * mats_[n.param]->transpose();
          if (!mat_frozen_[n.param])
            mat_grads_[n.param].noalias() += val(n.a).transpose() * A;
          break;
        case Op::linmap_const:
          nodes_[n.a].adj.noalias() += A * n.constant;
          break;
        case Op::linmap_const_rt:
          nodes_[n.a].adj.noalias() += A * n.constant.transpose();
          break;
        case Op::add:
          nodes_[n.a].adj += A;
          nodes_[n.b].adj += A;
          break;
        case Op::sub:
          nodes_[n.a].adj += A;
          nodes_[n.b].adj -= A;
          break;
        case Op::hadamard:
          nodes_[n.a].adj += A.cwiseProduct(val(n.b));
          nodes_[n.b].adj += A.cwiseProduct(val(n.a));
          break;
        case Op::scale:
          nodes_[n.a].adj += n.c * A;
          break;
        case Op::act:
          nodes_[n.a].adj +=
              A.cwiseProduct(activation_apply(n.act, n.act_order + 1, val(n.a)));
          break;
        case Op::dot_rows:
          nodes_[n.a].adj += (val(n.b).array().colwise() * A.col(0).array()).matrix();
          nodes_[n.b].adj += (val(n.a).array().colwise() * A.col(0).array()).matrix();
          break;
        case Op::penalty_rows:
          nodes_[n.a].adj +=
              (n.pen->grad_rows(val(n.a)).array().colwise() * A.col(0).array()).matrix();
          break;
        case Op::mean_all:
          nodes_[n.a].adj.array() +=
              A(0, 0) / static_cast<double>(val(n.a).size());
          break;
      }
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    leaf,
    affine,
    linmap,
    linmap_rt,
    linmap_const,
    linmap_const_rt,
    add,
    sub,
    hadamard,
    scale,
    act,
    dot_rows,
    penalty_rows,
    mean_all,
  };

  struct Node {
    Op op;
    NodeId a = -1, b = -1;
    int param = -1, bias = -1;
    double c = 0.0;
    Activation act{};
    int act_order = 0;
    Mat constant;
    const Penalty* pen = nullptr;
    Mat value;
    Mat adj;
  };

  const Mat& val(NodeId id) const { return nodes_[id].value; }

  NodeId push(Node n, Mat v) {
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<const Mat*> mats_;
  std::vector<Mat> mat_grads_;
  std::vector<char> mat_frozen_;
  std::vector<const Vec*> vecs_;
  std::vector<Vec> vec_grads_;
  std::vector<char> vec_frozen_;
  bool ran_backward_ = false;
};

}  // namespace sparseot
