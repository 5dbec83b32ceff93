#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparseot/autodiff.hpp"
#include "sparseot/common.hpp"

namespace sparseot {

// Input-convex network following the recursion
//   z_0 = act(Wy_0 y + b_0),   z_l = act(Wz_l z_{l-1} + Wy_l y + b_l),
// with the scalar z_{L-1} as output. Convexity in y holds as long as every
// Wz entry is nonnegative and the activation is convex and nondecreasing;
// the skip weights Wy are unconstrained. An optional quadratic term
// quad_scale * ||y||^2 / 2 (+ ||quad_matrix y||^2 / 2) is added on top,
// which keeps convexity and lets the net start at an identity gradient map.
struct IcnnNet {
  int input_dim = 0;
  std::vector<int> widths;
  Activation activation = Activation::softplus;
  std::vector<Mat> Wy;  // widths[l] x input_dim
  std::vector<Mat> Wz;  // widths[l] x widths[l-1]; Wz[0] stays empty
  std::vector<Vec> b;   // widths[l]
  double quad_scale = 0.0;
  std::optional<Mat> quad_matrix;

  int n_layers() const { return static_cast<int>(widths.size()); }
};

inline IcnnNet icnn_init(int input_dim, std::vector<int> widths, Activation act,
                         uint64_t seed) {
  if (input_dim < 1) throw ConfigError("icnn input_dim must be >= 1");
  if (widths.empty()) throw ConfigError("icnn needs at least one layer");
  for (int w : widths)
    if (w < 1) throw ConfigError("icnn layer widths must be >= 1");
  if (widths.back() != 1) throw ConfigError("icnn final width must be 1");

  IcnnNet net;
  net.input_dim = input_dim;
  net.widths = std::move(widths);
  net.activation = act;
  int L = net.n_layers();
  net.Wy.resize(L);
  net.Wz.resize(L);
  net.b.resize(L);
  Rng rng(seed);
  double sy = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (int l = 0; l < L; ++l) {
    int w = net.widths[l];
    net.Wy[l].resize(w, input_dim);
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < input_dim; ++c)
        net.Wy[l](r, c) = uniform_real(rng, -sy, sy);
    if (l > 0) {
      int prev = net.widths[l - 1];
      double sz = 1.0 / std::sqrt(static_cast<double>(prev));
      net.Wz[l].resize(w, prev);
      for (int r = 0; r < w; ++r)
        for (int c = 0; c < prev; ++c)
          net.Wz[l](r, c) = std::abs(uniform_real(rng, -sz, sz));
    }
    net.b[l] = Vec::Zero(w);
  }
  return net;
}

// Clamps the hidden-to-hidden weights at zero. Run after every optimizer
// step; the skip weights stay untouched.
inline void icnn_project(IcnnNet& net) {
  for (int l = 1; l < net.n_layers(); ++l)
    net.Wz[l] = net.Wz[l].cwiseMax(0.0);
}

// Plain batched forward, rows are samples. Returns n x 1 values.
inline Mat icnn_eval_batch(const IcnnNet& net, const PointCloud& Y) {
  require(Y.cols() == net.input_dim, "icnn eval: input dim mismatch");
  int L = net.n_layers();
  Mat z;
  for (int l = 0; l < L; ++l) {
    Mat u = (Y * net.Wy[l].transpose()).rowwise() + net.b[l].transpose();
    if (l > 0) u.noalias() += z * net.Wz[l].transpose();
    z = activation_apply(net.activation, 0, u);
  }
  if (net.quad_scale != 0.0)
    z.col(0) += 0.5 * net.quad_scale * Y.rowwise().squaredNorm();
  if (net.quad_matrix)
    z.col(0) += 0.5 * (Y * net.quad_matrix->transpose()).rowwise().squaredNorm();
  return z;
}

inline double icnn_eval(const IcnnNet& net, const Vec& y) {
  return icnn_eval_batch(net, y.transpose())(0, 0);
}

// Batched gradient of the output with respect to the input, by the closed
// chain over the layer recursion. Returns n x d.
inline PointCloud icnn_grad_input_batch(const IcnnNet& net, const PointCloud& Y) {
  require(Y.cols() == net.input_dim, "icnn grad: input dim mismatch");
  int L = net.n_layers();
  std::vector<Mat> U(L);
  Mat z;
  for (int l = 0; l < L; ++l) {
    U[l] = (Y * net.Wy[l].transpose()).rowwise() + net.b[l].transpose();
    if (l > 0) U[l].noalias() += z * net.Wz[l].transpose();
    if (l + 1 < L) z = activation_apply(net.activation, 0, U[l]);
  }
  Mat A = activation_apply(net.activation, 1, U[L - 1]);
  Mat G = A * net.Wy[L - 1];
  for (int l = L - 2; l >= 0; --l) {
    Mat V = A * net.Wz[l + 1];
    A = activation_apply(net.activation, 1, U[l]).cwiseProduct(V);
    G.noalias() += A * net.Wy[l];
  }
  if (net.quad_scale != 0.0) G += net.quad_scale * Y;
  if (net.quad_matrix)
    G.noalias() += (Y * net.quad_matrix->transpose()) * *net.quad_matrix;
  return G;
}

inline Vec icnn_grad_input(const IcnnNet& net, const Vec& y) {
  return icnn_grad_input_batch(net, y.transpose()).row(0).transpose();
}

// Midpoint convexity spot check on pairs sampled uniformly from
// [-box, box]^d. Returns false as soon as f((y1+y2)/2) exceeds the chord
// midpoint by more than tol.
inline bool icnn_is_convex_probe(const IcnnNet& net, int n_samples, double box,
                                 uint64_t seed, double tol = 1e-9) {
  Rng rng(seed);
  Mat y1(n_samples, net.input_dim), y2(n_samples, net.input_dim);
  for (int i = 0; i < n_samples; ++i)
    for (int j = 0; j < net.input_dim; ++j) {
      y1(i, j) = uniform_real(rng, -box, box);
      y2(i, j) = uniform_real(rng, -box, box);
    }
  Mat f1 = icnn_eval_batch(net, y1);
  Mat f2 = icnn_eval_batch(net, y2);
  Mat fm = icnn_eval_batch(net, 0.5 * (y1 + y2));
  for (int i = 0; i < n_samples; ++i)
    if (fm(i, 0) > 0.5 * (f1(i, 0) + f2(i, 0)) + tol) return false;
  return true;
}

// ---- tape builders ----

struct IcnnTapeParams {
  std::vector<int> Wy, Wz, b;
};

inline IcnnTapeParams icnn_register(Tape& tape, const IcnnNet& net,
                                    bool frozen = false) {
  IcnnTapeParams p;
  int L = net.n_layers();
  for (int l = 0; l < L; ++l) {
    p.Wy.push_back(tape.add_matrix_param(&net.Wy[l], frozen));
    p.Wz.push_back(l > 0 ? tape.add_matrix_param(&net.Wz[l], frozen) : -1);
    p.b.push_back(tape.add_vector_param(&net.b[l], frozen));
  }
  return p;
}

namespace detail {

// Shared pre-activation chain; returns the U node per layer.
inline std::vector<NodeId> icnn_preacts(Tape& tape, const IcnnNet& net,
                                        const IcnnTapeParams& p, NodeId y) {
  int L = net.n_layers();
  std::vector<NodeId> U(L);
  NodeId z = -1;
  for (int l = 0; l < L; ++l) {
    NodeId u = tape.affine(y, p.Wy[l], p.b[l]);
    if (l > 0) u = tape.add(u, tape.linmap(z, p.Wz[l]));
    U[l] = u;
    if (l + 1 < L) z = tape.activation(u, net.activation, 0);
  }
  return U;
}

inline NodeId icnn_quad_nodes(Tape& tape, const IcnnNet& net, NodeId y,
                              NodeId base) {
  NodeId out = base;
  if (net.quad_scale != 0.0)
    out = tape.add(out, tape.scale(tape.dot_rows(y, y), 0.5 * net.quad_scale));
  if (net.quad_matrix) {
    NodeId m = tape.linmap_const(y, *net.quad_matrix);
    out = tape.add(out, tape.scale(tape.dot_rows(m, m), 0.5));
  }
  return out;
}

}  // namespace detail

// n x 1 node of network values for a batch node y.
inline NodeId icnn_value_node(Tape& tape, const IcnnNet& net,
                              const IcnnTapeParams& p, NodeId y) {
  auto U = detail::icnn_preacts(tape, net, p, y);
  NodeId out = tape.activation(U.back(), net.activation, 0);
  return detail::icnn_quad_nodes(tape, net, y, out);
}

// n x d node of input gradients for a batch node y, expressed with forward
// ops so that parameter gradients of expressions in grad(f) stay first-order.
inline NodeId icnn_grad_input_node(Tape& tape, const IcnnNet& net,
                                   const IcnnTapeParams& p, NodeId y) {
  int L = net.n_layers();
  auto U = detail::icnn_preacts(tape, net, p, y);
  NodeId A = tape.activation(U[L - 1], net.activation, 1);
  NodeId G = tape.linmap_rt(A, p.Wy[L - 1]);
  for (int l = L - 2; l >= 0; --l) {
    NodeId V = tape.linmap_rt(A, p.Wz[l + 1]);
    A = tape.hadamard(tape.activation(U[l], net.activation, 1), V);
    G = tape.add(G, tape.linmap_rt(A, p.Wy[l]));
  }
  if (net.quad_scale != 0.0)
    G = tape.add(G, tape.scale(y, net.quad_scale));
  if (net.quad_matrix)
    G = tape.add(G, tape.linmap_const_rt(tape.linmap_const(y, *net.quad_matrix),
                                         *net.quad_matrix));
  return G;
}

// ---- single-sample wrappers ----

struct IcnnForward {
  Tape tape;
  IcnnTapeParams params;
  NodeId root = -1;
  double value() const { return tape.value(root)(0, 0); }
};

inline IcnnForward icnn_forward(const IcnnNet& net, const Vec& y) {
  IcnnForward fwd;
  fwd.params = icnn_register(fwd.tape, net);
  NodeId yn = fwd.tape.leaf(y.transpose());
  fwd.root = icnn_value_node(fwd.tape, net, fwd.params, yn);
  return fwd;
}

struct IcnnGrads {
  std::vector<Mat> dWy, dWz;
  std::vector<Vec> db;
};

inline IcnnGrads collect_grads(const Tape& tape, const IcnnTapeParams& p) {
  IcnnGrads g;
  for (size_t l = 0; l < p.Wy.size(); ++l) {
    g.dWy.push_back(tape.matrix_grad(p.Wy[l]));
    g.dWz.push_back(l > 0 ? tape.matrix_grad(p.Wz[l]) : Mat());
    g.db.push_back(tape.vector_grad(p.b[l]));
  }
  return g;
}

inline IcnnGrads icnn_grad_params(IcnnForward& fwd) {
  fwd.tape.backward(fwd.root);
  return collect_grads(fwd.tape, fwd.params);
}

// ---- serialization ----
// Flat binary: magic "ICNN", u32 version, u32 input_dim, u32 n_layers,
// u32 widths[], u32 activation, f64 quad_scale, u8 has_quad_matrix
// (+ row-major f64 block), then per layer row-major f64 blocks Wy, Wz (l>0),
// b. A JSON sidecar (<path>.json) records the shapes and is cross-checked on
// load when present.

namespace detail {

inline void write_mat(std::ofstream& out, const Mat& W) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor tmp = W;
  out.write(reinterpret_cast<const char*>(tmp.data()),
            static_cast<std::streamsize>(sizeof(double) * tmp.size()));
}

inline Mat read_mat(std::ifstream& in, Eigen::Index rows, Eigen::Index cols) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor tmp(rows, cols);
  in.read(reinterpret_cast<char*>(tmp.data()),
          static_cast<std::streamsize>(sizeof(double) * tmp.size()));
  if (!in) throw IoError("icnn load: file truncated");
  return tmp;
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("icnn load: file truncated");
  return v;
}

}  // namespace detail

inline constexpr uint32_t kIcnnVersion = 1;

inline void icnn_save(const IcnnNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("icnn save: cannot open " + path);
  out.write("ICNN", 4);
  detail::write_pod<uint32_t>(out, kIcnnVersion);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(net.input_dim));
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(net.n_layers()));
  for (int w : net.widths) detail::write_pod<uint32_t>(out, static_cast<uint32_t>(w));
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(net.activation));
  detail::write_pod<double>(out, net.quad_scale);
  detail::write_pod<uint8_t>(out, net.quad_matrix ? 1 : 0);
  if (net.quad_matrix) detail::write_mat(out, *net.quad_matrix);
  for (int l = 0; l < net.n_layers(); ++l) {
    detail::write_mat(out, net.Wy[l]);
    if (l > 0) detail::write_mat(out, net.Wz[l]);
    detail::write_mat(out, net.b[l]);
  }
  if (!out) throw IoError("icnn save: write failed for " + path);
  out.close();

  nlohmann::json side;
  side["format"] = "ICNN";
  side["version"] = kIcnnVersion;
  side["input_dim"] = net.input_dim;
  side["widths"] = net.widths;
  side["activation"] = to_string(net.activation);
  side["quad_scale"] = net.quad_scale;
  side["quad_matrix"] = net.quad_matrix.has_value();
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < net.n_layers(); ++l) {
    nlohmann::json layer;
    layer["Wy"] = {net.Wy[l].rows(), net.Wy[l].cols()};
    layer["Wz"] = l > 0 ? nlohmann::json({net.Wz[l].rows(), net.Wz[l].cols()})
                        : nlohmann::json(nullptr);
    layer["b"] = net.b[l].size();
    layers.push_back(layer);
  }
  side["layers"] = layers;
  std::ofstream sout(path + ".json", std::ios::trunc);
  if (!sout) throw IoError("icnn save: cannot open " + path + ".json");
  sout << side.dump() << "\n";
}

inline IcnnNet icnn_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("icnn load: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ICNN", 4) != 0)
    throw IoError("icnn load: bad magic in " + path);
  uint32_t version = detail::read_pod<uint32_t>(in);
  if (version != kIcnnVersion)
    throw IoError("icnn load: unsupported version " + std::to_string(version));
  IcnnNet net;
  net.input_dim = static_cast<int>(detail::read_pod<uint32_t>(in));
  uint32_t L = detail::read_pod<uint32_t>(in);
  if (net.input_dim < 1 || L < 1 || L > 1024)
    throw IoError("icnn load: implausible header in " + path);
  for (uint32_t l = 0; l < L; ++l)
    net.widths.push_back(static_cast<int>(detail::read_pod<uint32_t>(in)));
  uint32_t act = detail::read_pod<uint32_t>(in);
  if (act > 2) throw IoError("icnn load: unknown activation tag");
  net.activation = static_cast<Activation>(act);
  net.quad_scale = detail::read_pod<double>(in);
  if (detail::read_pod<uint8_t>(in))
    net.quad_matrix = detail::read_mat(in, net.input_dim, net.input_dim);
  net.Wy.resize(L);
  net.Wz.resize(L);
  net.b.resize(L);
  for (uint32_t l = 0; l < L; ++l) {
    net.Wy[l] = detail::read_mat(in, net.widths[l], net.input_dim);
    if (l > 0)
      net.Wz[l] = detail::read_mat(in, net.widths[l], net.widths[l - 1]);
    net.b[l] = detail::read_mat(in, net.widths[l], 1);
  }
  in.peek();
  if (!in.eof()) throw IoError("icnn load: trailing bytes in " + path);

  std::ifstream side(path + ".json");
  if (side.good()) {
    nlohmann::json j;
    try {
      side >> j;
    } catch (const nlohmann::json::exception&) {
      throw IoError("icnn load: unreadable sidecar " + path + ".json");
    }
    bool ok = j.value("version", 0u) == version &&
              j.value("input_dim", -1) == net.input_dim &&
              j.value("widths", std::vector<int>{}) == net.widths &&
              j.value("activation", "") == to_string(net.activation);
    if (!ok)
      throw IoError("icnn load: sidecar disagrees with " + path);
  }
  return net;
}

}  // namespace sparseot
