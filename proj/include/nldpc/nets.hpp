#pragma once

#include <random>
#include <string>
#include <vector>

#include "nldpc/tape.hpp"

namespace nldpc {

enum class Activation { kRelu, kSoftplus };

inline std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "softplus";
}
inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "softplus") return Activation::kSoftplus;
  throw std::invalid_argument("unknown activation: " + s);
}

/// Smoothing sharpness for the softplus surrogate of ReLU.
constexpr double kSoftplusBeta = 5.0;

/// Fully connected policy x0 -> U, output dimension N * n_u.
struct PolicyNet {
  std::vector<std::size_t> widths;  // [n_x, hidden..., N*n_u]
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;
  Activation activation = Activation::kRelu;
  std::size_t horizon = 1;
  std::size_t n_u = 1;

  std::size_t n_x() const { return widths.front(); }

  std::vector<DenseMatrix*> params() {
    std::vector<DenseMatrix*> out;
    for (auto& w : weights) out.push_back(&w);
    for (auto& b : biases) out.push_back(&b);
    return out;
  }
};

/// Input-convex net g(x). Hidden-to-hidden weights are stored raw and mapped
/// through softplus on the forward pass, so the effective U_i stay
/// nonnegative while the optimizer remains unconstrained.
struct IcnnNet {
  std::vector<std::size_t> widths;  // [n_x, hidden..., 1]
  std::vector<DenseMatrix> w;       // direct-input weights, one per layer
  std::vector<DenseMatrix> b;       // biases, one per layer
  std::vector<DenseMatrix> u_raw;   // raw hidden-to-hidden, layers 1..L-1
  double beta = kSoftplusBeta;      // activation sharpness

  std::size_t n_x() const { return widths.front(); }
  std::size_t layers() const { return w.size(); }

  std::vector<DenseMatrix*> params() {
    std::vector<DenseMatrix*> out;
    for (auto& m : w) out.push_back(&m);
    for (auto& m : b) out.push_back(&m);
    for (auto& m : u_raw) out.push_back(&m);
    return out;
  }
};

/// V(x) = sigma(g(x) - g(0)) + epsilon * ||x||^2 with sigma convex,
/// nondecreasing, sigma(0) = 0.
struct LyapunovNet {
  IcnnNet g;
  double epsilon = 0.01;

  std::size_t n_x() const { return g.n_x(); }
  std::vector<DenseMatrix*> params() { return g.params(); }
};

// ---------------------------------------------------------------------------
// Initialization: uniform(-a, a) with a = sqrt(6 / fan_in), zero biases.
// Raw ICNN hidden-to-hidden weights are shifted down so the effective
// softplus-mapped U_i start near zero; without the shift an 8-layer stack of
// mean-0.7 nonnegative 40x40 matrices blows up the forward pass.
// ---------------------------------------------------------------------------

constexpr double kIcnnRawShift = 4.0;

inline DenseMatrix init_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("init: zero-width layer");
  const double a = std::sqrt(6.0 / static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-a, a);
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
  return m;
}

inline PolicyNet make_policy(std::size_t n_x, const std::vector<std::size_t>& hidden,
                             std::size_t horizon, std::size_t n_u, Activation act,
                             std::uint64_t seed) {
  PolicyNet net;
  net.widths.push_back(n_x);
  for (auto h : hidden) net.widths.push_back(h);
  net.widths.push_back(horizon * n_u);
  net.activation = act;
  net.horizon = horizon;
  net.n_u = n_u;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    net.weights.push_back(init_weight(net.widths[l + 1], net.widths[l], rng));
    net.biases.push_back(DenseMatrix(net.widths[l + 1], 1));
  }
  return net;
}

inline IcnnNet make_icnn(std::size_t n_x, const std::vector<std::size_t>& hidden,
                         std::uint64_t seed, double beta = kSoftplusBeta) {
  IcnnNet net;
  net.widths.push_back(n_x);
  for (auto h : hidden) net.widths.push_back(h);
  net.widths.push_back(1);
  net.beta = beta;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    net.w.push_back(init_weight(net.widths[l + 1], n_x, rng));
    net.b.push_back(DenseMatrix(net.widths[l + 1], 1));
    if (l > 0) {
      DenseMatrix u = init_weight(net.widths[l + 1], net.widths[l], rng);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] -= kIcnnRawShift;
      net.u_raw.push_back(std::move(u));
    }
  }
  return net;
}

inline LyapunovNet make_lyapunov(std::size_t n_x, const std::vector<std::size_t>& hidden,
                                 double epsilon, std::uint64_t seed,
                                 double beta = kSoftplusBeta) {
  LyapunovNet net;
  net.g = make_icnn(n_x, hidden, seed, beta);
  net.epsilon = epsilon;
  return net;
}

// ---------------------------------------------------------------------------
// Tape-bound forward passes. bind_* registers the parameters as tape leaves
// (trainable or frozen); the handle structs carry the node ids so gradients
// can be routed back to the owning net.
// ---------------------------------------------------------------------------

struct PolicyHandles {
  const PolicyNet* net = nullptr;
  std::vector<int> w_ids;
  std::vector<int> b_ids;
};

struct IcnnHandles {
  const IcnnNet* net = nullptr;
  std::vector<int> w_ids;
  std::vector<int> b_ids;
  std::vector<int> u_raw_ids;
  std::vector<int> u_eff_ids;  // softplus(u_raw), shared across evaluations
};

struct LyapunovHandles {
  const LyapunovNet* net = nullptr;
  IcnnHandles g;
  int g0_id = -1;  // g at the origin, shared across evaluations
};

inline PolicyHandles bind_policy(Tape& t, const PolicyNet& net, bool trainable) {
  PolicyHandles h;
  h.net = &net;
  for (const auto& w : net.weights) h.w_ids.push_back(t.leaf(w, trainable));
  for (const auto& b : net.biases) h.b_ids.push_back(t.leaf(b, trainable));
  return h;
}

inline int icnn_forward(Tape& t, const IcnnHandles& h, int x);

inline IcnnHandles bind_icnn(Tape& t, const IcnnNet& net, bool trainable) {
  IcnnHandles h;
  h.net = &net;
  for (const auto& w : net.w) h.w_ids.push_back(t.leaf(w, trainable));
  for (const auto& b : net.b) h.b_ids.push_back(t.leaf(b, trainable));
  for (const auto& u : net.u_raw) {
    int raw = t.leaf(u, trainable);
    h.u_raw_ids.push_back(raw);
    h.u_eff_ids.push_back(t.softplus(raw, 1.0));
  }
  return h;
}

inline LyapunovHandles bind_lyapunov(Tape& t, const LyapunovNet& net, bool trainable) {
  LyapunovHandles h;
  h.net = &net;
  h.g = bind_icnn(t, net.g, trainable);
  int origin = t.constant(DenseMatrix(net.n_x(), 1));
  h.g0_id = icnn_forward(t, h.g, origin);
  return h;
}

inline int activation_forward(Tape& t, int z, Activation act, double beta) {
  return act == Activation::kRelu ? t.relu(z) : t.softplus(z, beta);
}

/// U = W_L z_L + b_L over hidden recursion; output is a column of length
/// horizon * n_u whose row block k is u_k.
inline int policy_forward(Tape& t, const PolicyHandles& h, int x0) {
  const PolicyNet& net = *h.net;
  if (t.value(x0).rows() != net.n_x() || t.value(x0).cols() != 1)
    throw shape_error("policy_forward: x0 is " + t.value(x0).shape_str() + ", expected " +
                      std::to_string(net.n_x()) + "x1");
  int z = x0;
  const std::size_t last = net.weights.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    z = t.add(t.matmul(h.w_ids[l], z), h.b_ids[l]);
    if (l < last) z = activation_forward(t, z, net.activation, kSoftplusBeta);
  }
  return z;
}

inline int policy_first_action(Tape& t, const PolicyHandles& h, int x) {
  int u_seq = policy_forward(t, h, x);
  return t.slice_rows(u_seq, 0, h.net->n_u);
}

/// z_1 = sigma(W_0 x + b_0); z_{i+1} = sigma(U_i z_i + W_i x + b_i).
inline int icnn_forward(Tape& t, const IcnnHandles& h, int x) {
  const IcnnNet& net = *h.net;
  if (t.value(x).rows() != net.n_x() || t.value(x).cols() != 1)
    throw shape_error("icnn_forward: x is " + t.value(x).shape_str() + ", expected " +
                      std::to_string(net.n_x()) + "x1");
  int z = t.softplus(t.add(t.matmul(h.w_ids[0], x), h.b_ids[0]), net.beta);
  for (std::size_t l = 1; l < net.layers(); ++l) {
    int pre = t.add(t.matmul(h.u_eff_ids[l - 1], z),
                    t.add(t.matmul(h.w_ids[l], x), h.b_ids[l]));
    z = t.softplus(pre, net.beta);
  }
  return z;
}

inline int lyapunov_forward(Tape& t, const LyapunovHandles& h, int x) {
  const LyapunovNet& net = *h.net;
  int g = icnn_forward(t, h.g, x);
  int shifted = t.sub(g, h.g0_id);
  // sigma(y) = max(0, softplus(y) - softplus(0)): convex, nondecreasing,
  // sigma(0) = 0, and nonnegative so that V >= eps * ||x||^2 holds even where
  // g(x) < g(0).
  const double beta = net.g.beta;
  int sigma = t.relu(t.sub(t.softplus(shifted, beta),
                           t.constant(DenseMatrix(1, 1, {softplus_scalar(0.0, beta)}))));
  int sq = t.weighted_sqnorm(x, DenseMatrix::scaled_identity(net.n_x(), net.epsilon));
  return t.add(sigma, sq);
}

// ---------------------------------------------------------------------------
// Plain numeric forwards (no tape) for closed-loop simulation and sampling
// oracles. Must agree exactly with the tape path; tested for equality.
// ---------------------------------------------------------------------------

inline DenseMatrix policy_eval(const PolicyNet& net, const DenseMatrix& x0) {
  if (x0.rows() != net.n_x() || x0.cols() != 1)
    throw shape_error("policy_eval: x0 is " + x0.shape_str());
  DenseMatrix z = x0;
  const std::size_t last = net.weights.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    z = add(matmul(net.weights[l], z), net.biases[l]);
    if (l < last) {
      for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = net.activation == Activation::kRelu ? (z[i] > 0.0 ? z[i] : 0.0)
                                                   : softplus_scalar(z[i], kSoftplusBeta);
    }
  }
  return z;
}

inline DenseMatrix policy_first_action_eval(const PolicyNet& net, const DenseMatrix& x) {
  DenseMatrix u_seq = policy_eval(net, x);
  DenseMatrix u(net.n_u, 1);
  for (std::size_t i = 0; i < net.n_u; ++i) u[i] = u_seq[i];
  return u;
}

inline double icnn_eval(const IcnnNet& net, const DenseMatrix& x) {
  if (x.rows() != net.n_x() || x.cols() != 1)
    throw shape_error("icnn_eval: x is " + x.shape_str());
  DenseMatrix z = add(matmul(net.w[0], x), net.b[0]);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = softplus_scalar(z[i], net.beta);
  for (std::size_t l = 1; l < net.layers(); ++l) {
    DenseMatrix u_eff = net.u_raw[l - 1];
    for (std::size_t i = 0; i < u_eff.size(); ++i) u_eff[i] = softplus_scalar(u_eff[i], 1.0);
    DenseMatrix pre = add(matmul(u_eff, z), add(matmul(net.w[l], x), net.b[l]));
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = softplus_scalar(pre[i], net.beta);
    z = std::move(pre);
  }
  return z[0];
}

inline double lyapunov_eval(const LyapunovNet& net, const DenseMatrix& x) {
  const double g = icnn_eval(net.g, x);
  const double g0 = icnn_eval(net.g, DenseMatrix(net.n_x(), 1));
  const double beta = net.g.beta;
  const double sigma =
      std::max(0.0, softplus_scalar(g - g0, beta) - softplus_scalar(0.0, beta));
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += x[i] * x[i];
  return sigma + net.epsilon * sq;
}

/// Caches the softplus-mapped hidden weights so repeated evaluations don't
/// pay the reparameterization on every call. Valid only while the underlying
/// parameters are unchanged.
class IcnnEvaluator {
 public:
  explicit IcnnEvaluator(const IcnnNet& net) : net_(&net) {
    for (const auto& u : net.u_raw) {
      DenseMatrix eff = u;
      for (std::size_t i = 0; i < eff.size(); ++i) eff[i] = softplus_scalar(eff[i], 1.0);
      u_eff_.push_back(std::move(eff));
    }
  }

  double operator()(const DenseMatrix& x) const {
    const IcnnNet& g = *net_;
    DenseMatrix z = add(matmul(g.w[0], x), g.b[0]);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = softplus_scalar(z[i], g.beta);
    for (std::size_t l = 1; l < g.layers(); ++l) {
      DenseMatrix pre = add(matmul(u_eff_[l - 1], z), add(matmul(g.w[l], x), g.b[l]));
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = softplus_scalar(pre[i], g.beta);
      z = std::move(pre);
    }
    return z[0];
  }

 private:
  const IcnnNet* net_;
  std::vector<DenseMatrix> u_eff_;
};

/// Caches the softplus-mapped hidden weights and g(0) so repeated closed-loop
/// evaluations don't pay the reparameterization on every call. Valid only
/// while the underlying parameters are unchanged.
class LyapunovEvaluator {
 public:
  explicit LyapunovEvaluator(const LyapunovNet& net) : net_(&net) {
    for (const auto& u : net.g.u_raw) {
      DenseMatrix eff = u;
      for (std::size_t i = 0; i < eff.size(); ++i) eff[i] = softplus_scalar(eff[i], 1.0);
      u_eff_.push_back(std::move(eff));
    }
    g0_ = g_eval(DenseMatrix(net.n_x(), 1));
  }

  double operator()(const DenseMatrix& x) const {
    const double beta = net_->g.beta;
    const double sigma = std::max(
        0.0, softplus_scalar(g_eval(x) - g0_, beta) - softplus_scalar(0.0, beta));
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += x[i] * x[i];
    return sigma + net_->epsilon * sq;
  }

 private:
  double g_eval(const DenseMatrix& x) const {
    const IcnnNet& g = net_->g;
    DenseMatrix z = add(matmul(g.w[0], x), g.b[0]);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = softplus_scalar(z[i], g.beta);
    for (std::size_t l = 1; l < g.layers(); ++l) {
      DenseMatrix pre = add(matmul(u_eff_[l - 1], z), add(matmul(g.w[l], x), g.b[l]));
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = softplus_scalar(pre[i], g.beta);
      z = std::move(pre);
    }
    return z[0];
  }

  const LyapunovNet* net_;
  std::vector<DenseMatrix> u_eff_;
  double g0_;
};

}  // namespace nldpc
