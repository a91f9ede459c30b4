#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nldpc/matrix.hpp"

namespace nldpc {

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kScale,
  kRelu,
  kSoftplus,
  kWeightedSqnorm,
  kL2Norm,
  kVConcat,
  kSliceRows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kWeightedSqnorm: return "weighted_sqnorm";
    case Op::kL2Norm: return "l2norm";
    case Op::kVConcat: return "vconcat";
    case Op::kSliceRows: return "slice_rows";
  }
  return "?";
}

struct TapeNode {
  Op op = Op::kLeaf;
  int a = -1;        // first parent
  int b = -1;        // second parent
  double aux = 0.0;  // scale factor / softplus beta
  int i0 = 0;        // slice row offset
  int aux_mat = -1;  // index of constant matrix (weighted_sqnorm)
  DenseMatrix value;
  DenseMatrix adjoint;  // zero-initialized, shape = value shape
};

/// Define-by-run reverse-mode AD tape. Nodes are appended in topological
/// order; backward() runs one reverse sweep and leaves gradients in the
/// adjoints of the registered trainable leaves.
class Tape {
 public:
  int leaf(DenseMatrix v, bool trainable = false) {
    int id = push(Op::kLeaf, -1, -1, std::move(v));
    if (trainable) params_.push_back(id);
    return id;
  }

  int constant(DenseMatrix v) { return leaf(std::move(v), false); }

  int matmul(int a, int b) {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (va.cols() != vb.rows())
      throw shape_error("matmul: " + va.shape_str() + " x " + vb.shape_str());
    return push(Op::kMatMul, a, b, nldpc::matmul(va, vb));
  }

  int add(int a, int b) {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (!va.same_shape(vb))
      throw shape_error("add: " + va.shape_str() + " vs " + vb.shape_str());
    return push(Op::kAdd, a, b, nldpc::add(va, vb));
  }

  int sub(int a, int b) {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (!va.same_shape(vb))
      throw shape_error("sub: " + va.shape_str() + " vs " + vb.shape_str());
    return push(Op::kSub, a, b, nldpc::sub(va, vb));
  }

  int scale(int a, double c) {
    int id = push(Op::kScale, a, -1, nldpc::scale(value(a), c));
    nodes_[id].aux = c;
    return id;
  }

  int relu(int a) {
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return push(Op::kRelu, a, -1, std::move(out));
  }

  int softplus(int a, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("softplus: beta must be > 0");
    DenseMatrix out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_scalar(out[i], beta);
    int id = push(Op::kSoftplus, a, -1, std::move(out));
    nodes_[id].aux = beta;
    return id;
  }

  /// Scalar a^T Q a for column vector a and symmetric PSD Q.
  int weighted_sqnorm(int a, const DenseMatrix& q) {
    const DenseMatrix& va = value(a);
    if (va.cols() != 1 || q.rows() != va.rows() || q.cols() != va.rows())
      throw shape_error("weighted_sqnorm: a " + va.shape_str() + ", Q " + q.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < q.cols(); ++j) s += va[i] * q(i, j) * va[j];
    int id = push(Op::kWeightedSqnorm, a, -1, DenseMatrix(1, 1, {s}));
    nodes_[id].aux_mat = static_cast<int>(aux_mats_.size());
    aux_mats_.push_back(q);
    return id;
  }

  /// Euclidean norm; gradient is 0 below kNormGuard (subgradient at 0).
  int l2norm(int a) {
    return push(Op::kL2Norm, a, -1, DenseMatrix(1, 1, {l2_norm(value(a))}));
  }

  int vconcat(int a, int b) {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (va.cols() != vb.cols())
      throw shape_error("vconcat: " + va.shape_str() + " over " + vb.shape_str());
    DenseMatrix out(va.rows() + vb.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i];
    for (std::size_t i = 0; i < vb.size(); ++i) out[va.size() + i] = vb[i];
    return push(Op::kVConcat, a, b, std::move(out));
  }

  /// Rows [r0, r0+n) of a.
  int slice_rows(int a, std::size_t r0, std::size_t n) {
    const DenseMatrix& va = value(a);
    if (r0 + n > va.rows())
      throw shape_error("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r0 + n) +
                        ") of " + va.shape_str());
    DenseMatrix out(n, va.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(r0 + i, j);
    int id = push(Op::kSliceRows, a, -1, std::move(out));
    nodes_[id].i0 = static_cast<int>(r0);
    return id;
  }

  /// Arithmetic mean of scalar nodes, built from sequential adds.
  int mean(const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("mean: empty list");
    int acc = ids[0];
    for (std::size_t i = 1; i < ids.size(); ++i) acc = add(acc, ids[i]);
    return scale(acc, 1.0 / static_cast<double>(ids.size()));
  }

  const DenseMatrix& value(int id) const { return nodes_[id].value; }
  const DenseMatrix& adjoint(int id) const { return nodes_[id].adjoint; }
  double scalar_value(int id) const {
    const DenseMatrix& v = value(id);
    if (!v.is_scalar()) throw shape_error("scalar_value: node is " + v.shape_str());
    return v[0];
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<int>& params() const { return params_; }

  /// Reverse topological sweep from a scalar loss node. Returns gradients for
  /// the registered trainable leaves, keyed by node id.
  std::map<int, DenseMatrix> backward(int loss) {
    if (!value(loss).is_scalar())
      throw shape_error("backward: loss node " + std::to_string(loss) + " is " +
                        value(loss).shape_str() + ", expected scalar");
    for (auto& n : nodes_) n.adjoint.fill(0.0);
    nodes_[loss].adjoint[0] = 1.0;

    for (int id = loss; id >= 0; --id) {
      TapeNode& n = nodes_[id];
      if (n.adjoint.max_abs() == 0.0) continue;
      if (!n.adjoint.all_finite())
        throw numeric_error("backward: non-finite adjoint at node " + std::to_string(id) +
                            " (" + op_name(n.op) + ")");
      propagate(n);
    }

    std::map<int, DenseMatrix> grads;
    for (int p : params_) grads.emplace(p, nodes_[p].adjoint);
    return grads;
  }

 private:
  static constexpr double kNormGuard = 1e-12;

  int push(Op op, int a, int b, DenseMatrix v) {
    if (!v.all_finite())
      throw numeric_error(std::string("tape: non-finite value from ") + op_name(op) +
                          " at node " + std::to_string(nodes_.size()));
    TapeNode n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.adjoint = DenseMatrix(v.rows(), v.cols());
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void propagate(const TapeNode& n) {
    const DenseMatrix& g = n.adjoint;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const DenseMatrix& va = nodes_[n.a].value;
        const DenseMatrix& vb = nodes_[n.b].value;
        DenseMatrix& ga = nodes_[n.a].adjoint;
        DenseMatrix& gb = nodes_[n.b].adjoint;
        // ga += g * vb^T; gb += va^T * g
        for (std::size_t i = 0; i < va.rows(); ++i)
          for (std::size_t j = 0; j < vb.cols(); ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < va.cols(); ++k) ga(i, k) += gij * vb(k, j);
          }
        for (std::size_t k = 0; k < va.cols(); ++k)
          for (std::size_t i = 0; i < va.rows(); ++i) {
            const double aik = va(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < vb.cols(); ++j) gb(k, j) += aik * g(i, j);
          }
        break;
      }
      case Op::kAdd: {
        accum(n.a, g, 1.0);
        accum(n.b, g, 1.0);
        break;
      }
      case Op::kSub: {
        accum(n.a, g, 1.0);
        accum(n.b, g, -1.0);
        break;
      }
      case Op::kScale:
        accum(n.a, g, n.aux);
        break;
      case Op::kRelu: {
        const DenseMatrix& x = nodes_[n.a].value;
        DenseMatrix& ga = nodes_[n.a].adjoint;
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > 0.0) ga[i] += g[i];
        break;
      }
      case Op::kSoftplus: {
        const DenseMatrix& x = nodes_[n.a].value;
        DenseMatrix& ga = nodes_[n.a].adjoint;
        for (std::size_t i = 0; i < x.size(); ++i)
          ga[i] += g[i] * logistic_scalar(n.aux * x[i]);
        break;
      }
      case Op::kWeightedSqnorm: {
        const DenseMatrix& q = aux_mats_[n.aux_mat];
        const DenseMatrix& x = nodes_[n.a].value;
        DenseMatrix& ga = nodes_[n.a].adjoint;
        const double g0 = g[0];
        for (std::size_t i = 0; i < q.rows(); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < q.cols(); ++j) s += q(i, j) * x[j];
          ga[i] += g0 * 2.0 * s;
        }
        break;
      }
      case Op::kL2Norm: {
        const double norm = n.value[0];
        if (norm < kNormGuard) break;  // subgradient 0 at the origin
        const DenseMatrix& x = nodes_[n.a].value;
        DenseMatrix& ga = nodes_[n.a].adjoint;
        const double g0 = g[0] / norm;
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g0 * x[i];
        break;
      }
      case Op::kVConcat: {
        DenseMatrix& ga = nodes_[n.a].adjoint;
        DenseMatrix& gb = nodes_[n.b].adjoint;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[ga.size() + i];
        break;
      }
      case Op::kSliceRows: {
        DenseMatrix& ga = nodes_[n.a].adjoint;
        const std::size_t r0 = static_cast<std::size_t>(n.i0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(r0 + i, j) += g(i, j);
        break;
      }
    }
  }

  void accum(int id, const DenseMatrix& g, double factor) {
    DenseMatrix& t = nodes_[id].adjoint;
    for (std::size_t i = 0; i < g.size(); ++i) t[i] += factor * g[i];
  }

  std::vector<TapeNode> nodes_;
  std::vector<DenseMatrix> aux_mats_;
  std::vector<int> params_;
};

/// Central finite-difference oracle: rebuilds the tape twice per coordinate
/// and compares against one reverse sweep. Returns the worst per-coordinate
/// relative error, with denominator max(1, |ad|, |fd|).
/// Builder signature: double-free callable (Tape&, const std::vector<int>& leaf_ids) -> loss id.
template <typename Builder>
double grad_check(Builder&& build, std::vector<DenseMatrix> leaves, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be > 0");

  auto eval = [&](const std::vector<DenseMatrix>& pts) {
    Tape t;
    std::vector<int> ids;
    ids.reserve(pts.size());
    for (const auto& p : pts) ids.push_back(t.leaf(p));
    return t.scalar_value(build(t, ids));
  };

  Tape t;
  std::vector<int> ids;
  ids.reserve(leaves.size());
  for (const auto& p : leaves) ids.push_back(t.leaf(p, true));
  auto grads = t.backward(build(t, ids));

  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const DenseMatrix& grad = grads.at(ids[l]);
    for (std::size_t c = 0; c < leaves[l].size(); ++c) {
      const double orig = leaves[l][c];
      leaves[l][c] = orig + h;
      const double fp = eval(leaves);
      leaves[l][c] = orig - h;
      const double fm = eval(leaves);
      leaves[l][c] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grad[c];
      const double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace nldpc
