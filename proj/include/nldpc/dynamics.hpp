#pragma once

#include <memory>
#include <string>

#include "nldpc/tape.hpp"

namespace nldpc {

struct Box {
  DenseMatrix lo;  // column vectors
  DenseMatrix hi;

  std::size_t dim() const { return lo.rows(); }

  bool contains(const DenseMatrix& x) const {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }

  static Box symmetric(std::size_t n, double half_width) {
    Box b;
    b.lo = DenseMatrix(n, 1);
    b.hi = DenseMatrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      b.lo[i] = -half_width;
      b.hi[i] = half_width;
    }
    return b;
  }
};

/// Discrete-time x+ = f(x, u). The step must be expressible as tape ops so
/// the rollout stays differentiable.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  std::size_t n_x() const { return state_box_.dim(); }
  std::size_t n_u() const { return input_box_.dim(); }
  const Box& state_box() const { return state_box_; }
  const Box& input_box() const { return input_box_; }

  virtual int step(Tape& t, int x, int u) const = 0;
  virtual DenseMatrix step_eval(const DenseMatrix& x, const DenseMatrix& u) const = 0;

 protected:
  SystemModel(Box state_box, Box input_box)
      : state_box_(std::move(state_box)), input_box_(std::move(input_box)) {}

  void check_dims(const DenseMatrix& x, const DenseMatrix& u) const {
    if (x.rows() != n_x() || x.cols() != 1)
      throw shape_error("step: state is " + x.shape_str() + ", expected " +
                        std::to_string(n_x()) + "x1");
    if (u.rows() != n_u() || u.cols() != 1)
      throw shape_error("step: input is " + u.shape_str() + ", expected " +
                        std::to_string(n_u()) + "x1");
  }

 private:
  Box state_box_;
  Box input_box_;
};

class LtiSystem : public SystemModel {
 public:
  LtiSystem(DenseMatrix a, DenseMatrix b, Box state_box, Box input_box)
      : SystemModel(std::move(state_box), std::move(input_box)),
        a_(std::move(a)),
        b_(std::move(b)) {
    if (a_.rows() != n_x() || a_.cols() != n_x() || b_.rows() != n_x() || b_.cols() != n_u())
      throw shape_error("LtiSystem: A " + a_.shape_str() + ", B " + b_.shape_str());
  }

  const DenseMatrix& a() const { return a_; }
  const DenseMatrix& b() const { return b_; }

  int step(Tape& t, int x, int u) const override {
    check_dims(t.value(x), t.value(u));
    return t.add(t.matmul(t.constant(a_), x), t.matmul(t.constant(b_), u));
  }

  DenseMatrix step_eval(const DenseMatrix& x, const DenseMatrix& u) const override {
    check_dims(x, u);
    return add(matmul(a_, x), matmul(b_, u));
  }

 private:
  DenseMatrix a_;
  DenseMatrix b_;
};

/// x+ = [[1.2, 1.0], [0.0, 1.0]] x + [[1.0], [0.5]] u, open-loop unstable
/// (spectral radius 1.2), boxes x in [-10,10]^2 and u in [-1,1].
inline LtiSystem double_integrator() {
  return LtiSystem(DenseMatrix{{1.2, 1.0}, {0.0, 1.0}}, DenseMatrix{{1.0}, {0.5}},
                   Box::symmetric(2, 10.0), Box::symmetric(1, 1.0));
}

struct PvtolParams {
  double mass = 4.0;       // kg
  double inertia = 0.0475; // kg m^2
  double arm = 0.25;       // m, moment arm of the lateral thruster force
  double gravity = 9.8;    // m/s^2
  double damping = 0.05;   // translational aerodynamic damping
  double dt = 0.2;         // s
};

/// Planar VTOL aircraft linearized about hover, forward-Euler discretized.
/// State (x, y, theta, xdot, ydot, thetadot); inputs are thruster force
/// deviations from the hover trim, so step(0, 0) = 0.
class PvtolModel : public LtiSystem {
 public:
  explicit PvtolModel(const PvtolParams& p = {})
      : LtiSystem(discrete_a(validate(p)), discrete_b(p), Box::symmetric(6, 5.0),
                  Box::symmetric(2, 5.0)),
        params_(p) {}

  const PvtolParams& params() const { return params_; }

 private:
  static const PvtolParams& validate(const PvtolParams& p) {
    if (!(p.dt > 0.0) || !(p.mass > 0.0) || !(p.inertia > 0.0))
      throw std::invalid_argument("pvtol: dt, mass and inertia must be positive");
    return p;
  }

  static DenseMatrix discrete_a(const PvtolParams& p) {
    // xddot = -g theta - (c/m) xdot + u1/m
    // yddot = -(c/m) ydot + u2/m
    // thetaddot = (r/J) u1
    DenseMatrix ac(6, 6);
    ac(0, 3) = 1.0;
    ac(1, 4) = 1.0;
    ac(2, 5) = 1.0;
    ac(3, 2) = -p.gravity;
    ac(3, 3) = -p.damping / p.mass;
    ac(4, 4) = -p.damping / p.mass;
    return add(DenseMatrix::identity(6), scale(ac, p.dt));
  }

  static DenseMatrix discrete_b(const PvtolParams& p) {
    DenseMatrix bc(6, 2);
    bc(3, 0) = 1.0 / p.mass;
    bc(4, 1) = 1.0 / p.mass;
    bc(5, 0) = p.arm / p.inertia;
    return scale(bc, p.dt);
  }

  PvtolParams params_;
};

inline PvtolModel pvtol(const PvtolParams& p = {}) { return PvtolModel(p); }

/// States x_0..x_N from applying the N rows of U open loop; plain numbers.
/// Returns an (N+1) x n_x matrix with x_k in row k.
inline DenseMatrix rollout_open_loop(const SystemModel& model, const DenseMatrix& x0,
                                     const DenseMatrix& controls) {
  if (x0.rows() != model.n_x() || x0.cols() != 1)
    throw shape_error("rollout_open_loop: x0 is " + x0.shape_str());
  if (controls.cols() != model.n_u() && controls.rows() > 0)
    throw shape_error("rollout_open_loop: controls are " + controls.shape_str());
  const std::size_t n = controls.rows();
  DenseMatrix traj(n + 1, model.n_x());
  DenseMatrix x = x0;
  for (std::size_t j = 0; j < x.size(); ++j) traj(0, j) = x[j];
  for (std::size_t k = 0; k < n; ++k) {
    DenseMatrix u(model.n_u(), 1);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = controls(k, j);
    x = model.step_eval(x, u);
    for (std::size_t j = 0; j < x.size(); ++j) traj(k + 1, j) = x[j];
  }
  return traj;
}

}  // namespace nldpc
