#pragma once

#include "nldpc/objective.hpp"

namespace nldpc {

/// Differentiable graph: policy(x0) -> N-step rollout -> NLDPC loss.
/// Owns the tape; the handle structs route gradients back to the nets.
struct TrainRollout {
  Tape tape;
  PolicyHandles policy;
  LyapunovHandles lyapunov;
  std::vector<std::vector<int>> states;    // per sample: x_0..x_N
  std::vector<std::vector<int>> controls;  // per sample: u_0..u_{N-1}
  int loss_id = -1;

  double loss() const { return tape.scalar_value(loss_id); }
};

/// The whole control sequence is a function of x0 (open loop within the
/// horizon); receding-horizon feedback happens only at evaluation time.
inline TrainRollout build_train_graph(const PolicyNet& policy, const LyapunovNet& lyap,
                                      const SystemModel& model, const ProblemSpec& spec,
                                      const DenseMatrix& x0_batch,
                                      bool trainable = true) {
  if (x0_batch.cols() != model.n_x())
    throw shape_error("build_train_graph: x0 batch is " + x0_batch.shape_str() +
                      ", expected m x " + std::to_string(model.n_x()));
  const std::size_t m = x0_batch.rows();
  if (m == 0) throw std::invalid_argument("build_train_graph: empty batch");
  const std::size_t n = spec.horizon;
  const bool need_v = spec.q_v > 0.0;

  TrainRollout r;
  r.policy = bind_policy(r.tape, policy, trainable);
  r.lyapunov = bind_lyapunov(r.tape, lyap, trainable);

  std::vector<std::vector<int>> v_nodes(m);
  for (std::size_t i = 0; i < m; ++i) {
    DenseMatrix x0(model.n_x(), 1);
    for (std::size_t j = 0; j < x0.size(); ++j) x0[j] = x0_batch(i, j);
    int x = r.tape.constant(std::move(x0));
    int u_seq = policy_forward(r.tape, r.policy, x);

    std::vector<int> xs{x};
    std::vector<int> us;
    std::vector<int> vs;
    if (need_v) vs.push_back(lyapunov_forward(r.tape, r.lyapunov, x));
    for (std::size_t k = 0; k < n; ++k) {
      int u = r.tape.slice_rows(u_seq, k * model.n_u(), model.n_u());
      us.push_back(u);
      x = model.step(r.tape, x, u);
      xs.push_back(x);
      if (need_v) vs.push_back(lyapunov_forward(r.tape, r.lyapunov, x));
    }
    r.states.push_back(std::move(xs));
    r.controls.push_back(std::move(us));
    v_nodes[i] = std::move(vs);
  }

  r.loss_id = nldpc_loss(r.tape, spec, r.states, r.controls, v_nodes);
  return r;
}

/// Receding-horizon evaluation record; plain numbers, no tape.
struct SimTrajectory {
  DenseMatrix states;       // (T+1) x n_x
  DenseMatrix controls;     // T x n_u
  std::vector<double> v_values;      // T+1
  std::vector<double> stage_losses;  // T
  std::vector<bool> state_violation;     // per step k = 0..T
  std::vector<bool> input_violation;     // per step k = 0..T-1
  std::vector<bool> lyapunov_violation;  // V(x_{k+1}) >= V(x_k), k = 0..T-1
  bool diverged = false;
  std::size_t steps = 0;  // steps actually simulated (== T unless diverged)

  DenseMatrix state_at(std::size_t k) const {
    DenseMatrix x(states.cols(), 1);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = states(k, j);
    return x;
  }
};

// Well beyond any admissible state box, yet small enough that a spectral
// radius of 1.2 crosses it from unit initial conditions within 50 steps
// (1.2^38 ~ 1e3).
constexpr double kDivergenceGuard = 1e3;

/// Applies u_k = first action of policy(x_k) for T steps, recording V and the
/// per-step violation flags. Truncates with the divergence flag once
/// ||x||_inf exceeds the guard.
inline SimTrajectory simulate_closed_loop(const PolicyNet& policy, const LyapunovNet& lyap,
                                          const SystemModel& model, const ProblemSpec& spec,
                                          const DenseMatrix& x0, std::size_t horizon_t) {
  if (horizon_t < 1) throw std::invalid_argument("simulate_closed_loop: T must be >= 1");
  LyapunovEvaluator v_eval(lyap);

  SimTrajectory sim;
  sim.states = DenseMatrix(horizon_t + 1, model.n_x());
  sim.controls = DenseMatrix(horizon_t, model.n_u());

  DenseMatrix x = x0;
  for (std::size_t k = 0; k <= horizon_t; ++k) {
    for (std::size_t j = 0; j < x.size(); ++j) sim.states(k, j) = x[j];
    sim.v_values.push_back(v_eval(x));
    sim.state_violation.push_back(!model.state_box().contains(x));
    if (k == horizon_t) break;

    DenseMatrix u = policy_first_action_eval(policy, x);
    for (std::size_t j = 0; j < u.size(); ++j) sim.controls(k, j) = u[j];
    sim.input_violation.push_back(!model.input_box().contains(u));
    sim.stage_losses.push_back(stage_loss_eval(spec, x, u));

    x = model.step_eval(x, u);
    sim.lyapunov_violation.push_back(v_eval(x) >= sim.v_values.back());
    sim.steps = k + 1;
    if (inf_norm(x) > kDivergenceGuard) {
      sim.diverged = true;
      break;
    }
  }
  return sim;
}

struct GridSpec {
  std::size_t dim_i = 0;
  std::size_t dim_j = 1;
  double lo_i = -1.0, hi_i = 1.0;
  double lo_j = -1.0, hi_j = 1.0;
  std::size_t res_i = 2, res_j = 2;
  DenseMatrix fixed;  // full-dimension template for non-slice coordinates

  void validate() const {
    if (res_i < 2 || res_j < 2) throw std::invalid_argument("grid: resolution must be >= 2");
  }

  double coord_i(std::size_t i) const {
    return lo_i + (hi_i - lo_i) * static_cast<double>(i) / static_cast<double>(res_i - 1);
  }
  double coord_j(std::size_t j) const {
    return lo_j + (hi_j - lo_j) * static_cast<double>(j) / static_cast<double>(res_j - 1);
  }

  DenseMatrix point(std::size_t i, std::size_t j, std::size_t n_x) const {
    DenseMatrix x = fixed.size() == n_x ? fixed : DenseMatrix(n_x, 1);
    x[dim_i] = coord_i(i);
    x[dim_j] = coord_j(j);
    return x;
  }
};

/// V(f(x, pi(x))) - V(x) over a 2D slice; negative entries certify decrease.
/// Row-major with the i dimension outermost.
inline DenseMatrix lyapunov_difference_field(const LyapunovNet& lyap, const PolicyNet& policy,
                                             const SystemModel& model, const GridSpec& grid) {
  grid.validate();
  LyapunovEvaluator v_eval(lyap);
  DenseMatrix field(grid.res_i, grid.res_j);
  for (std::size_t i = 0; i < grid.res_i; ++i)
    for (std::size_t j = 0; j < grid.res_j; ++j) {
      DenseMatrix x = grid.point(i, j, model.n_x());
      DenseMatrix u = policy_first_action_eval(policy, x);
      field(i, j) = v_eval(model.step_eval(x, u)) - v_eval(x);
    }
  return field;
}

}  // namespace nldpc
