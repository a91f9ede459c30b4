#pragma once

#include <optional>

#include "nldpc/dynamics.hpp"
#include "nldpc/nets.hpp"

namespace nldpc {

/// Weights, boxes and horizon of the sampled optimal control problem.
/// Q_h, Q_g, Q_V, Q_Xf are the penalty weights on state, input, Lyapunov
/// decrease and terminal-set violations.
struct ProblemSpec {
  DenseMatrix q_x;  // state weight, n_x x n_x PSD
  DenseMatrix q_u;  // input weight, n_u x n_u PSD
  double q_v = 0.0;
  double q_h = 0.0;
  double q_g = 0.0;
  double q_xf = 0.0;
  std::size_t horizon = 1;
  Box state_box;
  Box input_box;
  std::optional<Box> terminal_box;
  double margin = 0.0;  // strict-decrease margin used by the verifier
};

inline ProblemSpec make_problem(const SystemModel& model, double qx, double qu) {
  ProblemSpec s;
  s.q_x = DenseMatrix::scaled_identity(model.n_x(), qx);
  s.q_u = DenseMatrix::scaled_identity(model.n_u(), qu);
  s.state_box = model.state_box();
  s.input_box = model.input_box();
  return s;
}

/// x^T Q_x x + u^T Q_u u.
inline int stage_loss(Tape& t, const ProblemSpec& spec, int x, int u) {
  return t.add(t.weighted_sqnorm(x, spec.q_x), t.weighted_sqnorm(u, spec.q_u));
}

/// ||relu([v - hi; lo - v])||_2 — zero inside the box, Euclidean norm of the
/// componentwise violations outside.
inline int box_penalty(Tape& t, int v, const Box& box) {
  int hi = t.constant(box.hi);
  int lo = t.constant(box.lo);
  int over = t.relu(t.sub(v, hi));
  int under = t.relu(t.sub(lo, v));
  return t.l2norm(t.vconcat(over, under));
}

inline int penalty_state(Tape& t, const ProblemSpec& spec, int x) {
  return box_penalty(t, x, spec.state_box);
}

inline int penalty_input(Tape& t, const ProblemSpec& spec, int u) {
  return box_penalty(t, u, spec.input_box);
}

/// relu(V(x_next) - V(x)): the positive part of the Lyapunov increase.
inline int penalty_lyapunov(Tape& t, const LyapunovHandles& v, int x_next, int x) {
  return t.relu(t.sub(lyapunov_forward(t, v, x_next), lyapunov_forward(t, v, x)));
}

/// Same as penalty_lyapunov but with the two V nodes already built, so the
/// rollout can reuse V(x_k) between consecutive steps.
inline int penalty_lyapunov_nodes(Tape& t, int v_next, int v_cur) {
  return t.relu(t.sub(v_next, v_cur));
}

/// Terminal box penalty; zero node when no terminal set is configured.
inline int penalty_terminal(Tape& t, const ProblemSpec& spec, int x_last) {
  if (!spec.terminal_box) return t.constant(DenseMatrix(1, 1));
  return box_penalty(t, x_last, *spec.terminal_box);
}

/// Mean over batch and horizon of stage loss + weighted penalties; the
/// terminal penalty enters once per trajectory (scaled 1/m).
/// states[i] holds nodes x_0..x_N, controls[i] holds u_0..u_{N-1},
/// v_values[i] holds V(x_0)..V(x_N) nodes (may be empty when q_v = 0).
inline int nldpc_loss(Tape& t, const ProblemSpec& spec,
                      const std::vector<std::vector<int>>& states,
                      const std::vector<std::vector<int>>& controls,
                      const std::vector<std::vector<int>>& v_values) {
  const std::size_t m = states.size();
  if (m == 0) throw std::invalid_argument("nldpc_loss: empty batch");
  const std::size_t n = spec.horizon;

  int running = -1;
  int terminal = -1;
  for (std::size_t i = 0; i < m; ++i) {
    if (states[i].size() != n + 1 || controls[i].size() != n)
      throw shape_error("nldpc_loss: trajectory " + std::to_string(i) +
                        " does not match horizon " + std::to_string(n));
    for (std::size_t k = 0; k < n; ++k) {
      int term = stage_loss(t, spec, states[i][k], controls[i][k]);
      if (spec.q_v > 0.0 && !v_values[i].empty())
        term = t.add(term, t.scale(penalty_lyapunov_nodes(t, v_values[i][k + 1],
                                                          v_values[i][k]),
                                   spec.q_v));
      if (spec.q_h > 0.0)
        term = t.add(term, t.scale(penalty_state(t, spec, states[i][k]), spec.q_h));
      if (spec.q_g > 0.0)
        term = t.add(term, t.scale(penalty_input(t, spec, controls[i][k]), spec.q_g));
      running = running < 0 ? term : t.add(running, term);
    }
    if (spec.terminal_box && spec.q_xf > 0.0) {
      int tp = t.scale(penalty_terminal(t, spec, states[i][n]), spec.q_xf);
      terminal = terminal < 0 ? tp : t.add(terminal, tp);
    }
  }

  int loss = t.scale(running, 1.0 / static_cast<double>(m * n));
  if (terminal >= 0)
    loss = t.add(loss, t.scale(terminal, 1.0 / static_cast<double>(m)));
  return loss;
}

// Plain numeric mirrors used by simulation bookkeeping.

inline double stage_loss_eval(const ProblemSpec& spec, const DenseMatrix& x,
                              const DenseMatrix& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < spec.q_x.rows(); ++i)
    for (std::size_t j = 0; j < spec.q_x.cols(); ++j) s += x[i] * spec.q_x(i, j) * x[j];
  for (std::size_t i = 0; i < spec.q_u.rows(); ++i)
    for (std::size_t j = 0; j < spec.q_u.cols(); ++j) s += u[i] * spec.q_u(i, j) * u[j];
  return s;
}

inline double box_violation_eval(const DenseMatrix& v, const Box& box) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double over = std::max(0.0, v[i] - box.hi[i]);
    const double under = std::max(0.0, box.lo[i] - v[i]);
    s += over * over + under * under;
  }
  return std::sqrt(s);
}

}  // namespace nldpc
