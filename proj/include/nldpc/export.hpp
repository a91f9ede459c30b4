#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "nldpc/rollout.hpp"

namespace nldpc {

struct export_error : std::runtime_error {
  explicit export_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw export_error("export: cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace detail

/// Vector-field CSV (x_i,x_j,dx_i,dx_j) of one-step closed-loop displacement
/// over the grid, plus a trajectory CSV (traj_id,k,x_i,x_j) from initial
/// conditions spread along the grid fringe.
inline void export_phase_portrait(const PolicyNet& policy, const LyapunovNet& lyap,
                                  const SystemModel& model, const ProblemSpec& spec,
                                  const GridSpec& grid, std::size_t n_trajectories,
                                  std::size_t horizon_t,
                                  const std::filesystem::path& field_path,
                                  const std::filesystem::path& traj_path) {
  grid.validate();
  {
    auto out = detail::open_csv(field_path);
    out << "x_i,x_j,dx_i,dx_j\n";
    for (std::size_t i = 0; i < grid.res_i; ++i)
      for (std::size_t j = 0; j < grid.res_j; ++j) {
        DenseMatrix x = grid.point(i, j, model.n_x());
        DenseMatrix next = model.step_eval(x, policy_first_action_eval(policy, x));
        out << x[grid.dim_i] << ',' << x[grid.dim_j] << ','
            << next[grid.dim_i] - x[grid.dim_i] << ',' << next[grid.dim_j] - x[grid.dim_j]
            << '\n';
      }
  }
  auto out = detail::open_csv(traj_path);
  out << "traj_id,k,x_i,x_j\n";
  for (std::size_t traj = 0; traj < n_trajectories; ++traj) {
    // walk the rectangle perimeter at parameter s in [0, 4)
    const double s = 4.0 * static_cast<double>(traj) / static_cast<double>(n_trajectories);
    DenseMatrix x0 = grid.point(0, 0, model.n_x());
    const double wi = grid.hi_i - grid.lo_i, wj = grid.hi_j - grid.lo_j;
    if (s < 1.0) {
      x0[grid.dim_i] = grid.lo_i + s * wi;
      x0[grid.dim_j] = grid.lo_j;
    } else if (s < 2.0) {
      x0[grid.dim_i] = grid.hi_i;
      x0[grid.dim_j] = grid.lo_j + (s - 1.0) * wj;
    } else if (s < 3.0) {
      x0[grid.dim_i] = grid.hi_i - (s - 2.0) * wi;
      x0[grid.dim_j] = grid.hi_j;
    } else {
      x0[grid.dim_i] = grid.lo_i;
      x0[grid.dim_j] = grid.hi_j - (s - 3.0) * wj;
    }
    SimTrajectory sim = simulate_closed_loop(policy, lyap, model, spec, x0, horizon_t);
    for (std::size_t k = 0; k <= sim.steps; ++k)
      out << traj << ',' << k << ',' << sim.states(k, grid.dim_i) << ','
          << sim.states(k, grid.dim_j) << '\n';
  }
}

/// CSV rows x_i,x_j,V over the slice, row-major with i outermost.
inline void export_lyapunov_surface(const LyapunovNet& lyap, const GridSpec& grid,
                                    std::size_t n_x, const std::filesystem::path& path) {
  grid.validate();
  LyapunovEvaluator v_eval(lyap);
  auto out = detail::open_csv(path);
  out << "x_i,x_j,V\n";
  for (std::size_t i = 0; i < grid.res_i; ++i)
    for (std::size_t j = 0; j < grid.res_j; ++j) {
      DenseMatrix x = grid.point(i, j, n_x);
      out << x[grid.dim_i] << ',' << x[grid.dim_j] << ',' << v_eval(x) << '\n';
    }
}

/// Two CSVs of x_i,x_j,dV with identical row ordering: the learned V and the
/// quadratic baseline V(x) = x^T x.
inline void export_vdiff_maps(const LyapunovNet& lyap, const PolicyNet& policy,
                              const SystemModel& model, const GridSpec& grid,
                              const std::filesystem::path& learned_path,
                              const std::filesystem::path& quadratic_path) {
  grid.validate();
  DenseMatrix learned = lyapunov_difference_field(lyap, policy, model, grid);
  auto out_l = detail::open_csv(learned_path);
  auto out_q = detail::open_csv(quadratic_path);
  out_l << "x_i,x_j,dV\n";
  out_q << "x_i,x_j,dV\n";
  for (std::size_t i = 0; i < grid.res_i; ++i)
    for (std::size_t j = 0; j < grid.res_j; ++j) {
      DenseMatrix x = grid.point(i, j, model.n_x());
      DenseMatrix next = model.step_eval(x, policy_first_action_eval(policy, x));
      double q_now = 0.0, q_next = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) {
        q_now += x[d] * x[d];
        q_next += next[d] * next[d];
      }
      out_l << x[grid.dim_i] << ',' << x[grid.dim_j] << ',' << learned(i, j) << '\n';
      out_q << x[grid.dim_i] << ',' << x[grid.dim_j] << ',' << q_next - q_now << '\n';
    }
}

/// CSV header k,x1..xn,u1..um,V,stage_loss; the final row carries the
/// terminal state with empty control and stage-loss fields.
inline void export_trajectory(const SimTrajectory& sim, const std::filesystem::path& path) {
  auto out = detail::open_csv(path);
  const std::size_t n_x = sim.states.cols();
  const std::size_t n_u = sim.controls.cols();
  out << "k";
  for (std::size_t j = 0; j < n_x; ++j) out << ",x" << j + 1;
  for (std::size_t j = 0; j < n_u; ++j) out << ",u" << j + 1;
  out << ",V,stage_loss\n";
  for (std::size_t k = 0; k <= sim.steps; ++k) {
    out << k;
    for (std::size_t j = 0; j < n_x; ++j) out << ',' << sim.states(k, j);
    if (k < sim.steps) {
      for (std::size_t j = 0; j < n_u; ++j) out << ',' << sim.controls(k, j);
      out << ',' << sim.v_values[k] << ',' << sim.stage_losses[k] << '\n';
    } else {
      for (std::size_t j = 0; j < n_u; ++j) out << ',';
      out << ',' << sim.v_values[k] << ",\n";
    }
  }
}

}  // namespace nldpc
