#pragma once

#include <thread>

#include <json.hpp>

#include "nldpc/trainer.hpp"

namespace nldpc {

/// What a rollout must satisfy for its indicator to be 1.
struct IndicatorCriteria {
  Box state_box;
  Box input_box;
  double margin = 0.0;  // require V(x_{k+1}) - V(x_k) < -margin
  std::optional<Box> terminal_box;
  /// Strict decrease is waived where ||x_k||_inf is inside this ball; the
  /// decrease condition only applies away from the equilibrium.
  double equilibrium_tolerance = 0.1;
};

enum class FailureKind { kNone, kDiverged, kState, kInput, kLyapunov, kTerminal };

inline const char* failure_name(FailureKind f) {
  switch (f) {
    case FailureKind::kNone: return "none";
    case FailureKind::kDiverged: return "diverged";
    case FailureKind::kState: return "state";
    case FailureKind::kInput: return "input";
    case FailureKind::kLyapunov: return "lyapunov";
    case FailureKind::kTerminal: return "terminal";
  }
  return "?";
}

/// First criterion a trajectory violates, or kNone if the indicator is 1.
inline FailureKind classify_trajectory(const SimTrajectory& sim,
                                       const IndicatorCriteria& c) {
  if (sim.diverged) return FailureKind::kDiverged;
  const std::size_t t = sim.steps;
  for (std::size_t k = 0; k <= t; ++k) {
    if (box_violation_eval(sim.state_at(k), c.state_box) > 0.0) return FailureKind::kState;
    if (k == t) break;
    DenseMatrix u(sim.controls.cols(), 1);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = sim.controls(k, j);
    if (box_violation_eval(u, c.input_box) > 0.0) return FailureKind::kInput;
    if (inf_norm(sim.state_at(k)) >= c.equilibrium_tolerance &&
        !(sim.v_values[k + 1] - sim.v_values[k] < -c.margin))
      return FailureKind::kLyapunov;
  }
  if (c.terminal_box && !c.terminal_box->contains(sim.state_at(t)))
    return FailureKind::kTerminal;
  return FailureKind::kNone;
}

inline int evaluate_indicator(const SimTrajectory& sim, const IndicatorCriteria& c) {
  return classify_trajectory(sim, c) == FailureKind::kNone ? 1 : 0;
}

inline double empirical_risk(const std::vector<int>& indicators) {
  if (indicators.empty()) throw std::invalid_argument("empirical_risk: empty set");
  double s = 0.0;
  for (int i : indicators) s += i;
  return s / static_cast<double>(indicators.size());
}

struct HoeffdingBound {
  double alpha = 0.0;
  double kappa = 0.0;
};

/// alpha = sqrt(-ln(delta/2) / (2m)); kappa = sigma_tilde - alpha, reported
/// as-is even when negative (vacuous certificate).
inline HoeffdingBound hoeffding_bound(double sigma_tilde, double delta, std::size_t m) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("hoeffding_bound: delta must be in (0, 1)");
  if (m < 1) throw std::invalid_argument("hoeffding_bound: m must be >= 1");
  HoeffdingBound b;
  b.alpha = std::sqrt(-std::log(delta / 2.0) / (2.0 * static_cast<double>(m)));
  b.kappa = sigma_tilde - b.alpha;
  return b;
}

/// Smallest m with sigma_target - sqrt(-ln(delta/2)/(2m)) >= kappa.
inline std::size_t required_samples(double sigma_target, double kappa, double delta) {
  if (!(sigma_target > kappa))
    throw std::invalid_argument("required_samples: need sigma_target > kappa");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("required_samples: delta must be in (0, 1)");
  const double gap = sigma_target - kappa;
  double m = std::ceil(-std::log(delta / 2.0) / (2.0 * gap * gap));
  auto ok = [&](std::size_t n) {
    return n >= 1 && hoeffding_bound(sigma_target, delta, n).kappa >= kappa;
  };
  std::size_t n = static_cast<std::size_t>(m);
  while (!ok(n)) ++n;            // guard against roundoff in the closed form
  while (n > 1 && ok(n - 1)) --n;
  return n;
}

struct VerificationReport {
  std::size_t m = 0;
  double sigma_tilde = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  double kappa = 0.0;
  bool vacuous = false;
  std::size_t failures_state = 0;
  std::size_t failures_input = 0;
  std::size_t failures_lyapunov = 0;
  std::size_t failures_terminal = 0;
  std::size_t failures_diverged = 0;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  std::vector<FailureKind> per_trajectory;
};

inline std::size_t thread_budget() {
  if (const char* env = std::getenv("NLDPC_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

/// Samples m fresh initial conditions, simulates the closed loop for T steps
/// each, and aggregates the Hoeffding certificate. Trajectories run in
/// parallel (capped by NLDPC_THREADS); aggregation is index-ordered, so the
/// report is reproducible per seed.
inline VerificationReport verify(const PolicyNet& policy, const LyapunovNet& lyap,
                                 const SystemModel& model, const ProblemSpec& spec,
                                 const IndicatorCriteria& criteria, std::size_t m,
                                 double delta, std::uint64_t seed, std::size_t horizon_t,
                                 SampleDist dist = SampleDist::kTruncatedNormal) {
  DenseMatrix x0s = sample_initial_conditions(dist, m, model.state_box(), seed);
  std::vector<FailureKind> kinds(m, FailureKind::kNone);

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      DenseMatrix x0(model.n_x(), 1);
      for (std::size_t j = 0; j < x0.size(); ++j) x0[j] = x0s(i, j);
      SimTrajectory sim = simulate_closed_loop(policy, lyap, model, spec, x0, horizon_t);
      kinds[i] = classify_trajectory(sim, criteria);
    }
  };

  const std::size_t workers = std::min(thread_budget(), m);
  if (workers <= 1) {
    run_range(0, m);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (m + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(run_range, w * chunk, std::min(m, (w + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  VerificationReport rep;
  rep.m = m;
  rep.delta = delta;
  rep.seed = seed;
  rep.horizon = horizon_t;
  rep.per_trajectory = kinds;
  std::size_t passed = 0;
  for (FailureKind k : kinds) {
    switch (k) {
      case FailureKind::kNone: ++passed; break;
      case FailureKind::kDiverged: ++rep.failures_diverged; break;
      case FailureKind::kState: ++rep.failures_state; break;
      case FailureKind::kInput: ++rep.failures_input; break;
      case FailureKind::kLyapunov: ++rep.failures_lyapunov; break;
      case FailureKind::kTerminal: ++rep.failures_terminal; break;
    }
  }
  rep.sigma_tilde = static_cast<double>(passed) / static_cast<double>(m);
  const HoeffdingBound b = hoeffding_bound(rep.sigma_tilde, delta, m);
  rep.alpha = b.alpha;
  rep.kappa = b.kappa;
  rep.vacuous = !(rep.kappa > 0.0);
  return rep;
}

inline nlohmann::json report_to_json(const VerificationReport& r) {
  return {{"m", r.m},
          {"sigma_tilde", r.sigma_tilde},
          {"delta", r.delta},
          {"alpha", r.alpha},
          {"kappa", r.kappa},
          {"vacuous", r.vacuous},
          {"failures",
           {{"state", r.failures_state},
            {"input", r.failures_input},
            {"lyapunov", r.failures_lyapunov},
            {"terminal", r.failures_terminal},
            {"diverged", r.failures_diverged}}},
          {"seed", r.seed},
          {"horizon", r.horizon}};
}

}  // namespace nldpc
