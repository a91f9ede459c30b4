#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "nldpc/verifier.hpp"

using namespace nldpc;

namespace {

/// Synthetic trajectory from explicit state rows / control rows / V values.
SimTrajectory make_traj(const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<double>>& controls,
                        const std::vector<double>& v_values) {
  SimTrajectory sim;
  sim.steps = states.size() - 1;
  sim.states = DenseMatrix(states.size(), states[0].size());
  for (std::size_t k = 0; k < states.size(); ++k)
    for (std::size_t j = 0; j < states[k].size(); ++j) sim.states(k, j) = states[k][j];
  const std::size_t n_u = controls.empty() ? 1 : controls[0].size();
  sim.controls = DenseMatrix(sim.steps, n_u);
  for (std::size_t k = 0; k < controls.size(); ++k)
    for (std::size_t j = 0; j < controls[k].size(); ++j) sim.controls(k, j) = controls[k][j];
  sim.v_values = v_values;
  return sim;
}

IndicatorCriteria di_criteria() {
  IndicatorCriteria c;
  c.state_box = Box::symmetric(2, 10.0);
  c.input_box = Box::symmetric(1, 1.0);
  return c;
}

}  // namespace

TEST_CASE("classify_trajectory") {
  IndicatorCriteria c = di_criteria();

  SECTION("clean decreasing trajectory passes") {
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}, {0.4, 0.2}},
                                  {{0.5}, {-0.3}}, {3.0, 2.0, 1.0});
    CHECK(classify_trajectory(sim, c) == FailureKind::kNone);
    CHECK(evaluate_indicator(sim, c) == 1);
  }
  SECTION("divergence flag wins") {
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{0.5}}, {3.0, 2.0});
    sim.diverged = true;
    CHECK(classify_trajectory(sim, c) == FailureKind::kDiverged);
    CHECK(evaluate_indicator(sim, c) == 0);
  }
  SECTION("state box violation") {
    SimTrajectory sim = make_traj({{2.0, 1.0}, {10.5, 0.5}}, {{0.5}}, {3.0, 2.0});
    CHECK(classify_trajectory(sim, c) == FailureKind::kState);
  }
  SECTION("input box violation") {
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{1.5}}, {3.0, 2.0});
    CHECK(classify_trajectory(sim, c) == FailureKind::kInput);
  }
  SECTION("non-decreasing V away from the equilibrium") {
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{0.5}}, {3.0, 3.0});
    CHECK(classify_trajectory(sim, c) == FailureKind::kLyapunov);
  }
  SECTION("non-decreasing V inside the equilibrium ball is waived") {
    SimTrajectory sim = make_traj({{0.05, -0.05}, {0.04, 0.02}}, {{0.1}}, {1e-3, 2e-3});
    CHECK(classify_trajectory(sim, c) == FailureKind::kNone);
  }
  SECTION("zero tolerance enforces strictness even at the exact equilibrium") {
    IndicatorCriteria strict = c;
    strict.equilibrium_tolerance = 0.0;
    SimTrajectory sim = make_traj({{0.0, 0.0}, {0.0, 0.0}}, {{0.0}}, {0.0, 0.0});
    CHECK(classify_trajectory(sim, strict) == FailureKind::kLyapunov);
    CHECK(evaluate_indicator(sim, strict) == 0);
    // the default tolerance waives the same trajectory
    CHECK(evaluate_indicator(sim, c) == 1);
  }
  SECTION("margin tau tightens the decrease requirement") {
    IndicatorCriteria tight = c;
    tight.margin = 0.1;
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{0.5}}, {3.0, 2.95});
    CHECK(classify_trajectory(sim, c) == FailureKind::kNone);
    CHECK(classify_trajectory(sim, tight) == FailureKind::kLyapunov);
  }
  SECTION("terminal box checked at the final state only") {
    IndicatorCriteria term = c;
    term.terminal_box = Box::symmetric(2, 0.1);
    SimTrajectory sim = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{0.5}}, {3.0, 2.0});
    CHECK(classify_trajectory(sim, term) == FailureKind::kTerminal);
    SimTrajectory ok = make_traj({{2.0, 1.0}, {0.05, 0.05}}, {{0.5}}, {3.0, 2.0});
    CHECK(classify_trajectory(ok, term) == FailureKind::kNone);
  }
  SECTION("state precedes input precedes Lyapunov at the same step") {
    SimTrajectory sim = make_traj({{11.0, 1.0}, {1.0, 0.5}}, {{5.0}}, {3.0, 4.0});
    CHECK(classify_trajectory(sim, c) == FailureKind::kState);
    SimTrajectory sim2 = make_traj({{2.0, 1.0}, {1.0, 0.5}}, {{5.0}}, {3.0, 4.0});
    CHECK(classify_trajectory(sim2, c) == FailureKind::kInput);
  }
}

TEST_CASE("empirical_risk") {
  CHECK(empirical_risk({1, 1, 0, 1}) == 0.75);
  CHECK(empirical_risk({0, 0}) == 0.0);
  CHECK(empirical_risk({1}) == 1.0);
  std::vector<int> big(3000, 1);
  big[10] = big[20] = big[30] = 0;  // 2997 / 3000
  CHECK(empirical_risk(big) == Catch::Approx(0.999).epsilon(1e-15));
  CHECK_THROWS_AS(empirical_risk({}), std::invalid_argument);
}

TEST_CASE("hoeffding_bound arithmetic") {
  SECTION("benchmark numbers: delta = 0.01, m = 3000") {
    HoeffdingBound b = hoeffding_bound(1.0, 0.01, 3000);
    CHECK(b.alpha == Catch::Approx(0.0297162).margin(5e-7));
    CHECK(b.kappa == Catch::Approx(0.9702838).margin(5e-7));
  }
  SECTION("kappa is sigma_tilde minus alpha, even when negative") {
    HoeffdingBound b = hoeffding_bound(0.0, 0.01, 3000);
    CHECK(b.kappa == Catch::Approx(-b.alpha));
    CHECK(b.kappa < 0.0);
  }
  SECTION("alpha shrinks with m and grows as delta shrinks") {
    const double a1 = hoeffding_bound(1.0, 0.01, 1000).alpha;
    const double a2 = hoeffding_bound(1.0, 0.01, 4000).alpha;
    CHECK(a2 < a1);
    CHECK(a2 == Catch::Approx(a1 / 2.0));  // alpha ~ 1/sqrt(m)
    CHECK(hoeffding_bound(1.0, 0.001, 1000).alpha > a1);
  }
  SECTION("m = 1 is vacuous for any reasonable delta") {
    CHECK(hoeffding_bound(1.0, 0.1, 1).kappa < 0.0);
  }
  SECTION("domain errors") {
    CHECK_THROWS_AS(hoeffding_bound(1.0, 0.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(hoeffding_bound(1.0, 1.0, 100), std::invalid_argument);
    CHECK_THROWS_AS(hoeffding_bound(1.0, 0.01, 0), std::invalid_argument);
  }
}

TEST_CASE("required_samples") {
  SECTION("benchmark: sigma = 1, kappa = 0.97, delta = 0.01") {
    CHECK(required_samples(1.0, 0.97, 0.01) == 2944);
  }
  SECTION("result is tight") {
    const std::size_t m = required_samples(1.0, 0.97, 0.01);
    CHECK(hoeffding_bound(1.0, 0.01, m).kappa >= 0.97);
    CHECK(hoeffding_bound(1.0, 0.01, m - 1).kappa < 0.97);
  }
  SECTION("monotone in the gap and in delta") {
    CHECK(required_samples(1.0, 0.99, 0.01) > required_samples(1.0, 0.97, 0.01));
    CHECK(required_samples(1.0, 0.97, 0.001) > required_samples(1.0, 0.97, 0.01));
  }
  SECTION("domain errors") {
    CHECK_THROWS_AS(required_samples(0.9, 0.97, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(required_samples(1.0, 0.97, 0.0), std::invalid_argument);
  }
}

namespace {

/// Small-box LTI copy of the double integrator so a linear gain certifies.
LtiSystem small_box_di() {
  return LtiSystem(DenseMatrix{{1.2, 1.0}, {0.0, 1.0}}, DenseMatrix{{1.0}, {0.5}},
                   Box::symmetric(2, 0.5), Box::symmetric(1, 10.0));
}

PolicyNet gain_policy(const DenseMatrix& k_row) {
  PolicyNet net;
  net.widths = {k_row.cols(), 1};
  net.horizon = 1;
  net.n_u = 1;
  net.weights.push_back(scale(k_row, -1.0));
  net.biases.push_back(DenseMatrix(1, 1));
  return net;
}

LyapunovNet quadratic_lyapunov() {
  LyapunovNet v = make_lyapunov(2, {4}, 1.0, 19);
  for (auto& w : v.g.w) w.fill(0.0);  // V(x) = ||x||^2
  return v;
}

}  // namespace

TEST_CASE("verify certifies a contracting closed loop") {
  // K = [0.9, 1.1]: ||A - BK||_2 < 1, so ||x||^2 strictly decreases everywhere
  LtiSystem sys = small_box_di();
  ProblemSpec spec = make_problem(sys, 1.0, 1.0);
  spec.horizon = 1;
  PolicyNet policy = gain_policy(DenseMatrix{{0.9, 1.1}});
  LyapunovNet v = quadratic_lyapunov();

  IndicatorCriteria c;
  c.state_box = sys.state_box();
  c.input_box = sys.input_box();

  VerificationReport rep = verify(policy, v, sys, spec, c, 200, 0.01, 77, 20);
  CHECK(rep.m == 200);
  CHECK(rep.sigma_tilde == 1.0);
  CHECK(rep.kappa == Catch::Approx(1.0 - rep.alpha));
  CHECK(rep.kappa > 0.0);
  CHECK_FALSE(rep.vacuous);
  CHECK(rep.failures_state + rep.failures_input + rep.failures_lyapunov +
            rep.failures_terminal + rep.failures_diverged ==
        0);
  REQUIRE(rep.per_trajectory.size() == 200);

  SECTION("reproducible per seed") {
    VerificationReport again = verify(policy, v, sys, spec, c, 200, 0.01, 77, 20);
    CHECK(again.sigma_tilde == rep.sigma_tilde);
    CHECK(again.per_trajectory == rep.per_trajectory);
  }
  SECTION("thread count does not change the report") {
    setenv("NLDPC_THREADS", "3", 1);
    VerificationReport par = verify(policy, v, sys, spec, c, 200, 0.01, 77, 20);
    setenv("NLDPC_THREADS", "1", 1);
    VerificationReport ser = verify(policy, v, sys, spec, c, 200, 0.01, 77, 20);
    unsetenv("NLDPC_THREADS");
    CHECK(par.sigma_tilde == ser.sigma_tilde);
    CHECK(par.per_trajectory == ser.per_trajectory);
  }
}

TEST_CASE("verify reports a vacuous certificate under the zero policy") {
  LtiSystem di = double_integrator();
  ProblemSpec spec = make_problem(di, 5.0, 0.5);
  spec.horizon = 1;
  PolicyNet zero = gain_policy(DenseMatrix{{0.0, 0.0}});
  LyapunovNet v = quadratic_lyapunov();

  IndicatorCriteria c;
  c.state_box = di.state_box();
  c.input_box = di.input_box();

  VerificationReport rep = verify(zero, v, di, spec, c, 100, 0.01, 5, 50);
  CHECK(rep.sigma_tilde < 0.5);  // the open loop is unstable
  CHECK(rep.vacuous == !(rep.kappa > 0.0));
  CHECK(rep.kappa == rep.sigma_tilde - rep.alpha);
}

TEST_CASE("thread_budget honors NLDPC_THREADS") {
  setenv("NLDPC_THREADS", "5", 1);
  CHECK(thread_budget() == 5);
  setenv("NLDPC_THREADS", "0", 1);  // invalid: fall back to hardware
  CHECK(thread_budget() >= 1);
  unsetenv("NLDPC_THREADS");
  CHECK(thread_budget() >= 1);
}

TEST_CASE("report_to_json round-trips the headline numbers") {
  VerificationReport rep;
  rep.m = 3000;
  rep.sigma_tilde = 0.999;
  rep.delta = 0.01;
  rep.alpha = 0.0297;
  rep.kappa = 0.9693;
  rep.failures_lyapunov = 3;
  rep.seed = 42;
  rep.horizon = 50;
  nlohmann::json j = report_to_json(rep);
  CHECK(j.at("m").get<std::size_t>() == 3000);
  CHECK(j.at("sigma_tilde").get<double>() == 0.999);
  CHECK(j.at("kappa").get<double>() == 0.9693);
  CHECK(j.at("failures").at("lyapunov").get<std::size_t>() == 3);
  CHECK(j.at("vacuous").get<bool>() == false);
  CHECK(j.at("seed").get<std::uint64_t>() == 42);
}
