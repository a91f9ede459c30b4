#include <catch2/catch_amalgamated.hpp>

#include "nldpc/nets.hpp"

using namespace nldpc;

namespace {

DenseMatrix random_vec(std::size_t n, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  DenseMatrix v(n, 1);
  for (std::size_t i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("policy dimensions match the two benchmark configs") {
  PolicyNet di = make_policy(2, {20, 20, 20, 20}, 1, 1, Activation::kRelu, 1);
  CHECK(di.n_x() == 2);
  CHECK(policy_eval(di, DenseMatrix(2, 1)).size() == 1);

  PolicyNet pv = make_policy(6, {20, 20, 20, 20}, 10, 2, Activation::kRelu, 1);
  CHECK(pv.n_x() == 6);
  CHECK(policy_eval(pv, DenseMatrix(6, 1)).size() == 20);
}

TEST_CASE("zero-weight policy maps everything to zero") {
  PolicyNet net = make_policy(2, {4}, 2, 1, Activation::kRelu, 1);
  for (auto& w : net.weights) w.fill(0.0);
  DenseMatrix u = policy_eval(net, DenseMatrix{{3.0}, {-1.0}});
  CHECK(u == DenseMatrix(2, 1));
  CHECK(policy_first_action_eval(net, DenseMatrix{{3.0}, {-1.0}})[0] == 0.0);
}

TEST_CASE("policy_first_action slices row 0") {
  PolicyNet net = make_policy(6, {20}, 10, 2, Activation::kRelu, 3);
  DenseMatrix x(6, 1);
  x[0] = 1.0;
  DenseMatrix full = policy_eval(net, x);
  DenseMatrix first = policy_first_action_eval(net, x);
  REQUIRE(first.size() == 2);
  CHECK(first[0] == full[0]);
  CHECK(first[1] == full[1]);

  PolicyNet n1 = make_policy(2, {8}, 1, 1, Activation::kRelu, 3);
  DenseMatrix x2{{0.5}, {0.5}};
  CHECK(policy_first_action_eval(n1, x2) == policy_eval(n1, x2));

  CHECK_THROWS_AS(policy_eval(net, DenseMatrix(3, 1)), shape_error);
}

TEST_CASE("tape and plain policy forwards agree exactly") {
  std::mt19937_64 rng(5);
  PolicyNet net = make_policy(3, {10, 10}, 4, 2, Activation::kRelu, 21);
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix x = random_vec(3, rng, 5.0);
    Tape t;
    auto h = bind_policy(t, net, false);
    int u = policy_forward(t, h, t.constant(x));
    CHECK(t.value(u) == policy_eval(net, x));
  }
}

TEST_CASE("single-layer ICNN with identity weights is sum of softplus") {
  IcnnNet net;
  net.widths = {2, 1};
  net.beta = kSoftplusBeta;
  net.w.push_back(DenseMatrix{{1.0, 1.0}});  // scalar head summing softplus inputs
  net.b.push_back(DenseMatrix(1, 1));
  DenseMatrix x{{0.3}, {-0.8}};
  // one layer: g(x) = softplus(w x + b) with w = [1 1]
  CHECK(icnn_eval(net, x) ==
        Catch::Approx(softplus_scalar(0.3 - 0.8, kSoftplusBeta)).epsilon(1e-14));
}

TEST_CASE("ICNN convexity: Jensen inequality over random draws") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (int draw = 0; draw < 5; ++draw) {
    IcnnNet net = make_icnn(2, {8, 8, 8}, 100 + draw);
    for (int trial = 0; trial < 2000; ++trial) {
      DenseMatrix x1 = random_vec(2, rng, 10.0);
      DenseMatrix x2 = random_vec(2, rng, 10.0);
      const double l = lam(rng);
      DenseMatrix mid = add(scale(x1, l), scale(x2, 1.0 - l));
      const double lhs = icnn_eval(net, mid);
      const double rhs = l * icnn_eval(net, x1) + (1.0 - l) * icnn_eval(net, x2);
      REQUIRE(lhs <= rhs + 1e-9);
    }
  }
}

TEST_CASE("ICNN is finite on the admissible range") {
  IcnnNet net = make_icnn(2, {40, 40, 40, 40, 40, 40, 40, 40}, 7);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    DenseMatrix x = random_vec(2, rng, 1e3);
    CHECK(std::isfinite(icnn_eval(net, x)));
  }
}

TEST_CASE("Lyapunov value at the origin is exactly zero") {
  LyapunovNet net = make_lyapunov(2, {40, 40, 40, 40, 40, 40, 40, 40}, 0.01, 31);
  CHECK(std::abs(lyapunov_eval(net, DenseMatrix(2, 1))) <= 1e-12);
  Tape t;
  auto h = bind_lyapunov(t, net, false);
  CHECK(std::abs(t.scalar_value(lyapunov_forward(t, h, t.constant(DenseMatrix(2, 1))))) <=
        1e-12);
}

TEST_CASE("Lyapunov lower bound eps * ||x||^2") {
  std::mt19937_64 rng(37);
  for (int draw = 0; draw < 3; ++draw) {
    LyapunovNet net = make_lyapunov(2, {16, 16, 16}, 0.01, 40 + draw);
    for (int trial = 0; trial < 3000; ++trial) {
      DenseMatrix x = random_vec(2, rng, 10.0);
      const double sq = x[0] * x[0] + x[1] * x[1];
      REQUIRE(lyapunov_eval(net, x) - net.epsilon * sq >= -1e-9);
    }
  }
}

TEST_CASE("degenerate g: V reduces to eps * ||x||^2") {
  LyapunovNet net = make_lyapunov(2, {4}, 0.01, 43);
  for (auto& w : net.g.w) w.fill(0.0);  // g constant in x
  DenseMatrix x{{2.0}, {-3.0}};
  CHECK(lyapunov_eval(net, x) == Catch::Approx(0.01 * 13.0).epsilon(1e-12));
}

TEST_CASE("Lyapunov gradient matches finite differences") {
  LyapunovNet net = make_lyapunov(2, {8, 8}, 0.01, 47);
  auto build = [&](Tape& t, const std::vector<int>& ids) {
    auto h = bind_lyapunov(t, net, false);
    return lyapunov_forward(t, h, ids[0]);
  };
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial)
    CHECK(grad_check(build, {random_vec(2, rng, 5.0)}, 1e-5) <= 1e-4);
}

TEST_CASE("LyapunovEvaluator matches lyapunov_eval exactly") {
  LyapunovNet net = make_lyapunov(3, {12, 12, 12}, 0.01, 59);
  LyapunovEvaluator fast(net);
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    DenseMatrix x = random_vec(3, rng, 5.0);
    CHECK(fast(x) == lyapunov_eval(net, x));
  }
}

TEST_CASE("relu policy is piecewise affine within an activation region") {
  PolicyNet net = make_policy(2, {10, 10}, 1, 1, Activation::kRelu, 67);
  // colinear triple well inside one region: scale a fixed direction slightly
  DenseMatrix x1{{1.0}, {0.5}};
  DenseMatrix x2{{1.001}, {0.5005}};
  const double a = 0.37;
  DenseMatrix mid = add(scale(x1, a), scale(x2, 1.0 - a));
  const double f_mid = policy_eval(net, mid)[0];
  const double f_lin = a * policy_eval(net, x1)[0] + (1.0 - a) * policy_eval(net, x2)[0];
  CHECK(f_mid == Catch::Approx(f_lin).margin(1e-10));
}

TEST_CASE("initialization is reproducible and bounded") {
  PolicyNet a = make_policy(2, {20, 20}, 1, 1, Activation::kRelu, 123);
  PolicyNet b = make_policy(2, {20, 20}, 1, 1, Activation::kRelu, 123);
  PolicyNet c = make_policy(2, {20, 20}, 1, 1, Activation::kRelu, 124);
  CHECK(a.weights[0] == b.weights[0]);
  CHECK(a.weights[1] == b.weights[1]);
  CHECK_FALSE(a.weights[0] == c.weights[0]);

  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(a.weights[l].cols()));
    CHECK(a.weights[l].max_abs() <= bound);
    CHECK(a.biases[l].max_abs() == 0.0);
  }

  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(init_weight(0, 4, rng), std::invalid_argument);
}
