#pragma once

#include <fstream>
#include <memory>

#include <json.hpp>

#include "nldpc/checkpoint.hpp"
#include "nldpc/verifier.hpp"

namespace nldpc {

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct VerifyConfig {
  std::size_t m = 3000;
  double delta = 0.01;
  double tau = 0.0;
  std::size_t horizon_t = 50;
  bool terminal_check = false;
  double equilibrium_tolerance = 0.1;
  std::uint64_t seed = 0;  // 0: derive from the run seed
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::unique_ptr<SystemModel> system;
  std::vector<std::size_t> policy_hidden{20, 20, 20, 20};
  Activation policy_activation = Activation::kRelu;
  std::vector<std::size_t> lyapunov_hidden{40, 40, 40, 40, 40, 40, 40, 40};
  double epsilon = 0.01;
  double beta = kSoftplusBeta;
  ProblemSpec problem;
  TrainConfig training;
  VerifyConfig verification;

  PolicyNet make_policy_net() const {
    return make_policy(system->n_x(), policy_hidden, problem.horizon, system->n_u(),
                       policy_activation, seed);
  }
  LyapunovNet make_lyapunov_net() const {
    return make_lyapunov(system->n_x(), lyapunov_hidden, epsilon, seed + 1, beta);
  }
  IndicatorCriteria make_criteria() const {
    IndicatorCriteria c;
    c.state_box = system->state_box();
    c.input_box = system->input_box();
    c.margin = verification.tau;
    c.equilibrium_tolerance = verification.equilibrium_tolerance;
    if (verification.terminal_check) c.terminal_box = problem.terminal_box;
    return c;
  }
};

namespace detail {

inline DenseMatrix matrix_from_rows(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw config_error("config: " + name + " must be a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw config_error("config: ragged rows in " + name);
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline Box box_from_json(const nlohmann::json& j, const std::string& name) {
  Box b;
  b.lo = DenseMatrix::column(j.at("lo").get<std::vector<double>>());
  b.hi = DenseMatrix::column(j.at("hi").get<std::vector<double>>());
  if (b.lo.rows() != b.hi.rows()) throw config_error("config: lo/hi mismatch in " + name);
  for (std::size_t i = 0; i < b.lo.size(); ++i)
    if (b.lo[i] > b.hi[i]) throw config_error("config: empty box " + name);
  return b;
}

/// Scalar w means w*I of dimension n; an array of rows is taken verbatim.
inline DenseMatrix weight_from_json(const nlohmann::json& j, std::size_t n,
                                    const std::string& name) {
  if (j.is_number()) return DenseMatrix::scaled_identity(n, j.get<double>());
  DenseMatrix m = matrix_from_rows(j, name);
  if (m.rows() != n || m.cols() != n)
    throw config_error("config: " + name + " is " + m.shape_str() + ", expected " +
                       std::to_string(n) + "x" + std::to_string(n));
  return m;
}

}  // namespace detail

inline std::unique_ptr<SystemModel> system_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "lti") {
    DenseMatrix a = detail::matrix_from_rows(j.at("A"), "system.A");
    DenseMatrix b = detail::matrix_from_rows(j.at("B"), "system.B");
    Box sb = detail::box_from_json(j.at("state_box"), "system.state_box");
    Box ib = detail::box_from_json(j.at("input_box"), "system.input_box");
    return std::make_unique<LtiSystem>(std::move(a), std::move(b), std::move(sb),
                                       std::move(ib));
  }
  if (type == "pvtol") {
    PvtolParams p;
    if (j.contains("mass")) p.mass = j.at("mass").get<double>();
    if (j.contains("inertia")) p.inertia = j.at("inertia").get<double>();
    if (j.contains("arm")) p.arm = j.at("arm").get<double>();
    if (j.contains("gravity")) p.gravity = j.at("gravity").get<double>();
    if (j.contains("damping")) p.damping = j.at("damping").get<double>();
    if (j.contains("dt")) p.dt = j.at("dt").get<double>();
    try {
      return std::make_unique<PvtolModel>(p);
    } catch (const std::invalid_argument& e) {
      throw config_error(std::string("config: ") + e.what());
    }
  }
  throw config_error("config: unknown system type '" + type + "'");
}

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.system = system_from_json(j.at("system"));
    const std::size_t n_x = cfg.system->n_x();
    const std::size_t n_u = cfg.system->n_u();

    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      if (p.contains("hidden")) cfg.policy_hidden = p.at("hidden").get<std::vector<std::size_t>>();
      if (p.contains("activation"))
        cfg.policy_activation = activation_from_name(p.at("activation").get<std::string>());
    }
    if (j.contains("lyapunov")) {
      const auto& l = j.at("lyapunov");
      if (l.contains("hidden"))
        cfg.lyapunov_hidden = l.at("hidden").get<std::vector<std::size_t>>();
      if (l.contains("epsilon")) cfg.epsilon = l.at("epsilon").get<double>();
      if (l.contains("beta")) cfg.beta = l.at("beta").get<double>();
    }
    if (!(cfg.epsilon > 0.0)) throw config_error("config: lyapunov.epsilon must be > 0");

    const auto& pr = j.at("problem");
    cfg.problem.horizon = pr.at("N").get<std::size_t>();
    if (cfg.problem.horizon < 1) throw config_error("config: problem.N must be >= 1");
    cfg.problem.q_x = detail::weight_from_json(pr.at("Qx"), n_x, "problem.Qx");
    cfg.problem.q_u = detail::weight_from_json(pr.at("Qu"), n_u, "problem.Qu");
    cfg.problem.q_v = pr.value("QV", 0.0);
    cfg.problem.q_h = pr.value("Qh", 0.0);
    cfg.problem.q_g = pr.value("Qg", 0.0);
    cfg.problem.q_xf = pr.value("QXf", 0.0);
    cfg.problem.margin = pr.value("margin", 0.0);
    if (cfg.problem.q_v < 0.0 || cfg.problem.q_h < 0.0 || cfg.problem.q_g < 0.0 ||
        cfg.problem.q_xf < 0.0)
      throw config_error("config: penalty weights must be >= 0");
    cfg.problem.state_box = cfg.system->state_box();
    cfg.problem.input_box = cfg.system->input_box();
    if (pr.contains("terminal_box"))
      cfg.problem.terminal_box =
          detail::box_from_json(pr.at("terminal_box"), "problem.terminal_box");
    if (cfg.problem.terminal_box && cfg.problem.terminal_box->dim() != n_x)
      throw config_error("config: terminal_box dimension != n_x");

    if (j.contains("training")) {
      const auto& tr = j.at("training");
      cfg.training.epochs = tr.value("epochs", cfg.training.epochs);
      cfg.training.batch_size = tr.value("batch_size", cfg.training.batch_size);
      cfg.training.samples_train = tr.value("samples_train", cfg.training.samples_train);
      cfg.training.samples_val = tr.value("samples_val", cfg.training.samples_val);
      cfg.training.samples_test = tr.value("samples_test", cfg.training.samples_test);
      if (tr.contains("distribution"))
        cfg.training.distribution =
            sample_dist_from_name(tr.at("distribution").get<std::string>());
      cfg.training.learning_rate = tr.value("lr", cfg.training.learning_rate);
      cfg.training.beta1 = tr.value("beta1", cfg.training.beta1);
      cfg.training.beta2 = tr.value("beta2", cfg.training.beta2);
      cfg.training.adam_eps = tr.value("eps", cfg.training.adam_eps);
      cfg.training.weight_decay = tr.value("weight_decay", cfg.training.weight_decay);
      if (tr.contains("lr_schedule"))
        cfg.training.lr_schedule =
            lr_schedule_from_name(tr.at("lr_schedule").get<std::string>());
      cfg.training.lr_min = tr.value("lr_min", cfg.training.lr_min);
    }
    cfg.training.seed = cfg.seed;
    cfg.training.validate();

    if (j.contains("verification")) {
      const auto& v = j.at("verification");
      cfg.verification.m = v.value("m", cfg.verification.m);
      cfg.verification.delta = v.value("delta", cfg.verification.delta);
      cfg.verification.tau = v.value("tau", cfg.verification.tau);
      cfg.verification.horizon_t = v.value("T", cfg.verification.horizon_t);
      cfg.verification.terminal_check = v.value("terminal_check", cfg.verification.terminal_check);
      cfg.verification.equilibrium_tolerance =
          v.value("equilibrium_tolerance", cfg.verification.equilibrium_tolerance);
      cfg.verification.seed = v.value("seed", cfg.verification.seed);
    }
    if (cfg.verification.seed == 0) cfg.verification.seed = cfg.seed + 7919;
    if (!(cfg.verification.delta > 0.0 && cfg.verification.delta < 1.0))
      throw config_error("config: verification.delta must be in (0, 1)");
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config: malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace nldpc
