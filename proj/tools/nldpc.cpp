// nldpc: train, simulate, verify, and export differentiable predictive
// control policies with neural Lyapunov certificates.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure
// during training, 4 vacuous certificate (kappa <= 0).

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nldpc/nldpc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVacuous = 4;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nldpc::RunConfig load_run_config(const std::string& path) {
  return nldpc::load_config(path);
}

nldpc::Checkpoint load_ckpt(const std::string& path) {
  return nldpc::load_checkpoint(path);
}

std::vector<double> parse_x0(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      throw usage_error("cannot parse x0 component '" + cell + "'");
    }
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size()) throw usage_error("cannot parse x0 component '" + cell + "'");
    out.push_back(v);
  }
  if (out.empty()) throw usage_error("x0 is empty");
  return out;
}

/// Slice dims for 2D plots: (0,1) for planar systems, the translational
/// velocities (3,4) for the six-state PVTOL.
void default_dims(const nldpc::SystemModel& model, std::size_t& di, std::size_t& dj) {
  if (model.n_x() >= 6) {
    di = 3;
    dj = 4;
  } else {
    di = 0;
    dj = 1;
  }
}

nldpc::GridSpec make_grid(const nldpc::SystemModel& model, std::size_t dim_i,
                          std::size_t dim_j, std::size_t res) {
  if (dim_i >= model.n_x() || dim_j >= model.n_x() || dim_i == dim_j)
    throw usage_error("invalid slice dims for an n_x=" + std::to_string(model.n_x()) +
                      " system");
  nldpc::GridSpec g;
  g.dim_i = dim_i;
  g.dim_j = dim_j;
  g.lo_i = model.state_box().lo[dim_i];
  g.hi_i = model.state_box().hi[dim_i];
  g.lo_j = model.state_box().lo[dim_j];
  g.hi_j = model.state_box().hi[dim_j];
  g.res_i = g.res_j = res;
  g.fixed = nldpc::DenseMatrix(model.n_x(), 1);
  return g;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& loss_csv) {
  nldpc::RunConfig cfg = load_run_config(config_path);
  nldpc::PolicyNet policy = cfg.make_policy_net();
  nldpc::LyapunovNet lyap = cfg.make_lyapunov_net();

  std::cerr << "training: " << cfg.training.epochs << " epochs, batch "
            << cfg.training.batch_size << ", " << cfg.training.samples_train
            << " samples, seed " << cfg.seed << "\n";
  nldpc::TrainResult result;
  try {
    result = nldpc::train(*cfg.system, cfg.problem, policy, lyap, cfg.training);
  } catch (const nldpc::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  for (const auto& rec : result.history)
    if (rec.epoch % 25 == 0 || rec.epoch == result.history.size())
      std::cerr << "  epoch " << rec.epoch << ": train " << rec.train_loss << ", val "
                << rec.val_loss << "\n";

  nldpc::Checkpoint ck;
  ck.policy = result.best_policy;
  ck.lyapunov = result.best_lyapunov;
  ck.seed = cfg.seed;
  ck.training_meta = {{"epochs", cfg.training.epochs},
                      {"best_epoch", result.best_epoch},
                      {"best_val_loss", result.best_val_loss},
                      {"final_train_loss", result.history.back().train_loss}};
  nldpc::save_checkpoint(ck, out_path);

  if (!loss_csv.empty()) {
    std::ofstream out(loss_csv);
    if (!out) throw usage_error("cannot write loss CSV " + loss_csv);
    out << std::setprecision(17) << "epoch,train_loss,val_loss\n";
    for (const auto& rec : result.history)
      out << rec.epoch << ',' << rec.train_loss << ',' << rec.val_loss << '\n';
  }
  std::cout << "checkpoint written to " << out_path << " (best epoch "
            << result.best_epoch << ", val loss " << result.best_val_loss << ")\n";
  return kExitOk;
}

int cmd_simulate(const std::string& ckpt_path, const std::string& config_path,
                 const std::string& x0_str, std::size_t steps, const std::string& out_path) {
  nldpc::RunConfig cfg = load_run_config(config_path);
  nldpc::Checkpoint ck = load_ckpt(ckpt_path);
  std::vector<double> x0v = parse_x0(x0_str);
  if (x0v.size() != cfg.system->n_x())
    throw usage_error("x0 has " + std::to_string(x0v.size()) + " components, system needs " +
                      std::to_string(cfg.system->n_x()));
  nldpc::DenseMatrix x0 = nldpc::DenseMatrix::column(x0v);
  nldpc::SimTrajectory sim = nldpc::simulate_closed_loop(ck.policy, ck.lyapunov, *cfg.system,
                                                         cfg.problem, x0, steps);
  nldpc::export_trajectory(sim, out_path);
  std::cout << "simulated " << sim.steps << " steps"
            << (sim.diverged ? " (diverged)" : "") << ", trajectory written to " << out_path
            << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& ckpt_path, const std::string& config_path, std::size_t m,
               double delta, const std::string& out_path) {
  nldpc::RunConfig cfg = load_run_config(config_path);
  nldpc::Checkpoint ck = load_ckpt(ckpt_path);
  if (m == 0) m = cfg.verification.m;
  if (delta == 0.0) delta = cfg.verification.delta;
  if (!(delta > 0.0 && delta < 1.0)) throw usage_error("delta must be in (0, 1)");
  if (cfg.verification.seed == ck.seed)
    std::cerr << "warning: verification seed equals the training seed; samples are not "
                 "independent of training\n";

  nldpc::VerificationReport rep =
      nldpc::verify(ck.policy, ck.lyapunov, *cfg.system, cfg.problem, cfg.make_criteria(), m,
                    delta, cfg.verification.seed, cfg.verification.horizon_t,
                    cfg.training.distribution);
  {
    std::ofstream out(out_path);
    if (!out) throw usage_error("cannot write report " + out_path);
    out << nldpc::report_to_json(rep).dump(2) << "\n";
  }
  std::cout << "m=" << rep.m << " sigma_tilde=" << rep.sigma_tilde << " alpha=" << rep.alpha
            << " kappa=" << rep.kappa << (rep.vacuous ? " (vacuous)" : "") << "\n";
  return rep.vacuous ? kExitVacuous : kExitOk;
}

int cmd_export(const std::string& ckpt_path, const std::string& config_path,
               const std::string& what, std::size_t res, long dim_i_flag, long dim_j_flag,
               const std::string& out_dir) {
  if (what != "phase" && what != "surface" && what != "vdiff" && what != "all")
    throw usage_error("unknown --what '" + what + "' (use phase|surface|vdiff|all)");
  nldpc::RunConfig cfg = load_run_config(config_path);
  nldpc::Checkpoint ck = load_ckpt(ckpt_path);

  std::size_t di, dj;
  default_dims(*cfg.system, di, dj);
  if (dim_i_flag >= 0) di = static_cast<std::size_t>(dim_i_flag);
  if (dim_j_flag >= 0) dj = static_cast<std::size_t>(dim_j_flag);
  nldpc::GridSpec grid = make_grid(*cfg.system, di, dj, res);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  if (what == "phase" || what == "all")
    nldpc::export_phase_portrait(ck.policy, ck.lyapunov, *cfg.system, cfg.problem, grid, 16,
                                 cfg.verification.horizon_t, dir / "field.csv",
                                 dir / "phase.csv");
  if (what == "surface" || what == "all")
    nldpc::export_lyapunov_surface(ck.lyapunov, grid, cfg.system->n_x(),
                                   dir / "surface.csv");
  if (what == "vdiff" || what == "all")
    nldpc::export_vdiff_maps(ck.lyapunov, ck.policy, *cfg.system, grid,
                             dir / "vdiff_learned.csv", dir / "vdiff_quadratic.csv");
  std::cout << "export '" << what << "' written to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable predictive control with neural Lyapunov certificates"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out_path, loss_csv, x0_str, what = "all";
  std::size_t steps = 50, samples = 0, grid_res = 101;
  long dim_i = -1, dim_j = -1;
  double delta = 0.0;

  auto* train = app.add_subcommand("train", "Train policy and Lyapunov networks");
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_option("--out", out_path, "Checkpoint output path")->required();
  train->add_option("--loss-csv", loss_csv, "Loss-history CSV output path");

  auto* simulate = app.add_subcommand("simulate", "Roll out the closed loop from x0");
  simulate->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  simulate->add_option("--config", config_path, "Run configuration file")->required();
  simulate->add_option("--x0", x0_str, "Initial state, comma separated")->required();
  simulate->add_option("--steps", steps, "Number of closed-loop steps");
  simulate->add_option("--out", out_path, "Trajectory CSV output path")->required();

  auto* verify = app.add_subcommand("verify", "Sampling-based stability certificate");
  verify->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  verify->add_option("--config", config_path, "Run configuration file")->required();
  verify->add_option("--samples", samples, "Sample count m (default: config)");
  verify->add_option("--delta", delta, "Confidence parameter (default: config)");
  verify->add_option("--out", out_path, "Report output path")->required();

  auto* exp = app.add_subcommand("export", "Emit figure data as CSV");
  exp->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  exp->add_option("--config", config_path, "Run configuration file")->required();
  exp->add_option("--what", what, "phase|surface|vdiff|all");
  exp->add_option("--grid", grid_res, "Grid resolution per dimension");
  exp->add_option("--dim-i", dim_i, "Slice dimension i (default per system)");
  exp->add_option("--dim-j", dim_j, "Slice dimension j (default per system)");
  exp->add_option("--out", out_path, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, out_path, loss_csv);
    if (*simulate) return cmd_simulate(ckpt_path, config_path, x0_str, steps, out_path);
    if (*verify) return cmd_verify(ckpt_path, config_path, samples, delta, out_path);
    if (*exp) return cmd_export(ckpt_path, config_path, what, grid_res, dim_i, dim_j, out_path);
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nldpc::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nldpc::checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nldpc::export_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nldpc::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
