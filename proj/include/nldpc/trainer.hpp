#pragma once

#include <algorithm>
#include <limits>
#include <numeric>

#include "nldpc/rollout.hpp"

namespace nldpc {

enum class SampleDist { kTruncatedNormal, kUniform };

inline std::string sample_dist_name(SampleDist d) {
  return d == SampleDist::kTruncatedNormal ? "truncated_normal" : "uniform";
}
inline SampleDist sample_dist_from_name(const std::string& s) {
  if (s == "truncated_normal") return SampleDist::kTruncatedNormal;
  if (s == "uniform") return SampleDist::kUniform;
  throw std::invalid_argument("unknown sampling distribution: " + s);
}

enum class LrSchedule { kConstant, kCosine };

inline std::string lr_schedule_name(LrSchedule s) {
  return s == LrSchedule::kConstant ? "constant" : "cosine";
}
inline LrSchedule lr_schedule_from_name(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "cosine") return LrSchedule::kCosine;
  throw std::invalid_argument("unknown lr schedule: " + s);
}

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 333;
  std::size_t samples_train = 3333;
  std::size_t samples_val = 333;
  std::size_t samples_test = 1000;
  SampleDist distribution = SampleDist::kTruncatedNormal;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  double lr_min = 0.0;  // cosine schedule floor
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size == 0 || batch_size > samples_train)
      throw std::invalid_argument("train: need 0 < batch_size <= samples_train");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (lr_min < 0.0 || lr_min > learning_rate)
      throw std::invalid_argument("train: need 0 <= lr_min <= learning rate");
  }
};

/// Learning rate for optimizer step `step` of `total_steps` (both 0-based /
/// count): constant, or half-cosine decay from learning_rate to lr_min.
inline double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::kConstant || total_steps <= 1) return cfg.learning_rate;
  const double frac = static_cast<double>(std::min(step, total_steps - 1)) /
                      static_cast<double>(total_steps - 1);
  return cfg.lr_min +
         0.5 * (cfg.learning_rate - cfg.lr_min) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

/// i.i.d. rows inside the box. Truncated normal is centered at the box center
/// with sigma = half-width / 2, resampled per coordinate until inside.
inline DenseMatrix sample_initial_conditions(SampleDist dist, std::size_t m, const Box& box,
                                             std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample: m must be >= 1");
  for (std::size_t j = 0; j < box.dim(); ++j)
    if (box.lo[j] > box.hi[j]) throw std::invalid_argument("sample: empty box");
  std::mt19937_64 rng(seed);
  DenseMatrix out(m, box.dim());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < box.dim(); ++j) {
      const double lo = box.lo[j], hi = box.hi[j];
      if (dist == SampleDist::kUniform) {
        out(i, j) = std::uniform_real_distribution<double>(lo, hi)(rng);
      } else {
        const double center = 0.5 * (lo + hi);
        const double sigma = 0.25 * (hi - lo);
        std::normal_distribution<double> nd(center, sigma);
        double v = nd(rng);
        while (v < lo || v > hi) v = nd(rng);
        out(i, j) = v;
      }
    }
  return out;
}

struct AdamWState {
  std::vector<DenseMatrix> m;
  std::vector<DenseMatrix> v;
  std::size_t t = 0;

  static AdamWState for_params(const std::vector<DenseMatrix*>& params) {
    AdamWState s;
    for (const auto* p : params) {
      s.m.emplace_back(p->rows(), p->cols());
      s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

/// Decoupled-weight-decay Adam update, applied in place.
inline void adamw_step(AdamWState& state, const std::vector<DenseMatrix*>& params,
                       const std::vector<DenseMatrix>& grads, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw shape_error("adamw_step: parameter/gradient count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    DenseMatrix& theta = *params[p];
    const DenseMatrix& g = grads[p];
    if (!theta.same_shape(g))
      throw shape_error("adamw_step: gradient " + g.shape_str() + " for parameter " +
                        theta.shape_str());
    DenseMatrix& m = state.m[p];
    DenseMatrix& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= cfg.learning_rate *
                  (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * theta[i]);
    }
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  PolicyNet best_policy;       // best-validation snapshot
  LyapunovNet best_lyapunov;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
};

/// Algorithm: per batch, rebuild the NLDPC graph, one reverse sweep, one
/// simultaneous AdamW update of theta and phi. Deterministic per seed.
/// Throws numeric_error (with epoch/batch) if the loss goes non-finite.
inline TrainResult train(const SystemModel& model, const ProblemSpec& spec, PolicyNet& policy,
                         LyapunovNet& lyap, const TrainConfig& cfg) {
  cfg.validate();
  DenseMatrix train_set = sample_initial_conditions(cfg.distribution, cfg.samples_train,
                                                    model.state_box(), cfg.seed);
  DenseMatrix val_set = sample_initial_conditions(cfg.distribution, std::max<std::size_t>(1, cfg.samples_val),
                                                  model.state_box(), cfg.seed + 1);

  std::vector<DenseMatrix*> params = policy.params();
  for (auto* p : lyap.params()) params.push_back(p);
  AdamWState opt = AdamWState::for_params(params);
  std::mt19937_64 shuffle_rng(cfg.seed + 2);

  std::vector<std::size_t> order(cfg.samples_train);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batches_per_epoch = cfg.samples_train / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches_per_epoch;
  TrainConfig step_cfg = cfg;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start + cfg.batch_size <= cfg.samples_train;
         start += cfg.batch_size) {
      DenseMatrix batch(cfg.batch_size, model.n_x());
      for (std::size_t i = 0; i < cfg.batch_size; ++i)
        for (std::size_t j = 0; j < model.n_x(); ++j)
          batch(i, j) = train_set(order[start + i], j);

      double loss;
      std::vector<DenseMatrix> grads;
      try {
        TrainRollout r = build_train_graph(policy, lyap, model, spec, batch, true);
        loss = r.loss();
        auto grad_map = r.tape.backward(r.loss_id);
        grads.reserve(params.size());
        for (int id : r.tape.params()) grads.push_back(grad_map.at(id));
      } catch (const numeric_error& e) {
        throw numeric_error("train: numeric failure at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(batches + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss))
        throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(batches + 1));
      step_cfg.learning_rate = scheduled_lr(cfg, opt.t, total_steps);
      adamw_step(opt, params, grads, step_cfg);
      epoch_loss += loss;
      batches += 1;
    }

    TrainRollout val = build_train_graph(policy, lyap, model, spec, val_set, false);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    rec.val_loss = val.loss();
    result.history.push_back(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = rec.epoch;
      result.best_policy = policy;
      result.best_lyapunov = lyap;
    }
  }
  return result;
}

}  // namespace nldpc
