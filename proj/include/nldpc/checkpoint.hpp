#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "nldpc/nets.hpp"

namespace nldpc {

constexpr int kCheckpointVersion = 1;

struct checkpoint_error : std::runtime_error {
  explicit checkpoint_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline nlohmann::json matrix_to_json(const DenseMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline DenseMatrix matrix_from_json(const nlohmann::json& j) {
  return DenseMatrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                     j.at("data").get<std::vector<double>>());
}

inline nlohmann::json matrices_to_json(const std::vector<DenseMatrix>& ms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : ms) arr.push_back(matrix_to_json(m));
  return arr;
}

inline std::vector<DenseMatrix> matrices_from_json(const nlohmann::json& j) {
  std::vector<DenseMatrix> out;
  for (const auto& e : j) out.push_back(matrix_from_json(e));
  return out;
}

}  // namespace detail

struct Checkpoint {
  PolicyNet policy;
  LyapunovNet lyapunov;
  std::uint64_t seed = 0;
  nlohmann::json training_meta;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["policy"] = {{"widths", ck.policy.widths},
                 {"activation", activation_name(ck.policy.activation)},
                 {"N", ck.policy.horizon},
                 {"n_u", ck.policy.n_u},
                 {"weights", detail::matrices_to_json(ck.policy.weights)},
                 {"biases", detail::matrices_to_json(ck.policy.biases)}};
  j["lyapunov"] = {{"widths", ck.lyapunov.g.widths},
                   {"epsilon", ck.lyapunov.epsilon},
                   {"beta", ck.lyapunov.g.beta},
                   {"W", detail::matrices_to_json(ck.lyapunov.g.w)},
                   {"b", detail::matrices_to_json(ck.lyapunov.g.b)},
                   {"U_raw", detail::matrices_to_json(ck.lyapunov.g.u_raw)}};
  j["seed"] = ck.seed;
  j["training_meta"] = ck.training_meta;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion)
    throw checkpoint_error("checkpoint: format_version " + std::to_string(version) +
                           " is incompatible with reader version " +
                           std::to_string(kCheckpointVersion));
  Checkpoint ck;
  const auto& p = j.at("policy");
  ck.policy.widths = p.at("widths").get<std::vector<std::size_t>>();
  ck.policy.activation = activation_from_name(p.at("activation").get<std::string>());
  ck.policy.horizon = p.at("N").get<std::size_t>();
  ck.policy.n_u = p.at("n_u").get<std::size_t>();
  ck.policy.weights = detail::matrices_from_json(p.at("weights"));
  ck.policy.biases = detail::matrices_from_json(p.at("biases"));
  const auto& l = j.at("lyapunov");
  ck.lyapunov.g.widths = l.at("widths").get<std::vector<std::size_t>>();
  ck.lyapunov.epsilon = l.at("epsilon").get<double>();
  ck.lyapunov.g.beta = l.at("beta").get<double>();
  ck.lyapunov.g.w = detail::matrices_from_json(l.at("W"));
  ck.lyapunov.g.b = detail::matrices_from_json(l.at("b"));
  ck.lyapunov.g.u_raw = detail::matrices_from_json(l.at("U_raw"));
  ck.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("training_meta")) ck.training_meta = j.at("training_meta");
  return ck;
}

/// Atomic write: temp file in the target directory, then rename.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw checkpoint_error("checkpoint: cannot write " + tmp.string());
    out << checkpoint_to_json(ck).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw checkpoint_error("checkpoint: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error("checkpoint: malformed file " + path.string() + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error("checkpoint: missing or mistyped field in " + path.string() +
                           ": " + e.what());
  }
}

}  // namespace nldpc
