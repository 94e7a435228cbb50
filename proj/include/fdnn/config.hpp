#pragma once

// Experiment configuration.
//
// Plain-text file of sections with `key = value` lines; `#` starts a comment.
//
//   [grid]
//   m = 64
//   [network]
//   layers = 4
//   ...
//
// Unknown sections or keys are rejected. Command-line overrides use the
// dotted form `network.layers=5`.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdnn/fracnet.hpp"
#include "fdnn/mcmc.hpp"
#include "fdnn/optim.hpp"
#include "fdnn/pde.hpp"

namespace fdnn {

struct ExperimentConfig {
  std::string preset = "reference";

  int grid_m = 64;
  double param_lower = 0.01;
  double param_upper = 10.0;

  int snapshot_count = 900;
  /// Worker threads for snapshot generation; 0 uses hardware concurrency.
  int threads = 0;
  int pod_rank = 400;

  int layers = 4;
  int hidden_width = 15;
  double gamma = 0.5;
  double horizon = 1.0;
  /// Layer step h; values <= 0 select horizon / (layers - 1).
  double step = 0.0;
  double epsilon = 0.1;
  double lambda = 1e-6;

  int bfgs_iterations = 1600;
  double gradient_tolerance = 1e-8;
  /// Extra iteration counts at which the parameters are saved during training.
  std::vector<int> record_iterations;

  std::size_t chain_samples = 20000;
  std::size_t burn_in = 10000;
  double noise_std = 1e-2;
  Eigen::VectorXd xi_true = Eigen::Vector2d(1.0, 0.1);
  std::size_t update_period = 100;
  double proposal_scale = 0.0;
  double jitter = 1e-8;
  /// "surrogate" or "full".
  std::string forward_map = "surrogate";

  std::uint64_t seed_snapshots = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_noise = 3;
  std::uint64_t seed_chain = 4;

  std::filesystem::path output_dir = "fdnn_out";

  void validate() const;

  double resolved_step() const;
  fracnet::FracNetConfig network() const;
  optim::BfgsConfig bfgs() const;
  pde::GridConfig grid() const;
  mcmc::Box prior() const;
  mcmc::ChainConfig chain() const;
  std::vector<std::pair<double, double>> bounds() const;

  std::filesystem::path snapshots_path() const { return output_dir / "snapshots.bin"; }
  std::filesystem::path basis_path() const { return output_dir / "pod_basis.bin"; }
  std::filesystem::path checkpoint_path() const { return output_dir / "checkpoint.bin"; }
  std::filesystem::path chain_path() const { return output_dir / "chain.csv"; }

  bool operator==(const ExperimentConfig& other) const;
};

/// "reference" (full-scale defaults) or "desk" (m=32, N_s=300, k=100, M=5000).
ExperimentConfig preset(const std::string& name);

std::string serialize(const ExperimentConfig& config);
/// Starts from the preset named by an optional `[experiment] preset = ...`
/// line (default "reference"), then applies every key in the text.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// `section.key=value`
void apply_override(ExperimentConfig& config, const std::string& assignment);

}  // namespace fdnn
