#pragma once

// End-to-end commands: snapshot generation, surrogate training, sampling,
// chain diagnostics and held-out error. Each command writes its artifacts
// into config.output_dir together with a resolved copy of the configuration.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdnn/checkpoint.hpp"
#include "fdnn/config.hpp"
#include "fdnn/diagnostics.hpp"
#include "fdnn/mcmc.hpp"
#include "fdnn/optim.hpp"
#include "fdnn/pod.hpp"

namespace fdnn::pipeline {

struct SolveRecord {
  int index = 0;
  Eigen::Vector2d xi;
  bool ok = false;
  int newton_iterations = 0;
  int gmres_iterations = 0;
  double residual_norm = 0.0;
  std::string error;
};

struct SnapshotRun {
  pod::SnapshotSet set;
  std::vector<SolveRecord> manifest;
  std::size_t failed = 0;
  double seconds = 0.0;
};

/// Latin-hypercube parameters and one forward solve each, spread over worker
/// threads by index so the result does not depend on the thread count.
/// Failed solves are dropped from the set and listed in the manifest.
SnapshotRun generate_snapshots(const ExperimentConfig& config);

/// Writes snapshots_manifest.csv, then snapshots.bin unless more than 1% of
/// the solves failed (ConvergenceError).
SnapshotRun cmd_snapshots(const ExperimentConfig& config, std::ostream* log = nullptr);

struct TrainRun {
  Checkpoint checkpoint;
  pod::PodBasis basis;
  optim::OptimResult optim;
  /// Parameters at each of config.record_iterations that was reached.
  std::map<int, fracnet::Theta> recorded;
  double seconds = 0.0;
};

/// POD of the snapshots, then BFGS on (xi_j -> V^T u_j).
TrainRun train_surrogate(const ExperimentConfig& config, const pod::SnapshotSet& snapshots);

/// Reads snapshots.bin; writes checkpoint.bin, pod_basis.bin, training_log.csv
/// and checkpoint_iter<N>.bin for each recorded iteration count.
TrainRun cmd_train(const ExperimentConfig& config, std::ostream* log = nullptr);

/// ||u(xi) - V net(xi)||_inf / ||u(xi)||_inf with u from the full solver.
double held_out_error(const Checkpoint& checkpoint, const pod::PodBasis& basis, const pde::GridConfig& grid,
                      const Eigen::VectorXd& xi);

double cmd_held_out_error(const ExperimentConfig& config, const Eigen::VectorXd& xi,
                          const std::filesystem::path& checkpoint_path, std::ostream* log = nullptr);

struct McmcRun {
  mcmc::Chain chain;
  Eigen::VectorXd data;
  double seconds = 0.0;
};

/// Synthetic data from the full model at config.xi_true (seeded by seeds.noise),
/// then an AM chain with the configured forward map.
McmcRun run_inference(const ExperimentConfig& config, std::shared_ptr<const mcmc::ForwardMap> forward);

std::shared_ptr<const mcmc::ForwardMap> load_surrogate(const ExperimentConfig& config,
                                                       const std::filesystem::path& checkpoint_path,
                                                       const std::filesystem::path& basis_path);

/// Writes chain.csv (or chain_full.csv for the full model).
McmcRun cmd_mcmc(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Writes <stem>_report.csv, <stem>_acf.csv and <stem>_histogram.csv next to the chain.
diagnostics::ChainReport cmd_diagnose(const std::filesystem::path& chain_path, std::ostream* log = nullptr);

/// Snapshots, training, held-out error at xi_true, sampling and diagnostics.
void cmd_full_run(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Rejects a checkpoint or basis whose dimensions contradict the configuration.
void check_against_config(const ExperimentConfig& config, const Checkpoint& checkpoint);
void check_against_config(const ExperimentConfig& config, const pod::PodBasis& basis);
void check_against_config(const ExperimentConfig& config, const pod::SnapshotSet& snapshots);

}  // namespace fdnn::pipeline
