#include "fdnn/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <thread>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"
#include "fdnn/forward_maps.hpp"
#include "fdnn/pde.hpp"

namespace fdnn::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void prepare_output(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.output_dir);
  save_config(config.output_dir / "config.resolved.ini", config);
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SolveRecord>& manifest) {
  auto out = open_text(path);
  out << "index,xi_1,xi_2,status,newton_iterations,gmres_iterations,residual_norm,error\n";
  for (const auto& r : manifest) {
    out << r.index << ',' << io::format_double(r.xi(0)) << ',' << io::format_double(r.xi(1)) << ','
        << (r.ok ? "ok" : "failed") << ',' << r.newton_iterations << ',' << r.gmres_iterations << ','
        << io::format_double(r.residual_norm) << ",\"" << r.error << "\"\n";
  }
}

}  // namespace

SnapshotRun generate_snapshots(const ExperimentConfig& config) {
  config.validate();
  const auto start = Clock::now();
  const pde::GridConfig grid = config.grid();
  const int n = config.snapshot_count;
  const Eigen::MatrixXd params = pde::latin_hypercube(n, config.bounds(), config.seed_snapshots);

  std::vector<SolveRecord> records(static_cast<std::size_t>(n));
  Eigen::MatrixXd solutions(grid.dofs(), n);

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::min(n, config.threads > 0 ? config.threads : static_cast<int>(hw));
  auto work = [&](int worker) {
    for (int j = worker; j < n; j += workers) {
      auto& rec = records[static_cast<std::size_t>(j)];
      rec.index = j;
      rec.xi = params.col(j);
      pde::SolveStats stats;
      try {
        solutions.col(j) = pde::solve_forward({rec.xi(0), rec.xi(1)}, grid, {}, &stats).values;
        rec.ok = true;
      } catch (const ConvergenceError& e) {
        rec.error = e.what();
        stats.residual_norm = e.last_residual();
      } catch (const NumericalError& e) {
        rec.error = e.what();
      }
      rec.newton_iterations = stats.newton_iterations;
      rec.gmres_iterations = stats.gmres_iterations;
      rec.residual_norm = stats.residual_norm;
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();

  std::vector<int> kept;
  for (const auto& r : records) {
    if (r.ok) kept.push_back(r.index);
  }
  const auto failed = static_cast<std::size_t>(n) - kept.size();
  SnapshotRun run;
  run.manifest = records;
  run.failed = failed;
  run.set.parameters.resize(2, static_cast<Eigen::Index>(kept.size()));
  run.set.snapshots.resize(grid.dofs(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c) {
    run.set.parameters.col(static_cast<Eigen::Index>(c)) = params.col(kept[c]);
    run.set.snapshots.col(static_cast<Eigen::Index>(c)) = solutions.col(kept[c]);
  }
  run.set.metadata["grid_m"] = std::to_string(grid.m);
  run.set.metadata["seed"] = std::to_string(config.seed_snapshots);
  run.set.metadata["lower"] = io::format_double(config.param_lower);
  run.set.metadata["upper"] = io::format_double(config.param_upper);
  run.set.metadata["failed_solves"] = std::to_string(failed);
  run.seconds = seconds_since(start);
  return run;
}

SnapshotRun cmd_snapshots(const ExperimentConfig& config, std::ostream* log) {
  prepare_output(config);
  SnapshotRun run = generate_snapshots(config);
  write_manifest(config.output_dir / "snapshots_manifest.csv", run.manifest);
  if (static_cast<double>(run.failed) > 0.01 * config.snapshot_count) {
    throw ConvergenceError(std::to_string(run.failed) + " of " + std::to_string(config.snapshot_count) +
                               " snapshot solves failed (see snapshots_manifest.csv)",
                           std::numeric_limits<double>::quiet_NaN());
  }
  pod::save_snapshots(config.snapshots_path(), run.set);
  if (log) {
    *log << "snapshots: " << run.set.snapshots.cols() << " solves on a " << config.grid_m << "x" << config.grid_m
         << " grid in " << run.seconds << " s -> " << config.snapshots_path().string() << '\n';
  }
  return run;
}

void check_against_config(const ExperimentConfig& config, const pod::SnapshotSet& snapshots) {
  const long long n_x = static_cast<long long>(config.grid_m) * config.grid_m;
  if (snapshots.snapshots.rows() != n_x) {
    throw DimensionError("snapshot file has N_x=" + std::to_string(snapshots.snapshots.rows()) +
                         ", configuration implies " + std::to_string(n_x));
  }
  if (snapshots.parameters.rows() != 2) throw DimensionError("snapshot file does not hold 2 parameters");
  if (snapshots.snapshots.cols() < config.pod_rank) {
    throw DimensionError("snapshot file has " + std::to_string(snapshots.snapshots.cols()) +
                         " columns, fewer than pod.rank=" + std::to_string(config.pod_rank));
  }
}

void check_against_config(const ExperimentConfig& config, const pod::PodBasis& basis) {
  const long long n_x = static_cast<long long>(config.grid_m) * config.grid_m;
  if (basis.full_dim() != n_x || basis.rank() != config.pod_rank) {
    throw DimensionError("basis file is " + std::to_string(basis.full_dim()) + "x" + std::to_string(basis.rank()) +
                         ", configuration implies " + std::to_string(n_x) + "x" + std::to_string(config.pod_rank));
  }
}

void check_against_config(const ExperimentConfig& config, const Checkpoint& checkpoint) {
  const auto want = config.network();
  const auto& got = checkpoint.config;
  if (got.layers != want.layers || got.hidden_width != want.hidden_width || got.output_dim != want.output_dim ||
      got.input_dim != want.input_dim) {
    throw DimensionError("checkpoint network (L=" + std::to_string(got.layers) + ", n=" +
                         std::to_string(got.hidden_width) + ", k=" + std::to_string(got.output_dim) +
                         ") contradicts the configuration (L=" + std::to_string(want.layers) + ", n=" +
                         std::to_string(want.hidden_width) + ", k=" + std::to_string(want.output_dim) + ")");
  }
}

TrainRun train_surrogate(const ExperimentConfig& config, const pod::SnapshotSet& snapshots) {
  config.validate();
  check_against_config(config, snapshots);
  const auto start = Clock::now();
  const auto cfg = config.network();

  TrainRun run;
  run.basis = pod::compute_pod(snapshots.snapshots, config.pod_rank);
  run.basis.metadata["grid_m"] = std::to_string(config.grid_m);
  const Eigen::MatrixXd targets = pod::project(run.basis, snapshots.snapshots);
  const Eigen::MatrixXd& inputs = snapshots.parameters;

  const fracnet::Theta theta0 = fracnet::Theta::initialize(cfg, config.seed_init);
  optim::Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const auto lg = fracnet::gradient(fracnet::Theta::unflatten(cfg, x), inputs, targets, cfg);
    grad = lg.grad.flatten();
    return lg.loss;
  };
  auto on_iteration = [&](const optim::IterationInfo& info) {
    for (int it : config.record_iterations) {
      if (it == info.iteration) run.recorded[it] = fracnet::Theta::unflatten(cfg, *info.x);
    }
  };
  run.optim = optim::bfgs_minimize(objective, theta0.flatten(), config.bfgs(), on_iteration);

  run.checkpoint.config = cfg;
  run.checkpoint.theta = fracnet::Theta::unflatten(cfg, run.optim.x);
  run.checkpoint.seed = config.seed_init;
  run.checkpoint.provenance["iterations"] = std::to_string(run.optim.iterations);
  run.checkpoint.provenance["final_loss"] = io::format_double(run.optim.loss_history.back());
  run.checkpoint.provenance["stop_reason"] = optim::to_string(run.optim.reason);
  run.checkpoint.provenance["n_train"] = std::to_string(inputs.cols());
  run.seconds = seconds_since(start);
  return run;
}

TrainRun cmd_train(const ExperimentConfig& config, std::ostream* log) {
  prepare_output(config);
  const auto snapshots = pod::load_snapshots(config.snapshots_path());
  TrainRun run = train_surrogate(config, snapshots);
  run.checkpoint.provenance["snapshots_hash"] = io::file_hash(config.snapshots_path());

  save_checkpoint(config.checkpoint_path(), run.checkpoint);
  pod::save_basis(config.basis_path(), run.basis);
  {
    auto out = open_text(config.output_dir / "training_log.csv");
    optim::write_log_csv(out, run.optim);
  }
  for (const auto& [it, theta] : run.recorded) {
    Checkpoint partial = run.checkpoint;
    partial.theta = theta;
    partial.provenance["iterations"] = std::to_string(it);
    partial.provenance.erase("final_loss");
    partial.provenance.erase("stop_reason");
    save_checkpoint(config.output_dir / ("checkpoint_iter" + std::to_string(it) + ".bin"), partial);
  }
  if (log) {
    *log << "train: " << run.optim.iterations << " BFGS iterations (" << optim::to_string(run.optim.reason)
         << "), final loss " << run.optim.loss_history.back() << ", " << run.seconds << " s -> "
         << config.checkpoint_path().string() << '\n';
  }
  return run;
}

double held_out_error(const Checkpoint& checkpoint, const pod::PodBasis& basis, const pde::GridConfig& grid,
                      const Eigen::VectorXd& xi) {
  if (basis.full_dim() != grid.dofs()) throw DimensionError("basis dimension differs from the grid size");
  const Eigen::VectorXd u = pde::solve_forward(pde::PdeParams::from_vector(xi), grid).values;
  const mcmc::SurrogateMap surrogate(checkpoint, basis, "held-out");
  const Eigen::VectorXd approx = surrogate.evaluate(xi);
  const double scale = u.lpNorm<Eigen::Infinity>();
  if (!(scale > 0.0)) throw NumericalError("reference solution is identically zero");
  return (u - approx).lpNorm<Eigen::Infinity>() / scale;
}

double cmd_held_out_error(const ExperimentConfig& config, const Eigen::VectorXd& xi,
                          const std::filesystem::path& checkpoint_path, std::ostream* log) {
  const auto checkpoint = load_checkpoint(checkpoint_path);
  const auto basis = pod::load_basis(config.basis_path());
  check_against_config(config, checkpoint);
  check_against_config(config, basis);
  const double err = held_out_error(checkpoint, basis, config.grid(), xi);
  if (log) {
    *log << "held-out relative error at (" << io::format_double(xi(0)) << ", " << io::format_double(xi(1))
         << "): " << io::format_double(err) << '\n';
  }
  return err;
}

std::shared_ptr<const mcmc::ForwardMap> load_surrogate(const ExperimentConfig& config,
                                                       const std::filesystem::path& checkpoint_path,
                                                       const std::filesystem::path& basis_path) {
  auto checkpoint = load_checkpoint(checkpoint_path);
  auto basis = pod::load_basis(basis_path);
  check_against_config(config, checkpoint);
  check_against_config(config, basis);
  const std::string identity = "surrogate:" + io::file_hash(checkpoint_path) + ":" + io::file_hash(basis_path);
  return std::make_shared<mcmc::SurrogateMap>(std::move(checkpoint), std::move(basis), identity);
}

McmcRun run_inference(const ExperimentConfig& config, std::shared_ptr<const mcmc::ForwardMap> forward) {
  config.validate();
  const mcmc::FullModelMap truth(config.grid());
  McmcRun run;
  run.data = mcmc::generate_observations(truth, config.xi_true, config.noise_std, config.seed_noise);

  mcmc::PosteriorSpec spec;
  spec.data = run.data;
  spec.noise_std = config.noise_std;
  spec.prior = config.prior();
  spec.forward = std::move(forward);
  const mcmc::Posterior posterior(spec);

  const auto start = Clock::now();
  run.chain = mcmc::run_chain(posterior, config.chain());
  run.seconds = seconds_since(start);
  run.chain.metadata["noise_seed"] = std::to_string(config.seed_noise);
  run.chain.metadata["xi_true"] = io::format_double(config.xi_true(0)) + ";" + io::format_double(config.xi_true(1));
  run.chain.metadata["grid_m"] = std::to_string(config.grid_m);
  return run;
}

McmcRun cmd_mcmc(const ExperimentConfig& config, std::ostream* log) {
  prepare_output(config);
  std::shared_ptr<const mcmc::ForwardMap> forward;
  std::filesystem::path out_path = config.chain_path();
  if (config.forward_map == "full") {
    forward = std::make_shared<mcmc::FullModelMap>(config.grid());
    out_path = config.output_dir / "chain_full.csv";
  } else {
    forward = load_surrogate(config, config.checkpoint_path(), config.basis_path());
  }
  McmcRun run = run_inference(config, forward);
  {
    auto out = open_text(out_path);
    mcmc::write_chain_csv(out, run.chain);
  }
  if (log) {
    *log << "mcmc (" << config.forward_map << "): " << run.chain.size() << " steps in " << run.seconds
         << " s, acceptance " << run.chain.acceptance_rate(true) << " -> " << out_path.string() << '\n';
  }
  return run;
}

diagnostics::ChainReport cmd_diagnose(const std::filesystem::path& chain_path, std::ostream* log) {
  std::ifstream in(chain_path);
  if (!in) throw FormatError("cannot open chain file '" + chain_path.string() + "'");
  const auto chain = mcmc::read_chain_csv(in);
  const auto report = diagnostics::summarize(chain);

  const auto dir = chain_path.parent_path();
  const std::string stem = chain_path.stem().string();
  {
    auto out = open_text(dir / (stem + "_report.csv"));
    diagnostics::write_report_csv(out, report);
  }
  {
    auto out = open_text(dir / (stem + "_acf.csv"));
    diagnostics::write_acf_csv(out, report);
  }
  {
    auto out = open_text(dir / (stem + "_histogram.csv"));
    diagnostics::write_histogram_csv(out, chain, 30);
  }
  if (log) {
    for (const auto& s : report.coordinates) {
      *log << "xi_" << s.coordinate << ": mean " << s.mean << ", sd " << s.sd << ", 95% CI [" << s.ci_lo << ", "
           << s.ci_hi << "], tau_int " << s.iact.tau_int;
      if (s.iact.degenerate) {
        *log << " (constant chain)";
      } else if (!s.iact.converged) {
        *log << " (window not converged)";
      }
      *log << '\n';
    }
    *log << "acceptance rate after burn-in: " << report.acceptance_rate << '\n';
  }
  return report;
}

void cmd_full_run(const ExperimentConfig& config, std::ostream* log) {
  cmd_snapshots(config, log);
  cmd_train(config, log);
  cmd_held_out_error(config, config.xi_true, config.checkpoint_path(), log);
  ExperimentConfig sampling = config;
  sampling.forward_map = "surrogate";
  cmd_mcmc(sampling, log);
  cmd_diagnose(sampling.chain_path(), log);
}

}  // namespace fdnn::pipeline
