// Command-line driver for the surrogate-accelerated inversion pipeline.
//
//   fdnn snapshots --preset desk --output out/
//   fdnn train     --preset desk --output out/
//   fdnn mcmc      --preset desk --output out/ [--full]
//   fdnn diagnose  out/chain.csv
//   fdnn error     --preset desk --output out/ --xi 1,0.1
//   fdnn full-run  --config experiment.ini --set mcmc.samples=2000
//
// Exit codes: 0 success, 2 configuration, 3 dimension mismatch, 4 file format,
// 5 numerical failure, 6 solver convergence, 1 anything else.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdnn/config.hpp"
#include "fdnn/error.hpp"
#include "fdnn/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config_file;
  std::string preset = "reference";
  std::string output_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonOptions& opts) {
  app->add_option("-c,--config", opts.config_file, "experiment configuration file")->check(CLI::ExistingFile);
  app->add_option("-p,--preset", opts.preset, "base preset when no config file is given (reference|desk)");
  app->add_option("-o,--output", opts.output_dir, "output directory (overrides paths.output_dir)");
  app->add_option("-s,--set", opts.overrides, "override, e.g. network.layers=5")->take_all();
}

fdnn::ExperimentConfig resolve(const CommonOptions& opts) {
  fdnn::ExperimentConfig config =
      opts.config_file.empty() ? fdnn::preset(opts.preset) : fdnn::load_config(opts.config_file);
  for (const auto& o : opts.overrides) fdnn::apply_override(config, o);
  if (!opts.output_dir.empty()) config.output_dir = opts.output_dir;
  config.validate();
  return config;
}

Eigen::VectorXd parse_xi(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw fdnn::ConfigError("--xi expects two comma-separated values");
  try {
    return Eigen::Vector2d(std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1)));
  } catch (const std::logic_error&) {
    throw fdnn::ConfigError("--xi expects two comma-separated numbers, got '" + text + "'");
  }
}

int report(const char* category, const std::exception& e, int code) {
  std::cerr << "fdnn: " << category << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fractional-DNN surrogate pipeline for Bayesian PDE inversion"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* snapshots = app.add_subcommand("snapshots", "Latin-hypercube parameters and full-model solves");
  auto* train = app.add_subcommand("train", "POD basis and fDNN training with BFGS");
  auto* mcmc = app.add_subcommand("mcmc", "adaptive Metropolis sampling of the posterior");
  auto* diagnose = app.add_subcommand("diagnose", "ACF, IACT, credible intervals and histograms of a chain");
  auto* error = app.add_subcommand("error", "held-out relative infinity-norm error of the surrogate");
  auto* full = app.add_subcommand("full-run", "snapshots, train, error, mcmc and diagnose in sequence");
  for (auto* sub : {snapshots, train, mcmc, error, full}) add_common(sub, common);

  bool use_full = false;
  mcmc->add_flag("--full", use_full, "use the full Newton-GMRES model instead of the surrogate");

  std::string chain_file;
  diagnose->add_option("chain", chain_file, "chain CSV file")->required()->check(CLI::ExistingFile);

  std::string xi_text;
  std::string checkpoint_file;
  error->add_option("--xi", xi_text, "parameter point, e.g. 1,0.1 (default: mcmc.xi_true)");
  error->add_option("--checkpoint", checkpoint_file, "checkpoint file (default: <output>/checkpoint.bin)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (diagnose->parsed()) {
      fdnn::pipeline::cmd_diagnose(chain_file, &std::cout);
      return 0;
    }
    auto config = resolve(common);
    if (snapshots->parsed()) {
      fdnn::pipeline::cmd_snapshots(config, &std::cout);
    } else if (train->parsed()) {
      fdnn::pipeline::cmd_train(config, &std::cout);
    } else if (mcmc->parsed()) {
      if (use_full) config.forward_map = "full";
      fdnn::pipeline::cmd_mcmc(config, &std::cout);
    } else if (error->parsed()) {
      const Eigen::VectorXd xi = xi_text.empty() ? config.xi_true : parse_xi(xi_text);
      const auto path = checkpoint_file.empty() ? config.checkpoint_path() : std::filesystem::path(checkpoint_file);
      fdnn::pipeline::cmd_held_out_error(config, xi, path, &std::cout);
    } else if (full->parsed()) {
      fdnn::pipeline::cmd_full_run(config, &std::cout);
    }
  } catch (const fdnn::ConfigError& e) {
    return report("configuration error", e, 2);
  } catch (const fdnn::DimensionError& e) {
    return report("dimension mismatch", e, 3);
  } catch (const fdnn::FormatError& e) {
    return report("file format error", e, 4);
  } catch (const fdnn::NumericalError& e) {
    return report("numerical failure", e, 5);
  } catch (const fdnn::ConvergenceError& e) {
    return report("convergence failure", e, 6);
  } catch (const std::exception& e) {
    return report("error", e, 1);
  }
  return 0;
}
