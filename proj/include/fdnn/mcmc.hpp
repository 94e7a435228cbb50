#pragma once

// Adaptive Metropolis sampling of
//   pi(xi | d)  propto  exp(-||d - Phi(xi)||^2 / (2 kappa^2))   on the prior box,
// and 0 outside it.
//
// The proposal is N(xi_i, s C) where C is the running covariance of the
// chain history plus a jitter theta I, refreshed every update_period samples
// (C_0 = I). The proposal is symmetric, so the acceptance ratio reduces to
// the posterior ratio.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdnn/forward_maps.hpp"

namespace fdnn::mcmc {

/// Log-density value for points outside the prior support.
inline constexpr double kOutsideSupport = -std::numeric_limits<double>::infinity();

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box uniform(Eigen::Index dim, double lower, double upper);
  bool contains(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd midpoint() const { return 0.5 * (lower + upper); }
  Eigen::Index dim() const { return lower.size(); }
};

struct PosteriorSpec {
  Eigen::VectorXd data;
  double noise_std = 1e-2;
  Box prior = Box::uniform(2, 0.01, 10.0);
  std::shared_ptr<const ForwardMap> forward;

  void validate() const;
};

class Posterior {
 public:
  explicit Posterior(PosteriorSpec spec);

  /// -||d - Phi(xi)||^2 / (2 kappa^2) inside the box, kOutsideSupport outside.
  /// Forward failures propagate as exceptions.
  double log_density(const Eigen::VectorXd& xi) const;
  const PosteriorSpec& spec() const { return spec_; }

 private:
  PosteriorSpec spec_;
  MisfitFunction misfit_;
};

/// Data d = Phi(xi_true) + eta with eta ~ N(0, kappa^2 I).
Eigen::VectorXd generate_observations(const ForwardMap& forward, const Eigen::VectorXd& xi_true,
                                      double kappa, std::uint64_t seed);

struct ProposalConfig {
  /// Proposal scale s; values <= 0 select 2.4^2 / dim.
  double scale = 0.0;
  double jitter = 1e-8;
  /// Samples between covariance refreshes; use a huge value to freeze C.
  std::size_t update_period = 100;
};

/// Covariance (1/i) sum_j (x_j - mean)(x_j - mean)^T + jitter I over the rows of history.
Eigen::MatrixXd update_proposal(const Eigen::MatrixXd& history, double jitter);

class AdaptiveProposal {
 public:
  AdaptiveProposal(Eigen::Index dim, ProposalConfig config);
  /// Starts from a fixed covariance (used for non-adaptive runs and tests).
  AdaptiveProposal(const Eigen::MatrixXd& covariance, ProposalConfig config);

  /// Adds a chain state to the running mean/scatter; refreshes C when the
  /// number of observed states is a multiple of update_period.
  void observe(const Eigen::VectorXd& xi);

  Eigen::VectorXd propose(const Eigen::VectorXd& current, std::mt19937_64& rng) const;

  std::size_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  double scale() const { return scale_; }
  const ProposalConfig& config() const { return config_; }

 private:
  void set_covariance(const Eigen::MatrixXd& c);

  ProposalConfig config_;
  double scale_;
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;  // lower Cholesky factor of scale * covariance
};

struct ChainState {
  Eigen::VectorXd xi;
  double log_posterior = kOutsideSupport;
};

struct StepResult {
  ChainState state;
  bool accepted = false;
};

/// One Metropolis step. Non-finite proposals and proposals outside the box
/// are rejected without a forward evaluation.
StepResult am_step(const Posterior& posterior, const AdaptiveProposal& proposal,
                   const ChainState& current, std::mt19937_64& rng);

struct Chain {
  Eigen::MatrixXd samples;  // M x N_xi, row i is the state after step i+1
  std::vector<bool> accepted;
  Eigen::VectorXd log_posterior;
  std::size_t burn_in = 0;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  double acceptance_rate(bool after_burn_in = true) const;
  /// Column `coordinate` of the rows after burn-in.
  std::vector<double> post_burn_in(Eigen::Index coordinate) const;
};

struct ChainConfig {
  std::size_t samples = 20000;
  std::size_t burn_in = 10000;
  std::uint64_t seed = 0;
  ProposalConfig proposal{};
  /// Defaults to the prior-box midpoint when empty.
  Eigen::VectorXd initial;
  int max_consecutive_failures = 10;

  void validate() const;
};

/// Runs `samples` AM steps. Throws ConvergenceError after more than
/// max_consecutive_failures forward failures in a row.
Chain run_chain(const Posterior& posterior, const ChainConfig& config);

/// CSV with `# key=value` comment lines, then step,xi_1..xi_d,log_posterior,accepted.
void write_chain_csv(std::ostream& out, const Chain& chain);
Chain read_chain_csv(std::istream& in);

}  // namespace fdnn::mcmc
