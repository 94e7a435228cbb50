#include "fdnn/mcmc.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn::mcmc {

Box Box::uniform(Eigen::Index dim, double lower, double upper) {
  return {Eigen::VectorXd::Constant(dim, lower), Eigen::VectorXd::Constant(dim, upper)};
}

bool Box::contains(const Eigen::VectorXd& xi) const {
  if (xi.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    if (!(xi(i) >= lower(i) && xi(i) <= upper(i))) return false;
  }
  return true;
}

void PosteriorSpec::validate() const {
  if (!(noise_std > 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise std kappa must be positive");
  if (!data.allFinite()) throw NumericalError("observation vector contains non-finite entries");
  if (!forward) throw ConfigError("posterior needs a forward map");
  if (prior.lower.size() != prior.upper.size() || prior.dim() != forward->parameter_dim()) {
    throw DimensionError("prior box dimension differs from the forward map's parameter dimension");
  }
  if (!(prior.lower.array() < prior.upper.array()).all()) throw ConfigError("prior box is empty");
  if (data.size() != forward->output_dim()) {
    throw DimensionError("data has length " + std::to_string(data.size()) + ", forward map produces " +
                         std::to_string(forward->output_dim()));
  }
}

Posterior::Posterior(PosteriorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  misfit_ = spec_.forward->bind_data(spec_.data);
}

double Posterior::log_density(const Eigen::VectorXd& xi) const {
  if (!spec_.prior.contains(xi)) return kOutsideSupport;
  return -misfit_(xi) / (2.0 * spec_.noise_std * spec_.noise_std);
}

Eigen::VectorXd generate_observations(const ForwardMap& forward, const Eigen::VectorXd& xi_true,
                                      double kappa, std::uint64_t seed) {
  if (!(kappa >= 0.0)) throw ConfigError("noise level must be nonnegative");
  Eigen::VectorXd d = forward.evaluate(xi_true);
  if (kappa == 0.0) return d;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kappa);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += normal(rng);
  return d;
}

Eigen::MatrixXd update_proposal(const Eigen::MatrixXd& history, double jitter) {
  if (history.rows() < 1) throw ConfigError("proposal update needs at least one sample");
  const Eigen::RowVectorXd mean = history.colwise().mean();
  const Eigen::MatrixXd centered = history.rowwise() - mean;
  Eigen::MatrixXd c = centered.transpose() * centered / static_cast<double>(history.rows());
  c.diagonal().array() += jitter;
  return c;
}

AdaptiveProposal::AdaptiveProposal(Eigen::Index dim, ProposalConfig config)
    : AdaptiveProposal(Eigen::MatrixXd::Identity(dim, dim), config) {}

AdaptiveProposal::AdaptiveProposal(const Eigen::MatrixXd& covariance, ProposalConfig config)
    : config_(config) {
  const Eigen::Index dim = covariance.rows();
  if (dim < 1 || covariance.cols() != dim) throw DimensionError("proposal covariance must be square");
  if (!(config_.jitter >= 0.0)) throw ConfigError("proposal jitter must be nonnegative");
  if (config_.update_period < 1) throw ConfigError("update_period must be >= 1");
  scale_ = config_.scale > 0.0 ? config_.scale : 2.4 * 2.4 / static_cast<double>(dim);
  mean_ = Eigen::VectorXd::Zero(dim);
  scatter_ = Eigen::MatrixXd::Zero(dim, dim);
  set_covariance(covariance);
}

void AdaptiveProposal::set_covariance(const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(scale_ * c);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("proposal covariance is not positive definite");
  }
  covariance_ = c;
  factor_ = llt.matrixL();
}

void AdaptiveProposal::observe(const Eigen::VectorXd& xi) {
  if (xi.size() != mean_.size()) throw DimensionError("sample dimension differs from proposal dimension");
  // Welford update of the mean and the centered scatter matrix.
  ++count_;
  const Eigen::VectorXd delta = xi - mean_;
  mean_ += delta / static_cast<double>(count_);
  scatter_.noalias() += delta * (xi - mean_).transpose();
  if (count_ % config_.update_period == 0) {
    Eigen::MatrixXd c = scatter_ / static_cast<double>(count_);
    c = 0.5 * (c + c.transpose());
    c.diagonal().array() += config_.jitter;
    set_covariance(c);
  }
}

Eigen::VectorXd AdaptiveProposal::propose(const Eigen::VectorXd& current, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(current.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return current + factor_ * z;
}

StepResult am_step(const Posterior& posterior, const AdaptiveProposal& proposal, const ChainState& current,
                   std::mt19937_64& rng) {
  const Eigen::VectorXd candidate = proposal.propose(current.xi, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);

  StepResult out{current, false};
  if (!candidate.allFinite()) return out;
  const double log_post = posterior.log_density(candidate);
  if (log_post == kOutsideSupport) return out;
  const double log_alpha = log_post - current.log_posterior;
  if (log_alpha >= 0.0 || std::log(u) < log_alpha) {
    out.state = {candidate, log_post};
    out.accepted = true;
  }
  return out;
}

double Chain::acceptance_rate(bool after_burn_in) const {
  const std::size_t start = after_burn_in ? std::min(burn_in, accepted.size()) : 0;
  if (start >= accepted.size()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = start; i < accepted.size(); ++i) hits += accepted[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(accepted.size() - start);
}

std::vector<double> Chain::post_burn_in(Eigen::Index coordinate) const {
  std::vector<double> out;
  for (auto i = static_cast<Eigen::Index>(burn_in); i < samples.rows(); ++i) out.push_back(samples(i, coordinate));
  return out;
}

void ChainConfig::validate() const {
  if (samples <= burn_in) throw ConfigError("chain length M must exceed burn_in");
  if (max_consecutive_failures < 0) throw ConfigError("max_consecutive_failures must be nonnegative");
}

Chain run_chain(const Posterior& posterior, const ChainConfig& config) {
  config.validate();
  const auto& prior = posterior.spec().prior;
  const Eigen::Index dim = prior.dim();

  ChainState state;
  state.xi = config.initial.size() > 0 ? config.initial : prior.midpoint();
  if (state.xi.size() != dim) throw DimensionError("initial state dimension differs from the prior box");
  state.log_posterior = posterior.log_density(state.xi);
  if (!std::isfinite(state.log_posterior)) {
    throw ConfigError("initial chain state has zero posterior density");
  }

  AdaptiveProposal proposal(dim, config.proposal);
  proposal.observe(state.xi);
  std::mt19937_64 rng(config.seed);

  Chain chain;
  chain.burn_in = config.burn_in;
  chain.samples.resize(static_cast<Eigen::Index>(config.samples), dim);
  chain.log_posterior.resize(static_cast<Eigen::Index>(config.samples));
  chain.accepted.reserve(config.samples);

  int consecutive_failures = 0;
  for (std::size_t i = 0; i < config.samples; ++i) {
    StepResult step;
    try {
      step = am_step(posterior, proposal, state, rng);
      consecutive_failures = 0;
    } catch (const std::runtime_error& e) {
      if (++consecutive_failures > config.max_consecutive_failures) {
        throw ConvergenceError("forward map failed " + std::to_string(consecutive_failures) +
                                   " consecutive times at step " + std::to_string(i + 1) + ": " + e.what(),
                               std::numeric_limits<double>::quiet_NaN());
      }
      step = {state, false};
    }
    state = step.state;
    const auto row = static_cast<Eigen::Index>(i);
    chain.samples.row(row) = state.xi.transpose();
    chain.log_posterior(row) = state.log_posterior;
    chain.accepted.push_back(step.accepted);
    proposal.observe(state.xi);
  }

  chain.metadata["seed"] = std::to_string(config.seed);
  chain.metadata["samples"] = std::to_string(config.samples);
  chain.metadata["burn_in"] = std::to_string(config.burn_in);
  chain.metadata["proposal_scale"] = io::format_double(proposal.scale());
  chain.metadata["proposal_jitter"] = io::format_double(config.proposal.jitter);
  chain.metadata["update_period"] = std::to_string(config.proposal.update_period);
  chain.metadata["noise_std"] = io::format_double(posterior.spec().noise_std);
  chain.metadata["forward_map"] = posterior.spec().forward->identity();
  return chain;
}

void write_chain_csv(std::ostream& out, const Chain& chain) {
  for (const auto& [k, v] : chain.metadata) {
    if (k == "burn_in") continue;
    out << "# " << k << '=' << v << '\n';
  }
  out << "# burn_in=" << chain.burn_in << '\n';
  out << "step";
  for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) out << ",xi_" << c + 1;
  out << ",log_posterior,accepted\n";
  for (Eigen::Index r = 0; r < chain.samples.rows(); ++r) {
    out << r + 1;
    for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) out << ',' << io::format_double(chain.samples(r, c));
    out << ',' << io::format_double(chain.log_posterior(r)) << ',' << (chain.accepted[static_cast<std::size_t>(r)] ? 1 : 0)
        << '\n';
  }
}

namespace {

double parse_double(const std::string& text, std::size_t line) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    if (text == "-inf") return kOutsideSupport;
    throw FormatError("expected a number, found '" + text + "'", line);
  }
  return value;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Chain read_chain_csv(std::istream& in) {
  Chain chain;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("metadata line without '='", line_no);
      chain.metadata[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    header = split_csv(line);
    break;
  }
  if (header.size() < 4 || header.front() != "step" || header[header.size() - 2] != "log_posterior" ||
      header.back() != "accepted") {
    throw FormatError("expected header 'step,xi_1,...,log_posterior,accepted'", line_no);
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 3);
  for (Eigen::Index c = 0; c < dim; ++c) {
    if (header[static_cast<std::size_t>(c + 1)] != "xi_" + std::to_string(c + 1)) {
      throw FormatError("unexpected column name '" + header[static_cast<std::size_t>(c + 1)] + "'", line_no);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> log_post;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw FormatError("expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()),
                        line_no);
    }
    if (fields.front() != std::to_string(rows.size() + 1)) {
      throw FormatError("step column out of sequence", line_no);
    }
    std::vector<double> row;
    for (Eigen::Index c = 0; c < dim; ++c) row.push_back(parse_double(fields[static_cast<std::size_t>(c + 1)], line_no));
    rows.push_back(std::move(row));
    log_post.push_back(parse_double(fields[fields.size() - 2], line_no));
    const auto& flag = fields.back();
    if (flag != "0" && flag != "1") throw FormatError("accepted flag must be 0 or 1", line_no);
    chain.accepted.push_back(flag == "1");
  }
  if (rows.empty()) throw FormatError("chain file has no samples", line_no);

  chain.samples.resize(static_cast<Eigen::Index>(rows.size()), dim);
  chain.log_posterior.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) chain.samples(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    chain.log_posterior(static_cast<Eigen::Index>(r)) = log_post[r];
  }
  if (auto it = chain.metadata.find("burn_in"); it != chain.metadata.end()) {
    try {
      chain.burn_in = std::stoul(it->second);
    } catch (const std::exception&) {
      throw FormatError("burn_in metadata is not an integer");
    }
    if (chain.burn_in >= rows.size()) throw FormatError("burn_in is not smaller than the chain length");
  }
  return chain;
}

}  // namespace fdnn::mcmc
