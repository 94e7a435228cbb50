#include "fdnn/fracnet.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "fdnn/error.hpp"

namespace fdnn::fracnet {

void ActivationSpec::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("smooth ReLU epsilon must be positive, got " + std::to_string(epsilon));
  }
}

double smooth_relu(double x, const ActivationSpec& spec) {
  const double eps = spec.epsilon;
  if (x > eps) return x;
  if (x < -eps) return 0.0;
  return x * x / (4.0 * eps) + 0.5 * x + 0.25 * eps;
}

double smooth_relu_deriv(double x, const ActivationSpec& spec) {
  const double eps = spec.epsilon;
  if (x > eps) return 1.0;
  if (x < -eps) return 0.0;
  return x / (2.0 * eps) + 0.5;
}

double smooth_relu_second_deriv(double x, const ActivationSpec& spec) {
  const double eps = spec.epsilon;
  if (x > eps || x < -eps) return 0.0;
  return 1.0 / (2.0 * eps);
}

Eigen::VectorXd smooth_relu(const Eigen::VectorXd& x, const ActivationSpec& spec) {
  return x.unaryExpr([&spec](double v) { return smooth_relu(v, spec); });
}

Eigen::VectorXd smooth_relu_deriv(const Eigen::VectorXd& x, const ActivationSpec& spec) {
  return x.unaryExpr([&spec](double v) { return smooth_relu_deriv(v, spec); });
}

double euler_gamma(double x) {
  static constexpr double kG = 7.0;
  static constexpr std::array<double, 9> kCoeff = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::numbers::pi / (std::sin(std::numbers::pi * x) * euler_gamma(1.0 - x));
  }
  x -= 1.0;
  double a = kCoeff[0];
  const double t = x + kG + 0.5;
  for (std::size_t i = 1; i < kCoeff.size(); ++i) a += kCoeff[i] / (x + static_cast<double>(i));
  return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

std::vector<double> l1_coefficients(double gamma, int count) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("fractional order gamma must lie in (0,1), got " + std::to_string(gamma));
  }
  if (count < 1) throw ConfigError("l1_coefficients needs count >= 1");
  const double p = 1.0 - gamma;
  std::vector<double> a(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) {
    a[static_cast<std::size_t>(m)] = std::pow(m + 1.0, p) - std::pow(static_cast<double>(m), p);
  }
  return a;
}

void FracNetConfig::validate() const {
  if (layers < 2) throw ConfigError("network needs at least 2 layers, got " + std::to_string(layers));
  if (input_dim < 1 || hidden_width < 1 || output_dim < 1) {
    throw ConfigError("network dimensions must be >= 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("fractional order gamma must lie in (0,1), got " + std::to_string(gamma));
  }
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("step size h must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be nonnegative");
  activation.validate();
  const double t = tau();
  if (!std::isfinite(t) || !(t > 0.0)) throw ConfigError("tau = h^gamma Gamma(2-gamma) is not finite");
}

double FracNetConfig::tau() const { return std::pow(step, gamma) * euler_gamma(2.0 - gamma); }

// ---------------------------------------------------------------------------
// Parameters

namespace {

std::pair<Eigen::Index, Eigen::Index> weight_shape(const FracNetConfig& cfg, int layer) {
  const Eigen::Index n = cfg.hidden_width;
  if (layer == cfg.layers - 1) return {cfg.output_dim, n};
  return {n, n};
}

}  // namespace

Theta Theta::zeros(const FracNetConfig& cfg) {
  cfg.validate();
  Theta theta;
  for (int j = 0; j < cfg.layers; ++j) {
    auto [rows, cols] = weight_shape(cfg, j);
    theta.W.push_back(Eigen::MatrixXd::Zero(rows, cols));
  }
  for (int j = 0; j < cfg.layers - 1; ++j) theta.b.push_back(Eigen::VectorXd::Zero(cfg.hidden_width));
  return theta;
}

Theta Theta::initialize(const FracNetConfig& cfg, std::uint64_t seed) {
  Theta theta = zeros(cfg);
  std::mt19937_64 rng(seed);
  for (auto& w : theta.W) {
    const double s = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-s, s);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    }
  }
  return theta;
}

void Theta::check_shapes(const FracNetConfig& cfg) const {
  if (W.size() != static_cast<std::size_t>(cfg.layers) ||
      b.size() != static_cast<std::size_t>(cfg.layers - 1)) {
    throw DimensionError("theta has " + std::to_string(W.size()) + " weights and " +
                         std::to_string(b.size()) + " biases, expected " +
                         std::to_string(cfg.layers) + " and " + std::to_string(cfg.layers - 1));
  }
  for (int j = 0; j < cfg.layers; ++j) {
    auto [rows, cols] = weight_shape(cfg, j);
    const auto& w = W[static_cast<std::size_t>(j)];
    if (w.rows() != rows || w.cols() != cols) {
      throw DimensionError("W_" + std::to_string(j) + " is " + std::to_string(w.rows()) + "x" +
                           std::to_string(w.cols()) + ", expected " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }
  for (const auto& bias : b) {
    if (bias.size() != cfg.hidden_width) throw DimensionError("bias length differs from hidden width");
  }
}

std::size_t Theta::parameter_count() const {
  std::size_t count = 0;
  for (const auto& w : W) count += static_cast<std::size_t>(w.size());
  for (const auto& v : b) count += static_cast<std::size_t>(v.size());
  return count;
}

double Theta::squared_norm() const {
  double total = 0.0;
  for (const auto& w : W) total += w.squaredNorm();
  for (const auto& v : b) total += v.squaredNorm();
  return total;
}

namespace {

template <typename Mats, typename Vecs>
Eigen::VectorXd flatten_layers(const Mats& W, const Vecs& b) {
  Eigen::Index total = 0;
  for (const auto& w : W) total += w.size();
  for (const auto& v : b) total += v.size();
  Eigen::VectorXd flat(total);
  Eigen::Index pos = 0;
  for (std::size_t j = 0; j < W.size(); ++j) {
    flat.segment(pos, W[j].size()) = Eigen::Map<const Eigen::VectorXd>(W[j].data(), W[j].size());
    pos += W[j].size();
    if (j < b.size()) {
      flat.segment(pos, b[j].size()) = b[j];
      pos += b[j].size();
    }
  }
  return flat;
}

}  // namespace

Eigen::VectorXd Theta::flatten() const { return flatten_layers(W, b); }

Theta Theta::unflatten(const FracNetConfig& cfg, const Eigen::VectorXd& flat) {
  Theta theta = zeros(cfg);
  if (static_cast<std::size_t>(flat.size()) != theta.parameter_count()) {
    throw DimensionError("flat parameter vector has length " + std::to_string(flat.size()) +
                         ", expected " + std::to_string(theta.parameter_count()));
  }
  Eigen::Index pos = 0;
  for (std::size_t j = 0; j < theta.W.size(); ++j) {
    auto& w = theta.W[j];
    w = Eigen::Map<const Eigen::MatrixXd>(flat.data() + pos, w.rows(), w.cols());
    pos += w.size();
    if (j < theta.b.size()) {
      theta.b[j] = flat.segment(pos, theta.b[j].size());
      pos += theta.b[j].size();
    }
  }
  return theta;
}

Gradient Gradient::zeros_like(const Theta& theta) {
  Gradient g;
  for (const auto& w : theta.W) g.dW.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& v : theta.b) g.db.push_back(Eigen::VectorXd::Zero(v.size()));
  return g;
}

Eigen::VectorXd Gradient::flatten() const { return flatten_layers(dW, db); }

// ---------------------------------------------------------------------------
// Forward and adjoint passes. Both operate on batches: column s of every
// state matrix belongs to sample s.

namespace {

struct BatchTrace {
  std::vector<Eigen::MatrixXd> phi;
  std::vector<Eigen::MatrixXd> z;
};

enum class Update { Fractional, Euler };

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, const ActivationSpec& spec) {
  return z.unaryExpr([&spec](double v) { return smooth_relu(v, spec); });
}

Eigen::MatrixXd activate_deriv(const Eigen::MatrixXd& z, const ActivationSpec& spec) {
  return z.unaryExpr([&spec](double v) { return smooth_relu_deriv(v, spec); });
}

Eigen::MatrixXd lift_batch(const Eigen::MatrixXd& inputs, int width) {
  Eigen::MatrixXd lifted = Eigen::MatrixXd::Zero(width, inputs.cols());
  const Eigen::Index rows = std::min<Eigen::Index>(width, inputs.rows());
  lifted.topRows(rows) = inputs.topRows(rows);
  return lifted;
}

void require_finite(const Eigen::MatrixXd& m, int layer) {
  if (!m.allFinite()) {
    throw NumericalError("non-finite value in layer state phi_" + std::to_string(layer));
  }
}

BatchTrace forward_batch(const Theta& theta, const Eigen::MatrixXd& inputs,
                         const FracNetConfig& cfg, Update update) {
  cfg.validate();
  theta.check_shapes(cfg);
  if (inputs.rows() != cfg.input_dim) {
    throw DimensionError("input has length " + std::to_string(inputs.rows()) + ", expected " +
                         std::to_string(cfg.input_dim));
  }
  const int L = cfg.layers;
  const double tau = cfg.tau();
  const auto a = l1_coefficients(cfg.gamma, L);

  BatchTrace trace;
  trace.phi.reserve(static_cast<std::size_t>(L) + 1);
  trace.phi.push_back(lift_batch(inputs, cfg.hidden_width));
  require_finite(trace.phi[0], 0);

  for (int j = 1; j <= L - 1; ++j) {
    const auto& prev = trace.phi[static_cast<std::size_t>(j - 1)];
    Eigen::MatrixXd z = theta.W[static_cast<std::size_t>(j - 1)] * prev;
    z.colwise() += theta.b[static_cast<std::size_t>(j - 1)];
    Eigen::MatrixXd next;
    if (j == 1) {
      next = activate(z, cfg.activation);
    } else if (update == Update::Euler) {
      next = prev + cfg.step * activate(z, cfg.activation);
    } else {
      next = prev + tau * activate(z, cfg.activation);
      for (int k = 0; k <= j - 2; ++k) {
        next -= a[static_cast<std::size_t>(j - 1 - k)] *
                (trace.phi[static_cast<std::size_t>(k + 1)] - trace.phi[static_cast<std::size_t>(k)]);
      }
    }
    require_finite(next, j);
    trace.z.push_back(std::move(z));
    trace.phi.push_back(std::move(next));
  }
  trace.phi.push_back(theta.W[static_cast<std::size_t>(L - 1)] * trace.phi[static_cast<std::size_t>(L - 1)]);
  require_finite(trace.phi.back(), L);
  return trace;
}

ForwardTrace single_column(const BatchTrace& batch) {
  ForwardTrace trace;
  for (const auto& p : batch.phi) trace.phi.emplace_back(p.col(0));
  for (const auto& z : batch.z) trace.z.emplace_back(z.col(0));
  return trace;
}

// Reverse pass of forward_batch (fractional update). bar[m] accumulates
// dJ/dphi_m; equation j only feeds states with index < j, so bar[j] is
// final by the time equation j is visited in descending order.
//
// The printed optimality system evaluates sigma' at W_j phi_{j+1} + b_j and
// drops tau from the weight derivatives of the hidden layers; exact
// differentiation of the forward map gives sigma'(z_j) = sigma'(W_j phi_j + b_j)
// and a tau factor on every layer j >= 1. The finite-difference tests pin this.
std::vector<Eigen::MatrixXd> reverse_batch(const BatchTrace& trace, const Theta& theta,
                                           const Eigen::MatrixXd& terminal,
                                           const FracNetConfig& cfg, Gradient* grad) {
  const int L = cfg.layers;
  const double tau = cfg.tau();
  const auto a = l1_coefficients(cfg.gamma, L);
  const auto Ls = static_cast<std::size_t>(L);

  std::vector<Eigen::MatrixXd> bar(Ls + 1);
  for (std::size_t m = 0; m < Ls; ++m) bar[m] = Eigen::MatrixXd::Zero(trace.phi[m].rows(), terminal.cols());
  bar[Ls] = terminal;

  bar[Ls - 1] += theta.W[Ls - 1].transpose() * terminal;
  if (grad) grad->dW[Ls - 1] += terminal * trace.phi[Ls - 1].transpose();

  for (int j = L - 1; j >= 2; --j) {
    const auto js = static_cast<std::size_t>(j);
    const Eigen::MatrixXd& delta = bar[js];
    const Eigen::MatrixXd s = delta.cwiseProduct(activate_deriv(trace.z[js - 1], cfg.activation));
    if (grad) {
      grad->dW[js - 1] += tau * s * trace.phi[js - 1].transpose();
      grad->db[js - 1] += tau * s.rowwise().sum();
    }
    bar[js - 1] += delta + tau * (theta.W[js - 1].transpose() * s);
    for (int k = 0; k <= j - 2; ++k) {
      const double weight = a[static_cast<std::size_t>(j - 1 - k)];
      bar[static_cast<std::size_t>(k + 1)] -= weight * delta;
      bar[static_cast<std::size_t>(k)] += weight * delta;
    }
  }

  if (grad) {
    const Eigen::MatrixXd s = bar[1].cwiseProduct(activate_deriv(trace.z[0], cfg.activation));
    grad->dW[0] += s * trace.phi[0].transpose();
    grad->db[0] += s.rowwise().sum();
  }
  return bar;
}

void check_batch(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                 const FracNetConfig& cfg) {
  if (inputs.cols() == 0) throw DimensionError("empty training batch");
  if (inputs.cols() != targets.cols()) {
    throw DimensionError("batch has " + std::to_string(inputs.cols()) + " inputs but " +
                         std::to_string(targets.cols()) + " targets");
  }
  if (targets.rows() != cfg.output_dim) {
    throw DimensionError("targets have length " + std::to_string(targets.rows()) +
                         ", expected " + std::to_string(cfg.output_dim));
  }
}

}  // namespace

Eigen::VectorXd lift_input(const Eigen::VectorXd& xi, int width) { return lift_batch(xi, width).col(0); }

ForwardTrace forward(const Theta& theta, const Eigen::VectorXd& xi, const FracNetConfig& cfg) {
  return single_column(forward_batch(theta, xi, cfg, Update::Fractional));
}

ForwardTrace resnet_forward(const Theta& theta, const Eigen::VectorXd& xi, const FracNetConfig& cfg) {
  return single_column(forward_batch(theta, xi, cfg, Update::Euler));
}

double loss(const Theta& theta, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            const FracNetConfig& cfg) {
  check_batch(inputs, targets, cfg);
  const auto trace = forward_batch(theta, inputs, cfg, Update::Fractional);
  const double n = static_cast<double>(inputs.cols());
  return 0.5 / n * (trace.phi.back() - targets).squaredNorm() + 0.5 * cfg.lambda * theta.squared_norm();
}

std::vector<Eigen::VectorXd> adjoint(const ForwardTrace& trace, const Theta& theta,
                                     const Eigen::VectorXd& terminal, const FracNetConfig& cfg) {
  cfg.validate();
  theta.check_shapes(cfg);
  const auto L = static_cast<std::size_t>(cfg.layers);
  if (trace.phi.size() != L + 1 || trace.z.size() != L - 1) {
    throw DimensionError("forward trace does not belong to a " + std::to_string(L) + "-layer network");
  }
  if (terminal.size() != cfg.output_dim || trace.output().size() != cfg.output_dim) {
    throw DimensionError("terminal adjoint length differs from the output dimension");
  }
  BatchTrace batch;
  for (const auto& p : trace.phi) batch.phi.emplace_back(p);
  for (const auto& z : trace.z) batch.z.emplace_back(z);
  auto bar = reverse_batch(batch, theta, terminal, cfg, nullptr);

  std::vector<Eigen::VectorXd> psi(L + 1);
  psi[L] = terminal;
  for (std::size_t j = 1; j < L; ++j) psi[j] = -bar[j].col(0);
  return psi;
}

LossGradient gradient(const Theta& theta, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const FracNetConfig& cfg) {
  check_batch(inputs, targets, cfg);
  const auto trace = forward_batch(theta, inputs, cfg, Update::Fractional);
  const double n = static_cast<double>(inputs.cols());
  const Eigen::MatrixXd misfit = trace.phi.back() - targets;

  LossGradient out;
  out.loss = 0.5 / n * misfit.squaredNorm() + 0.5 * cfg.lambda * theta.squared_norm();
  out.grad = Gradient::zeros_like(theta);
  reverse_batch(trace, theta, misfit / n, cfg, &out.grad);
  for (std::size_t j = 0; j < theta.W.size(); ++j) out.grad.dW[j] += cfg.lambda * theta.W[j];
  for (std::size_t j = 0; j < theta.b.size(); ++j) out.grad.db[j] += cfg.lambda * theta.b[j];
  return out;
}

Eigen::VectorXd closed_form_oracle(const Theta& theta, const Eigen::VectorXd& xi,
                                   const FracNetConfig& cfg) {
  cfg.validate();
  theta.check_shapes(cfg);
  if (cfg.layers < 2 || cfg.layers > 4) {
    throw ConfigError("closed form is available for L in {2,3,4}, got " + std::to_string(cfg.layers));
  }
  if (xi.size() != cfg.input_dim) throw DimensionError("input length differs from input_dim");

  const auto& act = cfg.activation;
  const Eigen::VectorXd phi0 = lift_input(xi, cfg.hidden_width);
  const Eigen::VectorXd s0 = smooth_relu(Eigen::VectorXd(theta.W[0] * phi0 + theta.b[0]), act);
  if (cfg.layers == 2) return theta.W[1] * s0;

  const double tau = cfg.tau();
  const auto a = l1_coefficients(cfg.gamma, 3);
  const double a1 = a[1];
  const Eigen::VectorXd& phi1 = s0;
  const Eigen::VectorXd s1 = smooth_relu(Eigen::VectorXd(theta.W[1] * phi1 + theta.b[1]), act);
  const Eigen::VectorXd phi2 = (1.0 - a1) * s0 + tau * s1 + a1 * phi0;
  if (cfg.layers == 3) return theta.W[2] * phi2;

  const double a2 = a[2];
  const Eigen::VectorXd s2 = smooth_relu(Eigen::VectorXd(theta.W[2] * phi2 + theta.b[2]), act);
  // The phi_0 weight is a1 + a2 - a1^2, so that the weights of phi_0 and
  // sigma(z_0) sum to one when tau = 0.
  const double alpha0 = 1.0 - a1 + a1 * a1 - a2;
  const double alpha1 = (1.0 - a1) * tau;
  const double alpha2 = tau;
  const double alpha3 = a1 + a2 - a1 * a1;
  return theta.W[3] * (alpha0 * s0 + alpha1 * s1 + alpha2 * s2 + alpha3 * phi0);
}

double nu(double t, const ActivationSpec& spec, int derivative) {
  auto f = [&](double x) {
    switch (derivative) {
      case 0: return smooth_relu(x, spec);
      case 1: return smooth_relu_deriv(x, spec);
      case 2: return smooth_relu_second_deriv(x, spec);
      default: throw ConfigError("nu derivative order must be 0, 1 or 2");
    }
  };
  return f(t + 1.0) + f(t - 1.0) - 2.0 * f(t);
}

NuDecayReport nu_decay_check(const ActivationSpec& spec, const std::vector<double>& t_grid) {
  spec.validate();
  NuDecayReport report;
  report.max_violation = -std::numeric_limits<double>::infinity();
  for (double t : t_grid) {
    const double bound = 20.0 * std::pow(1.0 + std::abs(t), -1.5);
    for (int k = 0; k <= 2; ++k) {
      const double excess = std::abs(nu(t, spec, k)) - bound;
      report.max_violation = std::max(report.max_violation, excess);
      if (excess > 0.0) ++report.violations;
    }
  }
  report.holds = report.violations == 0;
  return report;
}

}  // namespace fdnn::fracnet
