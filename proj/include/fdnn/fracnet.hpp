#pragma once

// Fractional deep neural network (fDNN): a residual network whose layer update
// is the L1 discretization of a Caputo fractional ODE, so every hidden layer is
// coupled to all earlier layers through the weights a_m.
//
// Layer states (L layers, hidden width n, output width k):
//   phi_0 = lift(xi)                     input zero-padded/truncated to length n
//   phi_1 = sigma(W_0 phi_0 + b_0)
//   phi_j = phi_{j-1} - sum_{k=0}^{j-2} a_{j-1-k} (phi_{k+1} - phi_k)
//           + tau sigma(W_{j-1} phi_{j-1} + b_{j-1}),        2 <= j <= L-1
//   phi_L = W_{L-1} phi_{L-1}
// with tau = h^gamma Gamma(2 - gamma).

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace fdnn::fracnet {

struct ActivationSpec {
  double epsilon = 0.1;

  void validate() const;
};

/// Smooth ReLU: x above epsilon, 0 below -epsilon, quadratic blend in between.
double smooth_relu(double x, const ActivationSpec& spec);
double smooth_relu_deriv(double x, const ActivationSpec& spec);
/// Piecewise second derivative: 1/(2 epsilon) on [-epsilon, epsilon], 0 elsewhere.
double smooth_relu_second_deriv(double x, const ActivationSpec& spec);

Eigen::VectorXd smooth_relu(const Eigen::VectorXd& x, const ActivationSpec& spec);
Eigen::VectorXd smooth_relu_deriv(const Eigen::VectorXd& x, const ActivationSpec& spec);

/// Euler Gamma function via the Lanczos approximation (g = 7, 9 terms).
double euler_gamma(double x);

/// L1-scheme weights a_m = (m+1)^{1-gamma} - m^{1-gamma}, m = 0..count-1.
std::vector<double> l1_coefficients(double gamma, int count);

struct FracNetConfig {
  int layers = 4;
  int input_dim = 2;
  int hidden_width = 15;
  int output_dim = 400;
  double gamma = 0.5;
  double step = 1.0 / 3.0;
  double lambda = 1e-6;
  ActivationSpec activation{};

  void validate() const;
  /// tau = h^gamma Gamma(2 - gamma).
  double tau() const;
};

/// Trainable parameters: L weight matrices, L-1 bias vectors (the output layer is linear).
/// W_0 is n x n because the input is lifted to the hidden width.
struct Theta {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;

  static Theta zeros(const FracNetConfig& cfg);
  /// Zero biases, weights uniform on [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
  static Theta initialize(const FracNetConfig& cfg, std::uint64_t seed);

  /// Throws DimensionError unless shapes match cfg.
  void check_shapes(const FracNetConfig& cfg) const;
  std::size_t parameter_count() const;
  double squared_norm() const;

  /// Layer order: W_0 (column-major), b_0, W_1, b_1, ..., W_{L-1}.
  Eigen::VectorXd flatten() const;
  static Theta unflatten(const FracNetConfig& cfg, const Eigen::VectorXd& flat);
};

struct Gradient {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static Gradient zeros_like(const Theta& theta);
  /// Same ordering as Theta::flatten.
  Eigen::VectorXd flatten() const;
};

/// Cached states of one forward pass. phi has L+1 entries, z holds the
/// preactivations z_j = W_j phi_j + b_j for j = 0..L-2.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> phi;
  std::vector<Eigen::VectorXd> z;

  const Eigen::VectorXd& output() const { return phi.back(); }
};

Eigen::VectorXd lift_input(const Eigen::VectorXd& xi, int width);

ForwardTrace forward(const Theta& theta, const Eigen::VectorXd& xi, const FracNetConfig& cfg);
/// Standard ResNet with forward-Euler update; gamma is ignored.
ForwardTrace resnet_forward(const Theta& theta, const Eigen::VectorXd& xi,
                            const FracNetConfig& cfg);

/// Mean squared error over the columns of inputs/targets plus (lambda/2)||theta||^2.
double loss(const Theta& theta, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            const FracNetConfig& cfg);

/// Adjoint states psi_1..psi_L, returned in a vector of length L+1 (entry 0 is empty).
/// psi_L equals the terminal value dJ/dphi_L; for j < L the sign follows the
/// Lagrangian convention psi_j = -dJ/dphi_j, so psi_{L-1} = -W_{L-1}^T psi_L.
std::vector<Eigen::VectorXd> adjoint(const ForwardTrace& trace, const Theta& theta,
                                     const Eigen::VectorXd& terminal, const FracNetConfig& cfg);

struct LossGradient {
  double loss = 0.0;
  Gradient grad;
};

LossGradient gradient(const Theta& theta, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, const FracNetConfig& cfg);

/// Explicit linear-combination form of the network output for L in {2, 3, 4}.
Eigen::VectorXd closed_form_oracle(const Theta& theta, const Eigen::VectorXd& xi,
                                   const FracNetConfig& cfg);

struct NuDecayReport {
  bool holds = true;
  /// max over the grid and k = 0,1,2 of |nu^(k)(t)| - 20 (1 + |t|)^{-1.5}
  double max_violation = 0.0;
  std::size_t violations = 0;
};

/// nu(t) = sigma(t+1) + sigma(t-1) - 2 sigma(t) and its first two derivatives.
double nu(double t, const ActivationSpec& spec, int derivative = 0);
NuDecayReport nu_decay_check(const ActivationSpec& spec, const std::vector<double>& t_grid);

}  // namespace fdnn::fracnet
