#pragma once

// Dense BFGS with a strong-Wolfe line search (bracketing + cubic-interpolation
// zoom). The full inverse-Hessian approximation is stored, which is fine for
// the few thousand parameters of the surrogate networks.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fdnn::optim {

struct LineSearchConfig {
  double initial_step = 1.0;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_trials = 40;
};

struct BfgsConfig {
  int max_iterations = 1600;
  /// Stop when ||grad||_inf <= gradient_tolerance.
  double gradient_tolerance = 1e-8;
  LineSearchConfig line_search{};
  /// The inverse-Hessian update is skipped when s^T y <= curvature_floor.
  double curvature_floor = 1e-12;

  void validate() const;
};

/// Writes the gradient into `grad` (already sized) and returns the objective value.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

enum class StopReason { GradientTolerance, MaxIterations, LineSearchFailure };

std::string to_string(StopReason reason);

struct IterationInfo {
  int iteration = 0;  // 1-based count of accepted steps
  double loss = 0.0;
  double gradient_norm = 0.0;  // infinity norm
  double step_length = 0.0;
  bool hessian_updated = false;
  const Eigen::VectorXd* x = nullptr;
  const Eigen::MatrixXd* inverse_hessian = nullptr;
};

using IterationCallback = std::function<void(const IterationInfo&)>;

struct OptimResult {
  Eigen::VectorXd x;
  /// Entry 0 is the initial point; entry k follows the k-th accepted step.
  std::vector<double> loss_history;
  std::vector<double> gradient_norm_history;
  std::vector<double> step_history;
  int iterations = 0;
  bool converged = false;
  StopReason reason = StopReason::MaxIterations;
};

/// Throws NumericalError when the objective returns a non-finite loss or gradient.
OptimResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0,
                          const BfgsConfig& cfg, const IterationCallback& on_iteration = {});

/// Header plus one CSV row per history entry: iteration,loss,gradient_norm,step_length.
void write_log_csv(std::ostream& out, const OptimResult& result);

}  // namespace fdnn::optim
