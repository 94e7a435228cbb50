#pragma once

// Diffusion-reaction forward model on the unit square:
//
//   -Laplace(u) + g(u; xi) = f   in (0,1)^2,   u = 0 on the boundary,
//   g(u; xi) = (xi_2 / xi_1) (exp(xi_1 u) - 1),
//   f = 100 sin(2 pi x_1) sin(2 pi x_2),
//
// discretized with the 5-point centered-difference Laplacian on an m x m
// interior grid (mesh width 1/(m+1)) and solved by inexact Newton-GMRES.
//
// Unknowns are stored in lexicographic row-major order: node (i, j) with
// x_1 = (i+1) h, x_2 = (j+1) h sits at index j * m + i.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace fdnn::pde {

struct GridConfig {
  int m = 64;

  void validate() const;
  double mesh_width() const { return 1.0 / (m + 1); }
  Eigen::Index dofs() const { return static_cast<Eigen::Index>(m) * m; }
  Eigen::Index index(int i, int j) const { return static_cast<Eigen::Index>(j) * m + i; }
  double x1(int i) const { return (i + 1) * mesh_width(); }
  double x2(int j) const { return (j + 1) * mesh_width(); }
};

struct PdeParams {
  double xi1 = 1.0;
  double xi2 = 0.1;

  static constexpr double kLower = 0.01;
  static constexpr double kUpper = 10.0;

  bool in_box() const;
  /// Throws ConfigError outside [0.01, 10]^2.
  void validate() const;
  Eigen::Vector2d as_vector() const { return {xi1, xi2}; }
  static PdeParams from_vector(const Eigen::VectorXd& xi);
};

struct DiscreteField {
  Eigen::VectorXd values;
  GridConfig grid;
};

DiscreteField source_term(const GridConfig& grid);

/// Throws NumericalError when |xi_1 u| > 700.
double reaction(double u, const PdeParams& xi);
double reaction_deriv(double u, const PdeParams& xi);

/// 5-point Laplacian A u = (4 u_P - u_E - u_W - u_N - u_S) / h^2, zero Dirichlet data.
Eigen::VectorXd apply_laplacian(const Eigen::VectorXd& u, const GridConfig& grid);

/// F(u; xi) = A u + g(u; xi) - f. With include_reaction = false, g is dropped.
DiscreteField residual(const DiscreteField& u, const PdeParams& xi, bool include_reaction = true);

/// Jacobian action J(u) v = A v + g_u(u) .* v.
Eigen::VectorXd jacobian_apply(const DiscreteField& u, const Eigen::VectorXd& v, const PdeParams& xi,
                               bool include_reaction = true);

struct GmresResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Restarted GMRES(restart) for A x = b from x = 0, unpreconditioned; stops
/// when ||b - A x|| <= rel_tol ||b|| or after max_iterations inner steps.
template <typename Apply>
GmresResult gmres(const Apply& apply, const Eigen::VectorXd& b, double rel_tol, int restart,
                  int max_iterations);

struct SolverOptions {
  double newton_tol = 1e-6;   // absolute, on ||F||_2
  int max_newton = 50;
  double forcing = 1e-4;      // GMRES relative tolerance per Newton step
  int gmres_restart = 50;
  int gmres_max_iterations = 5000;
  int max_step_halvings = 10;
  bool include_reaction = true;
};

struct SolveStats {
  int newton_iterations = 0;
  int gmres_iterations = 0;
  double residual_norm = 0.0;
  /// Final relative residual of each inner solve, paired with its forcing tolerance.
  std::vector<double> inner_relative_residuals;
};

/// Inexact Newton-GMRES from u_0 = 0. Throws ConvergenceError (carrying the
/// last residual norm) after max_newton iterations.
DiscreteField solve_forward(const PdeParams& xi, const GridConfig& grid,
                            const SolverOptions& options = {}, SolveStats* stats = nullptr);

/// Stratified sample: for each dimension, n equal-width strata each receive one
/// point, strata order independently permuted. Rows are dimensions, columns samples.
Eigen::MatrixXd latin_hypercube(int n_samples, const std::vector<std::pair<double, double>>& bounds,
                                std::uint64_t seed);

}  // namespace fdnn::pde

#include "fdnn/detail/gmres.ipp"
