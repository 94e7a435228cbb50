#include "fdnn/pde.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fdnn/error.hpp"

namespace fdnn::pde {

void GridConfig::validate() const {
  if (m < 2) throw ConfigError("grid needs at least 2 interior points per direction, got " + std::to_string(m));
}

bool PdeParams::in_box() const {
  return xi1 >= kLower && xi1 <= kUpper && xi2 >= kLower && xi2 <= kUpper;
}

void PdeParams::validate() const {
  if (!in_box()) {
    throw ConfigError("parameters (" + std::to_string(xi1) + ", " + std::to_string(xi2) +
                      ") lie outside [0.01, 10]^2");
  }
}

PdeParams PdeParams::from_vector(const Eigen::VectorXd& xi) {
  if (xi.size() != 2) throw DimensionError("diffusion-reaction model takes 2 parameters");
  return {xi(0), xi(1)};
}

DiscreteField source_term(const GridConfig& grid) {
  grid.validate();
  DiscreteField f{Eigen::VectorXd(grid.dofs()), grid};
  const double two_pi = 2.0 * std::numbers::pi;
  for (int j = 0; j < grid.m; ++j) {
    for (int i = 0; i < grid.m; ++i) {
      f.values(grid.index(i, j)) = 100.0 * std::sin(two_pi * grid.x1(i)) * std::sin(two_pi * grid.x2(j));
    }
  }
  return f;
}

namespace {

void guard_exponent(double u, const PdeParams& xi) {
  const double arg = xi.xi1 * u;
  if (!(std::abs(arg) <= 700.0)) {
    throw NumericalError("reaction exponent xi_1 * u = " + std::to_string(arg) + " exceeds 700");
  }
}

void check_field(const DiscreteField& u) {
  u.grid.validate();
  if (u.values.size() != u.grid.dofs()) {
    throw DimensionError("field has " + std::to_string(u.values.size()) + " values, grid has " +
                         std::to_string(u.grid.dofs()) + " nodes");
  }
}

}  // namespace

double reaction(double u, const PdeParams& xi) {
  guard_exponent(u, xi);
  return xi.xi2 / xi.xi1 * std::expm1(xi.xi1 * u);
}

double reaction_deriv(double u, const PdeParams& xi) {
  guard_exponent(u, xi);
  return xi.xi2 * std::exp(xi.xi1 * u);
}

Eigen::VectorXd apply_laplacian(const Eigen::VectorXd& u, const GridConfig& grid) {
  const int m = grid.m;
  const double inv_h2 = 1.0 / (grid.mesh_width() * grid.mesh_width());
  Eigen::VectorXd out(u.size());
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const Eigen::Index p = grid.index(i, j);
      double acc = 4.0 * u(p);
      if (i > 0) acc -= u(p - 1);
      if (i < m - 1) acc -= u(p + 1);
      if (j > 0) acc -= u(p - m);
      if (j < m - 1) acc -= u(p + m);
      out(p) = acc * inv_h2;
    }
  }
  return out;
}

DiscreteField residual(const DiscreteField& u, const PdeParams& xi, bool include_reaction) {
  check_field(u);
  DiscreteField F{apply_laplacian(u.values, u.grid), u.grid};
  F.values -= source_term(u.grid).values;
  if (include_reaction) {
    for (Eigen::Index p = 0; p < F.values.size(); ++p) F.values(p) += reaction(u.values(p), xi);
  }
  return F;
}

Eigen::VectorXd jacobian_apply(const DiscreteField& u, const Eigen::VectorXd& v, const PdeParams& xi,
                               bool include_reaction) {
  check_field(u);
  if (v.size() != u.values.size()) throw DimensionError("direction length differs from field length");
  Eigen::VectorXd out = apply_laplacian(v, u.grid);
  if (include_reaction) {
    for (Eigen::Index p = 0; p < out.size(); ++p) out(p) += reaction_deriv(u.values(p), xi) * v(p);
  }
  return out;
}

DiscreteField solve_forward(const PdeParams& xi, const GridConfig& grid, const SolverOptions& options,
                            SolveStats* stats) {
  grid.validate();
  xi.validate();
  const bool react = options.include_reaction;

  DiscreteField u{Eigen::VectorXd::Zero(grid.dofs()), grid};
  Eigen::VectorXd F = residual(u, xi, react).values;
  double F_norm = F.norm();
  SolveStats local;

  // g_u(u) is reused by every Jacobian action within one Newton step.
  Eigen::VectorXd diag(grid.dofs());
  for (int it = 0; it < options.max_newton && F_norm > options.newton_tol; ++it) {
    for (Eigen::Index p = 0; p < diag.size(); ++p) diag(p) = react ? reaction_deriv(u.values(p), xi) : 0.0;
    auto J = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return apply_laplacian(v, grid) + diag.cwiseProduct(v);
    };
    const auto lin = gmres(J, Eigen::VectorXd(-F), options.forcing, options.gmres_restart,
                           options.gmres_max_iterations);
    local.gmres_iterations += lin.iterations;
    local.inner_relative_residuals.push_back(lin.relative_residual);

    // Step halving guards against a residual increase; it stays inactive in
    // the admissible box where g is monotone.
    double lambda = 1.0;
    DiscreteField trial{u.values + lin.x, grid};
    Eigen::VectorXd F_trial;
    for (int halving = 0;; ++halving) {
      bool finite = true;
      try {
        F_trial = residual(trial, xi, react).values;
      } catch (const NumericalError&) {
        finite = false;
      }
      if (finite && F_trial.norm() < F_norm) break;
      if (halving == options.max_step_halvings) {
        if (!finite) throw NumericalError("Newton step overflows the reaction term after step halving");
        break;
      }
      lambda *= 0.5;
      trial.values = u.values + lambda * lin.x;
    }
    u = std::move(trial);
    F = std::move(F_trial);
    F_norm = F.norm();
    ++local.newton_iterations;
  }
  local.residual_norm = F_norm;
  if (stats) *stats = local;
  if (!(F_norm <= options.newton_tol)) {
    throw ConvergenceError("Newton-GMRES did not reach ||F|| <= " + std::to_string(options.newton_tol) +
                               " after " + std::to_string(local.newton_iterations) + " iterations",
                           F_norm);
  }
  return u;
}

}  // namespace fdnn::pde
