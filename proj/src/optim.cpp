#include "fdnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn::optim {

void BfgsConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (!(gradient_tolerance >= 0.0)) throw ConfigError("gradient_tolerance must be nonnegative");
  const auto& ls = line_search;
  if (!(0.0 < ls.c1 && ls.c1 < ls.c2 && ls.c2 < 1.0)) {
    throw ConfigError("line search constants must satisfy 0 < c1 < c2 < 1");
  }
  if (!(ls.initial_step > 0.0)) throw ConfigError("initial step must be positive");
  if (ls.max_trials < 1) throw ConfigError("line search needs at least one trial");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::LineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

namespace {

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd grad;
};

struct Trial {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;  // directional derivative along p
};

Evaluation evaluate(const Objective& objective, const Eigen::VectorXd& x) {
  Evaluation e;
  e.grad = Eigen::VectorXd::Zero(x.size());
  e.value = objective(x, e.grad);
  if (!std::isfinite(e.value) || !e.grad.allFinite()) {
    throw NumericalError("objective returned a non-finite value or gradient");
  }
  return e;
}

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// interval and away from its ends; falls back to bisection.
double cubic_minimizer(const Trial& lo, const Trial& hi) {
  const double a = lo.alpha, b = hi.alpha;
  const double d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
  const double disc = d1 * d1 - lo.slope * hi.slope;
  const double left = std::min(a, b), right = std::max(a, b);
  const double margin = 0.1 * (right - left);
  double x = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = hi.slope - lo.slope + 2.0 * d2;
    if (denom != 0.0) {
      const double candidate = b - (b - a) * (hi.slope + d2 - d1) / denom;
      if (std::isfinite(candidate)) x = candidate;
    }
  }
  if (x < left + margin || x > right - margin) x = 0.5 * (a + b);
  return x;
}

struct LineSearchOutcome {
  bool ok = false;
  double alpha = 0.0;
  Eigen::VectorXd x;
  Evaluation eval;
};

LineSearchOutcome strong_wolfe(const Objective& objective, const Eigen::VectorXd& x,
                               const Evaluation& current, const Eigen::VectorXd& p,
                               const LineSearchConfig& ls) {
  const double f0 = current.value;
  const double g0 = current.grad.dot(p);
  int trials = 0;

  auto probe = [&](double alpha, LineSearchOutcome& out) {
    out.alpha = alpha;
    out.x = x + alpha * p;
    out.eval = evaluate(objective, out.x);
    ++trials;
    return Trial{alpha, out.eval.value, out.eval.grad.dot(p)};
  };

  LineSearchOutcome best;
  best.ok = false;
  Trial prev{0.0, f0, g0};
  double alpha = ls.initial_step;
  LineSearchOutcome out;

  auto zoom = [&](Trial lo, Trial hi, LineSearchOutcome lo_state) -> LineSearchOutcome {
    while (trials < ls.max_trials) {
      const double a = cubic_minimizer(lo, hi);
      LineSearchOutcome trial_state;
      const Trial t = probe(a, trial_state);
      if (t.value > f0 + ls.c1 * a * g0 || t.value >= lo.value) {
        hi = t;
      } else {
        if (std::abs(t.slope) <= -ls.c2 * g0) {
          trial_state.ok = true;
          return trial_state;
        }
        if (t.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = t;
        lo_state = std::move(trial_state);
      }
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
    }
    // Trial budget exhausted: hand back the best sufficient-decrease point, if any.
    lo_state.ok = false;
    return lo_state;
  };

  LineSearchOutcome prev_state;
  prev_state.alpha = 0.0;
  prev_state.x = x;
  prev_state.eval = current;

  for (int i = 0; trials < ls.max_trials; ++i) {
    const Trial t = probe(alpha, out);
    if (t.value > f0 + ls.c1 * alpha * g0 || (i > 0 && t.value >= prev.value)) {
      return zoom(prev, t, prev_state);
    }
    if (std::abs(t.slope) <= -ls.c2 * g0) {
      out.ok = true;
      return out;
    }
    if (t.slope >= 0.0) return zoom(t, prev, out);
    prev = t;
    prev_state = out;
    alpha *= 2.0;
  }
  prev_state.ok = false;
  return prev_state;
}

}  // namespace

OptimResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0,
                          const BfgsConfig& cfg, const IterationCallback& on_iteration) {
  cfg.validate();
  const Eigen::Index n = x0.size();
  OptimResult result;
  result.x = x0;
  Evaluation current = evaluate(objective, result.x);
  result.loss_history.push_back(current.value);
  result.gradient_norm_history.push_back(current.grad.lpNorm<Eigen::Infinity>());
  result.step_history.push_back(0.0);

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;

  while (true) {
    if (result.gradient_norm_history.back() <= cfg.gradient_tolerance) {
      result.converged = true;
      result.reason = StopReason::GradientTolerance;
      break;
    }
    if (result.iterations >= cfg.max_iterations) {
      result.reason = StopReason::MaxIterations;
      break;
    }

    Eigen::VectorXd p = -H * current.grad;
    if (!(p.dot(current.grad) < 0.0)) {
      // Lost descent through round-off; restart from steepest descent.
      H.setIdentity();
      p = -current.grad;
    }
    auto ls = strong_wolfe(objective, result.x, current, p, cfg.line_search);
    if (!ls.ok) {
      // Accept a sufficient-decrease point if the search produced one, then stop.
      if (ls.alpha > 0.0 && ls.eval.value < current.value) {
        result.x = ls.x;
        current = std::move(ls.eval);
        ++result.iterations;
        result.loss_history.push_back(current.value);
        result.gradient_norm_history.push_back(current.grad.lpNorm<Eigen::Infinity>());
        result.step_history.push_back(ls.alpha);
      }
      result.reason = StopReason::LineSearchFailure;
      break;
    }

    const Eigen::VectorXd s = ls.x - result.x;
    const Eigen::VectorXd y = ls.eval.grad - current.grad;
    const double sy = s.dot(y);
    bool updated = false;
    if (sy > cfg.curvature_floor) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
      const Eigen::VectorXd rho_s = rho * s;
      H.noalias() += ((rho * yHy + 1.0) * rho_s) * s.transpose();
      H.noalias() -= Hy * rho_s.transpose();
      H.noalias() -= rho_s * Hy.transpose();
      updated = true;
    }

    result.x = ls.x;
    current = std::move(ls.eval);
    ++result.iterations;
    result.loss_history.push_back(current.value);
    result.gradient_norm_history.push_back(current.grad.lpNorm<Eigen::Infinity>());
    result.step_history.push_back(ls.alpha);

    if (on_iteration) {
      IterationInfo info;
      info.iteration = result.iterations;
      info.loss = current.value;
      info.gradient_norm = result.gradient_norm_history.back();
      info.step_length = ls.alpha;
      info.hessian_updated = updated;
      info.x = &result.x;
      info.inverse_hessian = &H;
      on_iteration(info);
    }
  }
  return result;
}

void write_log_csv(std::ostream& out, const OptimResult& result) {
  out << "iteration,loss,gradient_norm,step_length\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    out << i << ',' << io::format_double(result.loss_history[i]) << ','
        << io::format_double(result.gradient_norm_history[i]) << ','
        << io::format_double(result.step_history[i]) << '\n';
  }
}

}  // namespace fdnn::optim
