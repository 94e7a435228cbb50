#pragma once

#include <cmath>
#include <vector>

namespace fdnn::pde {

template <typename Apply>
GmresResult gmres(const Apply& apply, const Eigen::VectorXd& b, double rel_tol, int restart,
                  int max_iterations) {
  const Eigen::Index n = b.size();
  GmresResult result;
  result.x = Eigen::VectorXd::Zero(n);
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    result.converged = true;
    return result;
  }
  const double target = rel_tol * b_norm;

  Eigen::MatrixXd basis(n, restart + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(restart + 1, restart);
  std::vector<double> cs(static_cast<std::size_t>(restart)), sn(static_cast<std::size_t>(restart));
  Eigen::VectorXd g(restart + 1);

  Eigen::VectorXd r = b;
  double r_norm = b_norm;
  while (result.iterations < max_iterations) {
    basis.col(0) = r / r_norm;
    g.setZero();
    g(0) = r_norm;
    hess.setZero();
    int k = 0;
    for (; k < restart && result.iterations < max_iterations; ++k) {
      Eigen::VectorXd w = apply(Eigen::VectorXd(basis.col(k)));
      // Modified Gram-Schmidt.
      for (int i = 0; i <= k; ++i) {
        hess(i, k) = basis.col(i).dot(w);
        w -= hess(i, k) * basis.col(i);
      }
      hess(k + 1, k) = w.norm();
      if (hess(k + 1, k) > 0.0) basis.col(k + 1) = w / hess(k + 1, k);
      for (int i = 0; i < k; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double t = cs[iu] * hess(i, k) + sn[iu] * hess(i + 1, k);
        hess(i + 1, k) = -sn[iu] * hess(i, k) + cs[iu] * hess(i + 1, k);
        hess(i, k) = t;
      }
      const auto ku = static_cast<std::size_t>(k);
      const double denom = std::hypot(hess(k, k), hess(k + 1, k));
      cs[ku] = hess(k, k) / denom;
      sn[ku] = hess(k + 1, k) / denom;
      hess(k, k) = denom;
      hess(k + 1, k) = 0.0;
      g(k + 1) = -sn[ku] * g(k);
      g(k) = cs[ku] * g(k);
      ++result.iterations;
      if (std::abs(g(k + 1)) <= target) {
        ++k;
        break;
      }
    }
    const Eigen::VectorXd y =
        hess.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    result.x += basis.leftCols(k) * y;
    r = b - apply(result.x);
    r_norm = r.norm();
    if (r_norm <= target) {
      result.converged = true;
      break;
    }
  }
  result.relative_residual = r_norm / b_norm;
  return result;
}

}  // namespace fdnn::pde
