#pragma once

// Parameter-to-observable maps used by the posterior: the full Newton-GMRES
// solve, and the POD + fDNN surrogate  Phi_hat(xi) = V net(xi).

#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "fdnn/checkpoint.hpp"
#include "fdnn/pde.hpp"
#include "fdnn/pod.hpp"

namespace fdnn::mcmc {

/// Returns ||d - Phi(xi)||_2^2 for a fixed data vector d.
using MisfitFunction = std::function<double(const Eigen::VectorXd& xi)>;

class ForwardMap {
 public:
  virtual ~ForwardMap() = default;

  virtual Eigen::Index parameter_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const = 0;
  /// full | surrogate:<checkpoint hash>:<basis hash>
  virtual std::string identity() const = 0;

  /// The returned function may keep a reference to this map.
  virtual MisfitFunction bind_data(const Eigen::VectorXd& data) const;
};

class FullModelMap final : public ForwardMap {
 public:
  FullModelMap(pde::GridConfig grid, pde::SolverOptions options = {});

  Eigen::Index parameter_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return grid_.dofs(); }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const override;
  std::string identity() const override { return "full"; }

 private:
  pde::GridConfig grid_;
  pde::SolverOptions options_;
};

class SurrogateMap final : public ForwardMap {
 public:
  SurrogateMap(Checkpoint checkpoint, pod::PodBasis basis, std::string identity);

  Eigen::Index parameter_dim() const override { return checkpoint_.config.input_dim; }
  Eigen::Index output_dim() const override { return basis_.full_dim(); }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const override;
  Eigen::VectorXd reduced(const Eigen::VectorXd& xi) const;
  std::string identity() const override { return identity_; }

  /// Works in reduced coordinates:
  /// ||d - V c||^2 = ||V^T d - c||^2 + ||(I - V V^T) d||^2 for orthonormal V.
  MisfitFunction bind_data(const Eigen::VectorXd& data) const override;

 private:
  Checkpoint checkpoint_;
  pod::PodBasis basis_;
  std::string identity_;
};

}  // namespace fdnn::mcmc
