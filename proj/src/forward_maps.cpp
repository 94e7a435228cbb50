#include "fdnn/forward_maps.hpp"

#include "fdnn/error.hpp"

namespace fdnn::mcmc {

MisfitFunction ForwardMap::bind_data(const Eigen::VectorXd& data) const {
  if (data.size() != output_dim()) {
    throw DimensionError("data has length " + std::to_string(data.size()) + ", forward map produces " +
                         std::to_string(output_dim()));
  }
  return [this, data](const Eigen::VectorXd& xi) { return (data - evaluate(xi)).squaredNorm(); };
}

FullModelMap::FullModelMap(pde::GridConfig grid, pde::SolverOptions options)
    : grid_(grid), options_(options) {
  grid_.validate();
}

Eigen::VectorXd FullModelMap::evaluate(const Eigen::VectorXd& xi) const {
  return pde::solve_forward(pde::PdeParams::from_vector(xi), grid_, options_).values;
}

SurrogateMap::SurrogateMap(Checkpoint checkpoint, pod::PodBasis basis, std::string identity)
    : checkpoint_(std::move(checkpoint)), basis_(std::move(basis)), identity_(std::move(identity)) {
  checkpoint_.config.validate();
  checkpoint_.theta.check_shapes(checkpoint_.config);
  if (checkpoint_.config.output_dim != basis_.rank()) {
    throw DimensionError("network output dimension " + std::to_string(checkpoint_.config.output_dim) +
                         " differs from POD rank " + std::to_string(basis_.rank()));
  }
}

Eigen::VectorXd SurrogateMap::reduced(const Eigen::VectorXd& xi) const {
  return fracnet::forward(checkpoint_.theta, xi, checkpoint_.config).output();
}

Eigen::VectorXd SurrogateMap::evaluate(const Eigen::VectorXd& xi) const {
  return pod::reconstruct(basis_, reduced(xi));
}

MisfitFunction SurrogateMap::bind_data(const Eigen::VectorXd& data) const {
  if (data.size() != output_dim()) {
    throw DimensionError("data has length " + std::to_string(data.size()) + ", surrogate produces " +
                         std::to_string(output_dim()));
  }
  Eigen::VectorXd projected = pod::project(basis_, data);
  const double orthogonal = (data - basis_.V * projected).squaredNorm();
  return [this, projected = std::move(projected), orthogonal](const Eigen::VectorXd& xi) {
    return (projected - reduced(xi)).squaredNorm() + orthogonal;
  };
}

}  // namespace fdnn::mcmc
