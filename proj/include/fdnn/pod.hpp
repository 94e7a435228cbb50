#pragma once

// Proper orthogonal decomposition of a snapshot matrix, plus the snapshot
// and basis file formats.
//
// Snapshot file:
//   FDNN-SNAPSHOTS 1
//   n_x <N_x>   n_s <N_s>   n_xi <N_xi>   (one key per line)
//   grid_m <m>  seed <seed> ...           (grid metadata and provenance)
//   end_header
//   parameters: N_xi x N_s float64 LE, column-major (column j is xi_j)
//   snapshots:  N_x  x N_s float64 LE, column-major (column j is u(xi_j))
//
// Basis file:
//   FDNN-POD-BASIS 1
//   n_x <N_x>  k <k>  n_singular <r>  ...
//   end_header
//   V: N_x x k float64 LE, column-major
//   singular values: r float64 LE

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <Eigen/Dense>

namespace fdnn::pod {

struct SnapshotSet {
  Eigen::MatrixXd parameters;  // N_xi x N_s
  Eigen::MatrixXd snapshots;   // N_x x N_s
  std::map<std::string, std::string> metadata;

  void validate() const;
};

struct PodBasis {
  Eigen::MatrixXd V;                      // N_x x k, orthonormal columns
  Eigen::VectorXd singular_values;        // all min(N_x, N_s) values, non-increasing
  std::map<std::string, std::string> metadata;

  Eigen::Index rank() const { return V.cols(); }
  Eigen::Index full_dim() const { return V.rows(); }
};

/// First k left singular vectors of S. Each column is sign-normalized so that
/// its entry of largest magnitude is positive.
PodBasis compute_pod(const Eigen::MatrixXd& S, Eigen::Index k);

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& u);
Eigen::MatrixXd project(const PodBasis& basis, const Eigen::MatrixXd& U);
Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& c);

/// sum_j ||u_j - V V^T u_j||_2^2 over the columns of S.
double projection_error(const Eigen::MatrixXd& V, const Eigen::MatrixXd& S);

void save_snapshots(const std::filesystem::path& path, const SnapshotSet& set);
SnapshotSet load_snapshots(const std::filesystem::path& path);

void save_basis(const std::filesystem::path& path, const PodBasis& basis);
PodBasis load_basis(const std::filesystem::path& path);

}  // namespace fdnn::pod
