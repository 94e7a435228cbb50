#include "fdnn/pod.hpp"

#include <fstream>

#include <Eigen/SVD>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn::pod {

namespace {

constexpr const char* kSnapshotMagic = "FDNN-SNAPSHOTS";
constexpr const char* kBasisMagic = "FDNN-POD-BASIS";

const char* const kSnapshotKeys[] = {"n_x", "n_s", "n_xi"};
const char* const kBasisKeys[] = {"n_x", "k", "n_singular"};

template <std::size_t N>
bool reserved(const std::string& key, const char* const (&keys)[N]) {
  for (const char* k : keys) {
    if (key == k) return true;
  }
  return false;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  io::write_doubles(out, {m.data(), static_cast<std::size_t>(m.size())});
}

Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  io::read_doubles(in, {m.data(), static_cast<std::size_t>(m.size())});
  return m;
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("'" + path.string() + "' has trailing bytes after the payload");
  }
}

Eigen::Index positive_dim(const io::Header& h, const char* key) {
  const auto v = h.get_int(key);
  if (v < 1) throw FormatError(std::string("header key '") + key + "' must be >= 1");
  return static_cast<Eigen::Index>(v);
}

}  // namespace

void SnapshotSet::validate() const {
  if (parameters.cols() != snapshots.cols()) {
    throw DimensionError("snapshot set has " + std::to_string(parameters.cols()) + " parameters but " +
                         std::to_string(snapshots.cols()) + " snapshots");
  }
  if (!parameters.allFinite() || !snapshots.allFinite()) {
    throw NumericalError("snapshot set contains non-finite entries");
  }
}

PodBasis compute_pod(const Eigen::MatrixXd& S, Eigen::Index k) {
  const Eigen::Index max_rank = std::min(S.rows(), S.cols());
  if (k < 1 || k > max_rank) {
    throw ConfigError("POD rank k=" + std::to_string(k) + " must lie in [1, " +
                      std::to_string(max_rank) + "]");
  }
  if (!S.allFinite()) throw NumericalError("snapshot matrix contains non-finite entries");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU);
  PodBasis basis;
  basis.singular_values = svd.singularValues();
  basis.V = svd.matrixU().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    basis.V.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis.V(arg, c) < 0.0) basis.V.col(c) *= -1.0;
  }
  return basis;
}

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& u) {
  if (u.size() != basis.full_dim()) {
    throw DimensionError("cannot project a vector of length " + std::to_string(u.size()) +
                         " onto a basis in R^" + std::to_string(basis.full_dim()));
  }
  return basis.V.transpose() * u;
}

Eigen::MatrixXd project(const PodBasis& basis, const Eigen::MatrixXd& U) {
  if (U.rows() != basis.full_dim()) throw DimensionError("snapshot rows differ from basis dimension");
  return basis.V.transpose() * U;
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& c) {
  if (c.size() != basis.rank()) {
    throw DimensionError("reduced vector has length " + std::to_string(c.size()) + ", basis rank is " +
                         std::to_string(basis.rank()));
  }
  return basis.V * c;
}

double projection_error(const Eigen::MatrixXd& V, const Eigen::MatrixXd& S) {
  if (V.rows() != S.rows()) throw DimensionError("basis and snapshots differ in row count");
  return (S - V * (V.transpose() * S)).squaredNorm();
}

void save_snapshots(const std::filesystem::path& path, const SnapshotSet& set) {
  set.validate();
  io::Header header;
  header.magic = kSnapshotMagic;
  header.set("n_x", static_cast<long long>(set.snapshots.rows()));
  header.set("n_s", static_cast<long long>(set.snapshots.cols()));
  header.set("n_xi", static_cast<long long>(set.parameters.rows()));
  for (const auto& [k, v] : set.metadata) {
    if (reserved(k, kSnapshotKeys)) throw FormatError("metadata key '" + k + "' is reserved");
    header.set(k, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  io::write_header(out, header);
  write_matrix(out, set.parameters);
  write_matrix(out, set.snapshots);
}

SnapshotSet load_snapshots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot file '" + path.string() + "'");
  const auto header = io::read_header(in, kSnapshotMagic);
  if (header.version != 1) throw FormatError("unsupported snapshot file version");
  const auto n_x = positive_dim(header, "n_x");
  const auto n_s = positive_dim(header, "n_s");
  const auto n_xi = positive_dim(header, "n_xi");

  SnapshotSet set;
  for (const auto& [k, v] : header.entries) {
    if (!reserved(k, kSnapshotKeys)) set.metadata[k] = v;
  }
  set.parameters = read_matrix(in, n_xi, n_s);
  set.snapshots = read_matrix(in, n_x, n_s);
  expect_eof(in, path);
  set.validate();
  return set;
}

void save_basis(const std::filesystem::path& path, const PodBasis& basis) {
  io::Header header;
  header.magic = kBasisMagic;
  header.set("n_x", static_cast<long long>(basis.V.rows()));
  header.set("k", static_cast<long long>(basis.V.cols()));
  header.set("n_singular", static_cast<long long>(basis.singular_values.size()));
  for (const auto& [k, v] : basis.metadata) {
    if (reserved(k, kBasisKeys)) throw FormatError("metadata key '" + k + "' is reserved");
    header.set(k, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  io::write_header(out, header);
  write_matrix(out, basis.V);
  io::write_doubles(out, {basis.singular_values.data(), static_cast<std::size_t>(basis.singular_values.size())});
}

PodBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open basis file '" + path.string() + "'");
  const auto header = io::read_header(in, kBasisMagic);
  if (header.version != 1) throw FormatError("unsupported basis file version");
  const auto n_x = positive_dim(header, "n_x");
  const auto k = positive_dim(header, "k");
  const auto r = positive_dim(header, "n_singular");

  PodBasis basis;
  for (const auto& [key, v] : header.entries) {
    if (!reserved(key, kBasisKeys)) basis.metadata[key] = v;
  }
  basis.V = read_matrix(in, n_x, k);
  basis.singular_values.resize(r);
  io::read_doubles(in, {basis.singular_values.data(), static_cast<std::size_t>(r)});
  expect_eof(in, path);
  return basis;
}

}  // namespace fdnn::pod
