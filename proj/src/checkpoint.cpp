#include "fdnn/checkpoint.hpp"

#include <fstream>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn {

namespace {

constexpr const char* kMagic = "FDNN-CHECKPOINT";
const char* const kReserved[] = {"layers", "input_dim", "hidden_width", "output_dim", "gamma",
                                 "step",   "epsilon",   "lambda",       "seed"};

bool is_reserved(const std::string& key) {
  for (const char* r : kReserved) {
    if (key == r) return true;
  }
  return false;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto& cfg = checkpoint.config;
  cfg.validate();
  checkpoint.theta.check_shapes(cfg);

  io::Header header;
  header.magic = kMagic;
  header.set("layers", static_cast<long long>(cfg.layers));
  header.set("input_dim", static_cast<long long>(cfg.input_dim));
  header.set("hidden_width", static_cast<long long>(cfg.hidden_width));
  header.set("output_dim", static_cast<long long>(cfg.output_dim));
  header.set("gamma", cfg.gamma);
  header.set("step", cfg.step);
  header.set("epsilon", cfg.activation.epsilon);
  header.set("lambda", cfg.lambda);
  header.set("seed", std::to_string(checkpoint.seed));
  for (const auto& [k, v] : checkpoint.provenance) {
    if (is_reserved(k)) throw FormatError("provenance key '" + k + "' is reserved");
    header.set(k, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  io::write_header(out, header);
  for (std::size_t j = 0; j < checkpoint.theta.W.size(); ++j) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = checkpoint.theta.W[j];
    io::write_doubles(out, {rm.data(), static_cast<std::size_t>(rm.size())});
    if (j < checkpoint.theta.b.size()) {
      const auto& b = checkpoint.theta.b[j];
      io::write_doubles(out, {b.data(), static_cast<std::size_t>(b.size())});
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const auto header = io::read_header(in, kMagic);
  if (header.version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(header.version));

  Checkpoint cp;
  auto& cfg = cp.config;
  cfg.layers = static_cast<int>(header.get_int("layers"));
  cfg.input_dim = static_cast<int>(header.get_int("input_dim"));
  cfg.hidden_width = static_cast<int>(header.get_int("hidden_width"));
  cfg.output_dim = static_cast<int>(header.get_int("output_dim"));
  cfg.gamma = header.get_double("gamma");
  cfg.step = header.get_double("step");
  cfg.activation.epsilon = header.get_double("epsilon");
  cfg.lambda = header.get_double("lambda");
  cp.seed = std::stoull(header.get("seed"));
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header is invalid: ") + e.what());
  }
  for (const auto& [k, v] : header.entries) {
    if (!is_reserved(k)) cp.provenance[k] = v;
  }

  cp.theta = fracnet::Theta::zeros(cfg);
  for (std::size_t j = 0; j < cp.theta.W.size(); ++j) {
    auto& w = cp.theta.W[j];
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(w.rows(), w.cols());
    io::read_doubles(in, {rm.data(), static_cast<std::size_t>(rm.size())});
    w = rm;
    if (j < cp.theta.b.size()) {
      auto& b = cp.theta.b[j];
      io::read_doubles(in, {b.data(), static_cast<std::size_t>(b.size())});
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint '" + path.string() + "' has trailing bytes after the payload");
  }
  return cp;
}

}  // namespace fdnn
