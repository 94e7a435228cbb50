#pragma once

// Model checkpoint file.
//
//   FDNN-CHECKPOINT 1
//   layers <L>
//   input_dim <N_xi>
//   hidden_width <n>
//   output_dim <k>
//   gamma <gamma>
//   step <h>
//   epsilon <epsilon>
//   lambda <lambda>
//   seed <init seed>
//   ... optional provenance keys (iterations, final_loss, ...)
//   end_header
//   W_0 (rows x cols, row-major float64 LE), b_0, W_1, b_1, ..., W_{L-1}
//
// Every header value is written with shortest round-trip formatting, so a
// loaded configuration compares equal to the saved one.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "fdnn/fracnet.hpp"

namespace fdnn {

struct Checkpoint {
  fracnet::FracNetConfig config;
  fracnet::Theta theta;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> provenance;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdnn
