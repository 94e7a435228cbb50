#include <algorithm>
#include <numeric>
#include <random>

#include "fdnn/error.hpp"
#include "fdnn/pde.hpp"

namespace fdnn::pde {

Eigen::MatrixXd latin_hypercube(int n_samples, const std::vector<std::pair<double, double>>& bounds,
                                std::uint64_t seed) {
  if (n_samples < 1) throw ConfigError("latin hypercube needs at least one sample");
  for (const auto& [lo, hi] : bounds) {
    if (!(lo < hi)) throw ConfigError("latin hypercube bounds must satisfy lower < upper");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto dims = static_cast<Eigen::Index>(bounds.size());
  Eigen::MatrixXd samples(dims, n_samples);
  std::vector<int> strata(static_cast<std::size_t>(n_samples));
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const auto [lo, hi] = bounds[static_cast<std::size_t>(d)];
    const double width = (hi - lo) / n_samples;
    for (int s = 0; s < n_samples; ++s) {
      const int stratum = strata[static_cast<std::size_t>(s)];
      // Clamp so round-off never pushes a point into the neighbouring stratum.
      const double left = lo + stratum * width;
      const double right = stratum + 1 == n_samples ? hi : lo + (stratum + 1) * width;
      samples(d, s) = std::clamp(left + unit(rng) * width, left, std::nextafter(right, left));
    }
  }
  return samples;
}

}  // namespace fdnn::pde
