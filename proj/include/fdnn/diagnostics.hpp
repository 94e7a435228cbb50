#pragma once

// Post-processing of MCMC chains.
//
// For a series delta_1..delta_N with mean dbar,
//   B(j)   = 1/(N - j) sum_{k=1}^{N-j} (delta_k - dbar)(delta_{k+j} - dbar)
//   rho(j) = B(j) / B(0)
//   tau    = sum_{|j| <= Jhat} rho(j) = 1 + 2 sum_{j=1}^{Jhat} rho(j)
// with Jhat the smallest window satisfying Jhat >= 3 tau(Jhat).

#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "fdnn/mcmc.hpp"

namespace fdnn::diagnostics {

struct AcfResult {
  std::vector<double> rho;  // lags 0..max_lag
  std::size_t max_lag = 0;
  /// Set for a constant series (B(0) = 0); rho is then 1 at lag 0 and 0 elsewhere.
  bool degenerate = false;
};

struct IactResult {
  double tau_int = 1.0;
  std::size_t window = 0;
  /// False when the window had to grow beyond N/3 without satisfying Jhat >= 3 tau.
  bool converged = true;
  bool degenerate = false;
};

/// floor(10 log10 N)
std::size_t default_max_lag(std::size_t n);

double autocovariance(std::span<const double> series, double mean, std::size_t lag);
AcfResult acf(std::span<const double> series, std::size_t max_lag);
IactResult iact(std::span<const double> series);

/// Percentile interval at (1-level)/2 and (1+level)/2, linear interpolation
/// between order statistics (position p (N-1)).
std::pair<double, double> credible_interval(std::span<const double> series, double level = 0.95);
double quantile(std::span<const double> series, double p);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the maximum falls in the last bin.
Histogram histogram(std::span<const double> series, std::size_t bins);

struct CoordinateSummary {
  std::size_t coordinate = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  IactResult iact;
  AcfResult acf;
};

struct ChainReport {
  std::vector<CoordinateSummary> coordinates;
  double acceptance_rate = 0.0;
  std::size_t samples_used = 0;
};

ChainReport summarize(const mcmc::Chain& chain, double level = 0.95);

/// coordinate,mean,sd,ci_lo,ci_hi,tau_int,window,window_converged,acceptance_rate
void write_report_csv(std::ostream& out, const ChainReport& report);
/// lag,rho_1..rho_d
void write_acf_csv(std::ostream& out, const ChainReport& report);
/// coordinate,bin_lo,bin_hi,count
void write_histogram_csv(std::ostream& out, const mcmc::Chain& chain, std::size_t bins);

}  // namespace fdnn::diagnostics
