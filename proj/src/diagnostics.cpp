#include "fdnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn::diagnostics {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Variance at rounding level of the values counts as a constant series.
bool is_flat(std::span<const double> series, double b0) {
  double scale = 0.0;
  for (double v : series) scale = std::max(scale, std::abs(v));
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  return !(b0 > floor * floor);
}

}  // namespace

std::size_t default_max_lag(std::size_t n) {
  if (n < 2) return 0;
  return static_cast<std::size_t>(std::floor(10.0 * std::log10(static_cast<double>(n))));
}

double autocovariance(std::span<const double> series, double mean, std::size_t lag) {
  const std::size_t n = series.size();
  if (lag >= n) throw ConfigError("lag must be smaller than the series length");
  double acc = 0.0;
  for (std::size_t k = 0; k + lag < n; ++k) acc += (series[k] - mean) * (series[k + lag] - mean);
  return acc / static_cast<double>(n - lag);
}

AcfResult acf(std::span<const double> series, std::size_t max_lag) {
  if (max_lag < 1 || series.size() <= max_lag) {
    throw ConfigError("acf needs 1 <= J < series length (J = " + std::to_string(max_lag) +
                      ", length = " + std::to_string(series.size()) + ")");
  }
  AcfResult out;
  out.max_lag = max_lag;
  out.rho.assign(max_lag + 1, 0.0);
  out.rho[0] = 1.0;
  const double mean = mean_of(series);
  const double b0 = autocovariance(series, mean, 0);
  if (is_flat(series, b0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t j = 1; j <= max_lag; ++j) out.rho[j] = autocovariance(series, mean, j) / b0;
  return out;
}

IactResult iact(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 100) throw ConfigError("iact needs at least 100 samples, got " + std::to_string(n));
  IactResult out;
  const double mean = mean_of(series);
  const double b0 = autocovariance(series, mean, 0);
  if (is_flat(series, b0)) {
    out.degenerate = true;
    out.converged = false;
    return out;
  }
  const std::size_t limit = n / 3;
  double tau = 1.0;
  std::size_t window = 0;
  while (true) {
    ++window;
    tau += 2.0 * autocovariance(series, mean, window) / b0;
    if (static_cast<double>(window) >= 3.0 * tau) break;
    if (window >= limit) {
      out.converged = false;
      break;
    }
  }
  out.tau_int = tau;
  out.window = window;
  return out;
}

double quantile(std::span<const double> series, double p) {
  if (series.empty()) throw ConfigError("quantile of an empty series");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::pair<double, double> credible_interval(std::span<const double> series, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  return {quantile(series, 0.5 * (1.0 - level)), quantile(series, 0.5 * (1.0 + level))};
}

Histogram histogram(std::span<const double> series, std::size_t bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  if (series.empty()) return h;
  const auto [min_it, max_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges[bins] = hi;
  for (double x : series) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((x - lo) / width) : 0;
    h.counts[std::min(b, bins - 1)] += 1;
  }
  return h;
}

ChainReport summarize(const mcmc::Chain& chain, double level) {
  if (chain.burn_in >= chain.size()) throw ConfigError("chain has no samples after burn-in");
  ChainReport report;
  report.acceptance_rate = chain.acceptance_rate(true);
  report.samples_used = chain.size() - chain.burn_in;
  for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) {
    const std::vector<double> x = chain.post_burn_in(c);
    CoordinateSummary s;
    s.coordinate = static_cast<std::size_t>(c) + 1;
    s.mean = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    std::tie(s.ci_lo, s.ci_hi) = credible_interval(x, level);
    if (x.size() >= 100) s.iact = iact(x);
    const std::size_t J = std::min(default_max_lag(x.size()), x.size() - 1);
    if (J >= 1) s.acf = acf(x, J);
    report.coordinates.push_back(std::move(s));
  }
  return report;
}

void write_report_csv(std::ostream& out, const ChainReport& report) {
  out << "coordinate,mean,sd,ci_lo,ci_hi,tau_int,window,window_converged,acceptance_rate\n";
  for (const auto& s : report.coordinates) {
    out << "xi_" << s.coordinate << ',' << io::format_double(s.mean) << ',' << io::format_double(s.sd) << ','
        << io::format_double(s.ci_lo) << ',' << io::format_double(s.ci_hi) << ','
        << io::format_double(s.iact.tau_int) << ',' << s.iact.window << ',' << (s.iact.converged ? 1 : 0) << ','
        << io::format_double(report.acceptance_rate) << '\n';
  }
}

void write_acf_csv(std::ostream& out, const ChainReport& report) {
  out << "lag";
  std::size_t lags = 0;
  for (const auto& s : report.coordinates) {
    out << ",rho_" << s.coordinate;
    lags = std::max(lags, s.acf.rho.size());
  }
  out << '\n';
  for (std::size_t j = 0; j < lags; ++j) {
    out << j;
    for (const auto& s : report.coordinates) {
      out << ',';
      if (j < s.acf.rho.size()) out << io::format_double(s.acf.rho[j]);
    }
    out << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const mcmc::Chain& chain, std::size_t bins) {
  out << "coordinate,bin_lo,bin_hi,count\n";
  for (Eigen::Index c = 0; c < chain.samples.cols(); ++c) {
    const auto h = histogram(chain.post_burn_in(c), bins);
    for (std::size_t b = 0; b < bins; ++b) {
      out << "xi_" << c + 1 << ',' << io::format_double(h.edges[b]) << ',' << io::format_double(h.edges[b + 1])
          << ',' << h.counts[b] << '\n';
    }
  }
}

}  // namespace fdnn::diagnostics
