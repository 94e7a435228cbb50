#include <cmath>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fdnn/diagnostics.hpp"
#include "fdnn/error.hpp"
#include "fdnn/mcmc.hpp"

using namespace fdnn;
using namespace fdnn::mcmc;

namespace {

// Phi(xi) = A xi + c xi^2 (componentwise); enough to build Gaussian and
// skewed toy posteriors.
class ToyMap final : public ForwardMap {
 public:
  ToyMap(Eigen::Index dim, double quadratic = 0.0) : dim_(dim), quadratic_(quadratic) {}
  Eigen::Index parameter_dim() const override { return dim_; }
  Eigen::Index output_dim() const override { return dim_; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const override {
    ++calls;
    return xi + quadratic_ * xi.cwiseAbs2();
  }
  std::string identity() const override { return "toy"; }
  mutable long calls = 0;

 private:
  Eigen::Index dim_;
  double quadratic_;
};

class ConstantMap final : public ForwardMap {
 public:
  Eigen::Index parameter_dim() const override { return 2; }
  Eigen::Index output_dim() const override { return 1; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd&) const override { return Eigen::VectorXd::Zero(1); }
  std::string identity() const override { return "constant"; }
};

class FailingMap final : public ForwardMap {
 public:
  Eigen::Index parameter_dim() const override { return 1; }
  Eigen::Index output_dim() const override { return 1; }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& xi) const override {
    if (xi(0) > 0.0) throw NumericalError("toy failure");
    return xi;
  }
  std::string identity() const override { return "failing"; }
};

Posterior toy_posterior(std::shared_ptr<const ForwardMap> map, Eigen::VectorXd data, double kappa, Box box) {
  PosteriorSpec spec;
  spec.data = std::move(data);
  spec.noise_std = kappa;
  spec.prior = std::move(box);
  spec.forward = std::move(map);
  return Posterior(spec);
}

ProposalConfig frozen(double scale) {
  ProposalConfig cfg;
  cfg.scale = scale;
  cfg.jitter = 0.0;
  cfg.update_period = std::numeric_limits<std::size_t>::max();
  return cfg;
}

}  // namespace

TEST_CASE("box and posterior support") {
  const Box box = Box::uniform(2, 0.01, 10.0);
  CHECK(box.contains(Eigen::Vector2d(0.01, 10.0)));
  CHECK_FALSE(box.contains(Eigen::Vector2d(0.0, 1.0)));
  CHECK_FALSE(box.contains(Eigen::Vector2d(std::nan(""), 1.0)));
  CHECK_FALSE(box.contains(Eigen::Vector3d(1, 1, 1)));
  CHECK(box.midpoint()(0) == doctest::Approx(5.005));

  auto map = std::make_shared<ToyMap>(2);
  const Posterior post = toy_posterior(map, Eigen::Vector2d(1.0, 0.1), 1e-2, box);
  CHECK(post.log_density(Eigen::Vector2d(1.0, 0.1)) == 0.0);
  CHECK(post.log_density(Eigen::Vector2d(-1.0, 0.1)) == kOutsideSupport);
  CHECK(post.log_density(Eigen::Vector2d(1.01, 0.1)) == doctest::Approx(-0.5).epsilon(1e-10));

  CHECK_THROWS_AS(toy_posterior(map, Eigen::Vector3d(1, 1, 1), 1e-2, box), DimensionError);
  CHECK_THROWS_AS(toy_posterior(map, Eigen::Vector2d(1, 1), 0.0, box), ConfigError);
  CHECK_THROWS_AS(toy_posterior(map, Eigen::Vector2d(1, 1), 1e-2, Box::uniform(1, 0, 1)), DimensionError);
}

TEST_CASE("observations") {
  ToyMap map(3);
  const Eigen::Vector3d xi(1, 2, 3);
  CHECK(generate_observations(map, xi, 0.0, 1) == xi);
  CHECK(generate_observations(map, xi, 0.1, 5) == generate_observations(map, xi, 0.1, 5));
  CHECK(generate_observations(map, xi, 0.1, 5) != generate_observations(map, xi, 0.1, 6));
  ToyMap wide(20000);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(20000);
  const Eigen::VectorXd d = generate_observations(wide, zero, 0.01, 9);
  CHECK(std::sqrt(d.squaredNorm() / 20000) == doctest::Approx(0.01).epsilon(0.03));
}

TEST_CASE("proposal covariance update") {
  Eigen::MatrixXd constant(5, 2);
  constant.rowwise() = Eigen::RowVector2d(3.0, -1.0);
  CHECK((update_proposal(constant, 1e-8) - 1e-8 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd two(2, 2);
  two << 0, 0, 2, 0;
  Eigen::Matrix2d expect;
  expect << 1.0 + 1e-8, 0, 0, 1e-8;
  CHECK((update_proposal(two, 1e-8) - expect).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("adaptive proposal tracks the running mean and refreshes on schedule") {
  ProposalConfig cfg;
  cfg.update_period = 50;
  AdaptiveProposal prop(2, cfg);
  CHECK(prop.scale() == doctest::Approx(2.4 * 2.4 / 2));
  CHECK(prop.covariance() == Eigen::Matrix2d::Identity());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N;
  Eigen::MatrixXd history(120, 2);
  for (int i = 0; i < 120; ++i) {
    history.row(i) << 3.0 + N(rng), 0.5 * N(rng) + 0.1 * i;
    prop.observe(history.row(i).transpose());
    if (i == 48) CHECK(prop.covariance() == Eigen::Matrix2d::Identity());
    if (i == 49) {
      CHECK((prop.covariance() - update_proposal(history.topRows(50), cfg.jitter)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  CHECK((prop.mean() - history.colwise().mean().transpose()).cwiseAbs().maxCoeff() <= 1e-14 * 10);
  CHECK(prop.count() == 120);
  CHECK((prop.covariance() - update_proposal(history.topRows(100), cfg.jitter)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("proposal draws have covariance s C") {
  Eigen::Matrix2d C;
  C << 2.0, 0.6, 0.6, 0.5;
  AdaptiveProposal prop(C, frozen(0.7));
  std::mt19937_64 rng(5);
  const int n = 200000;
  Eigen::MatrixXd draws(n, 2);
  for (int i = 0; i < n; ++i) draws.row(i) = prop.propose(Eigen::Vector2d(1.0, -1.0), rng).transpose();
  const Eigen::RowVector2d mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::Matrix2d cov = centered.transpose() * centered / n;
  CHECK((mean - Eigen::RowVector2d(1.0, -1.0)).cwiseAbs().maxCoeff() <= 0.01);
  CHECK((cov - 0.7 * C).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("Metropolis step decisions") {
  auto map = std::make_shared<ToyMap>(1);
  const Posterior post = toy_posterior(map, Eigen::VectorXd::Constant(1, 0.0), 1.0, Box::uniform(1, -5, 5));
  AdaptiveProposal prop(Eigen::MatrixXd::Identity(1, 1), frozen(1.0));
  std::mt19937_64 rng(6);
  // From far out, any proposal closer to 0 has higher density and must be accepted.
  const ChainState far{Eigen::VectorXd::Constant(1, 4.9), post.log_density(Eigen::VectorXd::Constant(1, 4.9))};
  for (int i = 0; i < 200; ++i) {
    auto rng_copy = rng;
    const Eigen::VectorXd cand = prop.propose(far.xi, rng_copy);
    const auto step = am_step(post, prop, far, rng);
    if (std::abs(cand(0)) <= 4.9) CHECK(step.accepted);
    if (std::abs(cand(0)) > 5.0) CHECK_FALSE(step.accepted);
    if (!step.accepted) CHECK(step.state.xi == far.xi);
  }
}

TEST_CASE("frozen adaptation matches a reference random-walk sampler step for step") {
  auto map = std::make_shared<ToyMap>(2, 0.2);
  const Box box = Box::uniform(2, -3.0, 3.0);
  const Eigen::Vector2d data(0.4, -0.2);
  const Posterior post = toy_posterior(map, data, 0.5, box);

  ChainConfig cfg;
  cfg.samples = 3000;
  cfg.burn_in = 100;
  cfg.seed = 77;
  cfg.proposal = frozen(0.8);
  cfg.proposal.jitter = 0.0;
  cfg.initial = Eigen::Vector2d(1.0, 1.0);
  const Chain chain = run_chain(post, cfg);

  // Reference: identity covariance, proposal x + sqrt(0.8) z, draw z then u.
  auto logpi = [&](double a, double b) {
    if (a < -3 || a > 3 || b < -3 || b > 3) return -std::numeric_limits<double>::infinity();
    const double r1 = data(0) - (a + 0.2 * a * a), r2 = data(1) - (b + 0.2 * b * b);
    return -(r1 * r1 + r2 * r2) / (2 * 0.25);
  };
  std::mt19937_64 rng(77);
  double x = 1.0, y = 1.0, lp = logpi(x, y);
  int mismatches = 0;
  for (int i = 0; i < 3000; ++i) {
    std::normal_distribution<double> N(0.0, 1.0);
    const double z1 = N(rng), z2 = N(rng);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double cx = x + std::sqrt(0.8) * z1, cy = y + std::sqrt(0.8) * z2;
    const double lc = logpi(cx, cy);
    bool acc = false;
    if (lc != -std::numeric_limits<double>::infinity() && (lc - lp >= 0 || std::log(u) < lc - lp)) {
      x = cx, y = cy, lp = lc;
      acc = true;
    }
    if (std::abs(chain.samples(i, 0) - x) > 1e-12 || std::abs(chain.samples(i, 1) - y) > 1e-12 ||
        chain.accepted[i] != acc) {
      ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("acceptance rate of a Gaussian random walk matches the analytic value") {
  // Target N(0,1), proposal N(x, s^2): E[alpha] = (2/pi) arctan(2/s).
  auto map = std::make_shared<ToyMap>(1);
  const Posterior post = toy_posterior(map, Eigen::VectorXd::Zero(1), 1.0, Box::uniform(1, -50, 50));
  for (double s : {0.5, 2.4, 6.0}) {
    ChainConfig cfg;
    cfg.samples = 100000;
    cfg.burn_in = 1000;
    cfg.seed = 8;
    cfg.proposal = frozen(s * s);
    cfg.initial = Eigen::VectorXd::Zero(1);
    const Chain chain = run_chain(post, cfg);
    const double expect = 2.0 / std::numbers::pi * std::atan(2.0 / s);
    CHECK(chain.acceptance_rate() == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("stationary distribution matches quadrature on a skewed 1-D posterior") {
  auto map = std::make_shared<ToyMap>(1, 0.3);
  const Box box = Box::uniform(1, -3.0, 3.0);
  const Posterior post = toy_posterior(map, Eigen::VectorXd::Constant(1, 1.0), 0.5, box);

  const int bins = 20;
  std::vector<double> p(bins, 0.0);
  const int sub = 2000;
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    for (int k = 0; k < sub; ++k) {
      const double x = -3.0 + 6.0 * (b * sub + k + 0.5) / (bins * sub);
      const double w = std::exp(post.log_density(Eigen::VectorXd::Constant(1, x)));
      p[b] += w;
      total += w;
    }
  }
  for (auto& v : p) v /= total;

  ChainConfig cfg;
  cfg.samples = 101000;
  cfg.burn_in = 1000;
  cfg.seed = 10;
  cfg.proposal = frozen(0.8);
  cfg.initial = Eigen::VectorXd::Constant(1, 0.5);
  const Chain chain = run_chain(post, cfg);
  std::vector<double> q(bins, 0.0);
  const auto xs = chain.post_burn_in(0);
  for (double x : xs) q[std::min(bins - 1, static_cast<int>((x + 3.0) / 6.0 * bins))] += 1.0 / xs.size();
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += 0.5 * std::abs(p[b] - q[b]);
  CHECK(tv <= 0.02);
}

TEST_CASE("prior-only target samples the box uniformly") {
  const Posterior post = toy_posterior(std::make_shared<ConstantMap>(), Eigen::VectorXd::Zero(1), 1e-2,
                                       Box::uniform(2, 0.01, 10.0));
  ChainConfig cfg;
  cfg.samples = 30000;
  cfg.burn_in = 2000;
  cfg.seed = 12;
  const Chain chain = run_chain(post, cfg);
  for (int c = 0; c < 2; ++c) {
    const auto xs = chain.post_burn_in(c);
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double sd = 9.99 / std::sqrt(12.0);
    const double tau = diagnostics::iact(xs).tau_int;
    const double se = sd * std::sqrt(tau / xs.size());
    CHECK(std::abs(mean - 5.005) <= 3 * se);
  }
}

TEST_CASE("chain bookkeeping and determinism") {
  auto map = std::make_shared<ToyMap>(2);
  const Posterior post = toy_posterior(map, Eigen::Vector2d(2.0, 3.0), 0.3, Box::uniform(2, 0.01, 10.0));
  ChainConfig cfg;
  cfg.samples = 4000;
  cfg.burn_in = 1000;
  cfg.seed = 3;
  const Chain a = run_chain(post, cfg);
  const Chain b = run_chain(post, cfg);
  CHECK(a.samples == b.samples);
  CHECK(a.accepted == b.accepted);
  CHECK(a.samples.row(0).transpose() != post.spec().prior.midpoint());
  for (Eigen::Index i = 1; i < a.samples.rows(); ++i) {
    if (a.samples.row(i) != a.samples.row(i - 1)) CHECK(a.accepted[i]);
    if (!a.accepted[i]) {
      CHECK(a.samples.row(i) == a.samples.row(i - 1));
      CHECK(a.log_posterior(i) == a.log_posterior(i - 1));
    }
  }
  cfg.seed = 4;
  CHECK(run_chain(post, cfg).samples != a.samples);
  cfg.burn_in = 4000;
  CHECK_THROWS_AS(run_chain(post, cfg), ConfigError);
}

TEST_CASE("out-of-box proposals skip the forward model") {
  auto map = std::make_shared<ToyMap>(1);
  const Posterior post = toy_posterior(map, Eigen::VectorXd::Constant(1, 0.5), 0.1, Box::uniform(1, 0.0, 1.0));
  ChainConfig cfg;
  cfg.samples = 2000;
  cfg.burn_in = 100;
  cfg.proposal = frozen(25.0);
  const long before = map->calls;
  const Chain chain = run_chain(post, cfg);
  const long used = map->calls - before;
  CHECK(used < 1000);
  CHECK((chain.samples.array() >= 0.0).all());
  CHECK((chain.samples.array() <= 1.0).all());
}

TEST_CASE("repeated forward failures abort the chain") {
  const Posterior post = toy_posterior(std::make_shared<FailingMap>(), Eigen::VectorXd::Zero(1), 1.0,
                                       Box::uniform(1, -0.001, 100.0));
  ChainConfig cfg;
  cfg.samples = 500;
  cfg.burn_in = 10;
  cfg.initial = Eigen::VectorXd::Constant(1, -0.0005);
  cfg.proposal = frozen(100.0);
  cfg.max_consecutive_failures = 3;
  CHECK_THROWS_AS(run_chain(post, cfg), ConvergenceError);
}

TEST_CASE("chain CSV round trip") {
  auto map = std::make_shared<ToyMap>(2);
  const Posterior post = toy_posterior(map, Eigen::Vector2d(1.0, 1.0), 0.2, Box::uniform(2, 0.0, 3.0));
  ChainConfig cfg;
  cfg.samples = 300;
  cfg.burn_in = 100;
  const Chain chain = run_chain(post, cfg);
  std::stringstream ss;
  write_chain_csv(ss, chain);
  const Chain back = read_chain_csv(ss);
  CHECK(back.samples == chain.samples);
  CHECK(back.log_posterior == chain.log_posterior);
  CHECK(back.accepted == chain.accepted);
  CHECK(back.burn_in == 100);
  CHECK(back.metadata.at("forward_map") == "toy");
  CHECK(back.metadata.at("seed") == "0");

  std::string text = ss.str();
  const auto pos = text.find("\n5,");
  REQUIRE(pos != std::string::npos);
  text.replace(pos + 1, 2, "5,abc");
  std::istringstream bad(text);
  try {
    read_chain_csv(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() > 0);
  }
  std::istringstream empty("step,xi_1,log_posterior,accepted\n");
  CHECK_THROWS_AS(read_chain_csv(empty), FormatError);
  std::istringstream header("step,theta,log_posterior,accepted\n1,2,3,1\n");
  CHECK_THROWS_AS(read_chain_csv(header), FormatError);
}
