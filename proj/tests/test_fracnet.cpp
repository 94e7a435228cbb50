#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "fdnn/binary_io.hpp"
#include "fdnn/checkpoint.hpp"
#include "fdnn/error.hpp"
#include "fdnn/fracnet.hpp"

using namespace fdnn;
using namespace fdnn::fracnet;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// Plain-loop transcription of the layer recursion, independent of Eigen and
// of the library's batched implementation.
double relu_eps(double x, double eps) {
  if (x >= eps) return x;
  if (x <= -eps) return 0.0;
  return (x + eps) * (x + eps) / (4.0 * eps);
}

Vec matvec(const Eigen::MatrixXd& W, const Vec& x) {
  Vec y(static_cast<std::size_t>(W.rows()), 0.0);
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    for (Eigen::Index c = 0; c < W.cols(); ++c) y[r] += W(r, c) * x[c];
  }
  return y;
}

Vec literal_forward(const Theta& th, const Eigen::VectorXd& xi, const FracNetConfig& cfg) {
  const int L = cfg.layers;
  const auto n = static_cast<std::size_t>(cfg.hidden_width);
  const double tau = std::pow(cfg.step, cfg.gamma) * std::tgamma(2.0 - cfg.gamma);
  auto a = [&](int m) { return std::pow(m + 1.0, 1.0 - cfg.gamma) - std::pow(double(m), 1.0 - cfg.gamma); };

  std::vector<Vec> phi(static_cast<std::size_t>(L));
  phi[0].assign(n, 0.0);
  for (Eigen::Index i = 0; i < xi.size() && i < static_cast<Eigen::Index>(n); ++i) phi[0][i] = xi(i);
  for (int j = 1; j <= L - 1; ++j) {
    Vec z = matvec(th.W[j - 1], phi[j - 1]);
    for (std::size_t r = 0; r < n; ++r) z[r] += th.b[j - 1](r);
    phi[j].assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      if (j == 1) {
        phi[j][r] = relu_eps(z[r], cfg.activation.epsilon);
        continue;
      }
      double v = phi[j - 1][r] + tau * relu_eps(z[r], cfg.activation.epsilon);
      for (int k = 0; k <= j - 2; ++k) v -= a(j - 1 - k) * (phi[k + 1][r] - phi[k][r]);
      phi[j][r] = v;
    }
  }
  return matvec(th.W[L - 1], phi[L - 1]);
}

Theta random_theta(const FracNetConfig& cfg, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Theta th = Theta::zeros(cfg);
  for (auto& w : th.W) w = w.unaryExpr([&](double) { return N(rng); });
  for (auto& b : th.b) b = b.unaryExpr([&](double) { return N(rng); });
  return th;
}

Eigen::VectorXd random_vec(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

FracNetConfig small_config(int L, int in, int width, int out) {
  FracNetConfig cfg;
  cfg.layers = L;
  cfg.input_dim = in;
  cfg.hidden_width = width;
  cfg.output_dim = out;
  cfg.step = 1.0 / std::max(1, L - 1);
  return cfg;
}

}  // namespace

TEST_CASE("smooth relu is C1 and matches its pieces") {
  ActivationSpec spec{0.1};
  CHECK(smooth_relu(0.5, spec) == 0.5);
  CHECK(smooth_relu(-0.5, spec) == 0.0);
  CHECK(smooth_relu(0.0, spec) == doctest::Approx(0.025).epsilon(1e-15));
  for (double e : {-0.1, 0.1}) {
    CHECK(smooth_relu(e - 1e-12, spec) == doctest::Approx(smooth_relu(e + 1e-12, spec)).epsilon(1e-10));
    CHECK(smooth_relu_deriv(e - 1e-12, spec) == doctest::Approx(smooth_relu_deriv(e + 1e-12, spec)).epsilon(1e-9));
  }
  for (double x = -0.3; x <= 0.3; x += 0.01) {
    const double h = 1e-6;
    const double fd = (smooth_relu(x + h, spec) - smooth_relu(x - h, spec)) / (2 * h);
    CHECK(std::abs(smooth_relu_deriv(x, spec) - fd) <= 1e-5);
    CHECK(smooth_relu(x, spec) == doctest::Approx(relu_eps(x, 0.1)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(ActivationSpec{0.0}.validate(), ConfigError);
}

TEST_CASE("gamma function agrees with the standard library") {
  for (double x : {0.1, 0.5, 1.0, 1.5, 1.7, 2.0, 3.3, 7.0}) {
    CHECK(euler_gamma(x) == doctest::Approx(std::tgamma(x)).epsilon(1e-13));
  }
}

TEST_CASE("L1 weights") {
  const auto a = l1_coefficients(0.5, 6);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-15));
  for (std::size_t m = 1; m < a.size(); ++m) {
    CHECK(a[m] > 0.0);
    CHECK(a[m] < a[m - 1]);
  }
  FracNetConfig cfg;
  CHECK(cfg.tau() == doctest::Approx(std::sqrt(1.0 / 3.0) * std::sqrt(M_PI) / 2.0).epsilon(1e-14));
}

TEST_CASE("config validation") {
  FracNetConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gamma = 0.5;
  cfg.layers = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.layers = 4;
  cfg.hidden_width = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("forward matches a plain-loop transcription") {
  std::mt19937_64 rng(11);
  for (int L : {2, 3, 4, 5, 6}) {
    for (double gamma : {0.2, 0.5, 0.9}) {
      auto cfg = small_config(L, 2, 6, 4);
      cfg.gamma = gamma;
      const Theta th = random_theta(cfg, rng, 0.7);
      const Eigen::VectorXd xi = random_vec(2, rng);
      const Eigen::VectorXd out = forward(th, xi, cfg).output();
      const Vec ref = literal_forward(th, xi, cfg);
      for (Eigen::Index i = 0; i < out.size(); ++i) CHECK(out(i) == doctest::Approx(ref[i]).epsilon(1e-13));
    }
  }
}

TEST_CASE("forward agrees with the closed forms for L = 2, 3, 4") {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    for (int L : {2, 3, 4}) {
      const auto cfg = small_config(L, 2, 5, 3);
      const Theta th = random_theta(cfg, rng);
      const Eigen::VectorXd xi = random_vec(2, rng);
      worst = std::max(worst, (forward(th, xi, cfg).output() - closed_form_oracle(th, xi, cfg)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("history weights keep a constant state constant") {
  // sigma(z_1) = sigma(z_2) = 0 and sigma(z_0) = phi_0: every update is a pure
  // history term, so phi_3 must equal phi_0.
  auto cfg = small_config(4, 3, 3, 3);
  Theta th = Theta::zeros(cfg);
  th.W[0].setIdentity();
  th.b[1].setConstant(-1.0);
  th.b[2].setConstant(-1.0);
  th.W[3].setIdentity();
  const Eigen::Vector3d xi(0.4, 1.3, 2.0);
  CHECK((forward(th, xi, cfg).output() - xi).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((closed_form_oracle(th, xi, cfg) - xi).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("resnet update is forward Euler") {
  std::mt19937_64 rng(13);
  auto cfg = small_config(4, 2, 4, 2);
  const Theta th = random_theta(cfg, rng);
  const Eigen::VectorXd xi = random_vec(2, rng);
  const auto tr = resnet_forward(th, xi, cfg);
  Eigen::VectorXd phi = smooth_relu(Eigen::VectorXd(th.W[0] * lift_input(xi, 4) + th.b[0]), cfg.activation);
  for (int j = 1; j <= 2; ++j) phi = phi + cfg.step * smooth_relu(Eigen::VectorXd(th.W[j] * phi + th.b[j]), cfg.activation);
  CHECK((tr.output() - th.W[3] * phi).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("input lifting pads with zeros") {
  const Eigen::Vector2d xi(3.0, -1.0);
  const auto p = lift_input(xi, 5);
  CHECK(p.size() == 5);
  CHECK(p(0) == 3.0);
  CHECK(p(1) == -1.0);
  CHECK(p.tail(3).isZero());
}

TEST_CASE("adjoint gradient matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> pickL(3, 5), pickW(2, 8), pickOut(1, 6), pickN(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int width = pickW(rng);
    auto cfg = small_config(pickL(rng), std::min(2, width), width, pickOut(rng));
    cfg.gamma = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    cfg.lambda = 1e-3;
    const Theta th = random_theta(cfg, rng, 0.6);
    const int N = pickN(rng);
    Eigen::MatrixXd X(cfg.input_dim, N), Y(cfg.output_dim, N);
    for (int c = 0; c < N; ++c) {
      X.col(c) = random_vec(cfg.input_dim, rng);
      Y.col(c) = random_vec(cfg.output_dim, rng);
    }
    const Eigen::VectorXd g = gradient(th, X, Y, cfg).grad.flatten();
    const Eigen::VectorXd x0 = th.flatten();
    Eigen::VectorXd fd(x0.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      Eigen::VectorXd xp = x0, xm = x0;
      xp(i) += h;
      xm(i) -= h;
      fd(i) = (loss(Theta::unflatten(cfg, xp), X, Y, cfg) - loss(Theta::unflatten(cfg, xm), X, Y, cfg)) / (2 * h);
    }
    const double rel = (g - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>();
    CAPTURE(trial);
    CAPTURE(cfg.layers);
    CHECK(rel <= 1e-6);
  }
}

TEST_CASE("gradient value equals the loss it reports") {
  std::mt19937_64 rng(22);
  const auto cfg = small_config(4, 2, 5, 3);
  const Theta th = random_theta(cfg, rng);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(2, 7), Y = Eigen::MatrixXd::Random(3, 7);
  CHECK(gradient(th, X, Y, cfg).loss == doctest::Approx(loss(th, X, Y, cfg)).epsilon(1e-15));
  CHECK_THROWS_AS(loss(th, X, Eigen::MatrixXd::Random(3, 6), cfg), DimensionError);
  CHECK_THROWS_AS(loss(th, Eigen::MatrixXd::Random(3, 7), Y, cfg), DimensionError);
}

TEST_CASE("adjoint states") {
  std::mt19937_64 rng(23);
  auto cfg = small_config(4, 2, 5, 3);
  cfg.lambda = 0.0;
  const Theta th = random_theta(cfg, rng);
  const Eigen::VectorXd xi = random_vec(2, rng), y = random_vec(3, rng);
  const auto tr = forward(th, xi, cfg);
  const Eigen::VectorXd terminal = tr.output() - y;
  const auto psi = adjoint(tr, th, terminal, cfg);
  REQUIRE(psi.size() == 5);
  CHECK((psi[4] - terminal).isZero());
  CHECK((psi[3] + th.W[3].transpose() * psi[4]).cwiseAbs().maxCoeff() <= 1e-13);

  // db_0 = sigma'(z_0) * dJ/dphi_1 = -sigma'(z_0) * psi_1 for a single sample.
  Eigen::MatrixXd X = xi, Y = y;
  const auto g = gradient(th, X, Y, cfg);
  const Eigen::VectorXd expect = -smooth_relu_deriv(tr.z[0], cfg.activation).cwiseProduct(psi[1]);
  CHECK((g.grad.db[0] - expect).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("theta flattening and initialization") {
  const auto cfg = small_config(4, 2, 5, 7);
  const Theta a = Theta::initialize(cfg, 5);
  const Theta b = Theta::initialize(cfg, 5);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != Theta::initialize(cfg, 6).flatten());
  CHECK(a.parameter_count() == static_cast<std::size_t>(3 * 25 + 3 * 5 + 7 * 5));
  CHECK(Theta::unflatten(cfg, a.flatten()).flatten() == a.flatten());
  CHECK(a.squared_norm() == doctest::Approx(a.flatten().squaredNorm()).epsilon(1e-14));
  const double bound = std::sqrt(6.0 / 12.0);
  CHECK(a.W[3].cwiseAbs().maxCoeff() <= bound);
  for (const auto& bias : a.b) CHECK(bias.isZero());
  CHECK_THROWS_AS(Theta::unflatten(cfg, Eigen::VectorXd::Zero(3)), DimensionError);
  auto other = cfg;
  other.hidden_width = 6;
  CHECK_THROWS_AS(a.check_shapes(other), DimensionError);
}

TEST_CASE("non-finite states are reported") {
  const auto cfg = small_config(3, 2, 3, 2);
  Theta th = Theta::zeros(cfg);
  th.W[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(th, Eigen::Vector2d(1.0, 1.0), cfg), NumericalError);
}

TEST_CASE("nu decay") {
  std::vector<double> grid;
  for (int i = -10000; i <= 10000; ++i) grid.push_back(i * 1e-3);
  const auto ok = nu_decay_check(ActivationSpec{0.1}, grid);
  CHECK(ok.holds);
  CHECK(ok.violations == 0);
  // nu''(0) = -2 sigma''(0) = -1/epsilon, which exceeds 20 once epsilon < 0.05.
  CHECK(nu(0.0, ActivationSpec{0.1}, 2) == doctest::Approx(-10.0));
  const auto bad = nu_decay_check(ActivationSpec{0.01}, grid);
  CHECK_FALSE(bad.holds);
  CHECK(bad.violations > 0);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(31);
  const auto cfg = small_config(4, 2, 5, 6);
  Checkpoint ck{cfg, random_theta(cfg, rng), 99, {{"iterations", "12"}}};
  const auto dir = std::filesystem::temp_directory_path() / "fdnn_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.bin", ck);
  const auto back = load_checkpoint(dir / "a.bin");
  CHECK(back.theta.flatten() == ck.theta.flatten());
  CHECK(back.seed == 99);
  CHECK(back.config.gamma == cfg.gamma);
  CHECK(back.config.step == cfg.step);
  CHECK(back.provenance.at("iterations") == "12");
  save_checkpoint(dir / "b.bin", back);
  CHECK(io::file_hash(dir / "a.bin") == io::file_hash(dir / "b.bin"));

  {
    std::ofstream out(dir / "c.bin", std::ios::binary);
    out << "NOT-A-CHECKPOINT 1\nend_header\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "c.bin"), FormatError);
  {
    std::ifstream in(dir / "a.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(dir / "d.bin", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 8);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "d.bin"), FormatError);
  std::filesystem::remove_all(dir);
}
