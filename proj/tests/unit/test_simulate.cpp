#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gat/csv.hpp"
#include "gat/errors.hpp"
#include "gat/gauges.hpp"
#include "gat/simulate.hpp"
#include "support/oracles.hpp"

using namespace gat;
using namespace gat::sim;

namespace {

geometry::ItoCoefficients coeffs(Eigen::MatrixXd sigma, Eigen::VectorXd alpha, Eigen::VectorXd r = {}) {
  geometry::ItoCoefficients c;
  c.sigma = std::move(sigma);
  c.alpha = std::move(alpha);
  c.r = r.size() ? std::move(r) : Eigen::VectorXd::Zero(c.alpha.size());
  return c;
}

ModelSchedule gbm(double alpha, double sigma, double S0 = 100.0) {
  return ModelSchedule::constant(coeffs(Eigen::MatrixXd::Constant(1, 1, sigma), Eigen::VectorXd::Constant(1, alpha)),
                                 Eigen::VectorXd::Constant(1, S0));
}

SimConfig config(std::size_t paths, std::size_t steps, double dt = 1e-3, std::uint64_t seed = 7,
                 std::size_t every = 1) {
  SimConfig c;
  c.paths = paths;
  c.steps = steps;
  c.dt = dt;
  c.seed = seed;
  c.record_every = every;
  return c;
}

// Flat gauge P(t, s) = exp(-r (s - t)) on [0, T].
gauges::Gauge flat_gauge(double r, double T) {
  const std::size_t nv = 101, nm = 5;
  const double h = 0.01;
  std::vector<double> d(nv), p(nv * nm);
  for (std::size_t i = 0; i < nv; ++i) {
    d[i] = 1.0;
    for (std::size_t m = 0; m < nm; ++m) p[i * nm + m] = std::exp(-r * h * static_cast<double>(m));
  }
  return gauges::Gauge(UniformAxis{0.0, T / 100.0, nv}, h, std::move(d), std::move(p));
}

const PathFunctional W0 = [](const PathEnsemble& e, std::size_t i, std::size_t p) { return e.W(i, p, 0); };

}  // namespace

TEST_CASE("zero volatility gives the deterministic exponential") {
  const auto e = simulate(gbm(0.05, 0.0), config(3, 200));
  for (std::size_t p = 0; p < 3; ++p)
    CHECK(e.S(200, p, 0) == doctest::Approx(100.0 * std::exp(0.05 * 0.2)).epsilon(1e-12));
}

TEST_CASE("log price mean matches the drift within 3 standard errors") {
  const auto e = simulate(gbm(0.08, 0.3), config(20000, 100, 1e-2));
  std::vector<double> v(e.paths());
  double mean = 0.0;
  for (std::size_t p = 0; p < e.paths(); ++p) mean += (v[p] = std::log(e.S(100, p, 0)));
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double se = std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  const double expect = std::log(100.0) + (0.08 - 0.045) * 1.0;
  CHECK(std::abs(mean - expect) < 3.0 * se);
  for (std::size_t p = 0; p < e.paths(); ++p) CHECK(e.W(0, p, 0) == 0.0);
}

TEST_CASE("same seed, same ensemble; different seed, different ensemble") {
  const auto a = simulate(gbm(0.05, 0.2), config(50, 100, 1e-3, 3));
  const auto b = simulate(gbm(0.05, 0.2), config(50, 100, 1e-3, 3));
  const auto c = simulate(gbm(0.05, 0.2), config(50, 100, 1e-3, 4));
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(path_seed(3, 0) == path_seed(3, 0));
  CHECK(path_seed(3, 0) != path_seed(3, 1));
}

TEST_CASE("ensemble files round trip") {
  const auto dir = oracle::scratch("ensemble");
  const auto e = simulate(gbm(0.05, 0.2), config(20, 50, 1e-3, 9, 5));
  write_ensemble(e, dir / "e.gate");
  CHECK(read_ensemble(dir / "e.gate") == e);
  {
    std::ofstream bad(dir / "bad.gate", std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS_AS(read_ensemble(dir / "bad.gate"), IoError);
  write_ensemble_csv(e, dir / "e.csv", 4);
  const auto t = csv::read(dir / "e.csv");
  CHECK(t.header == std::vector<std::string>{"t", "path", "S0", "W0"});
  CHECK(t.rows.size() == 11 * 4);
}

TEST_CASE("estimator settings are validated") {
  const auto e = simulate(gbm(0.05, 0.2), config(10, 100));
  EstimatorConfig c;
  c.k = 8;
  CHECK_NOTHROW(resolve(e, c));
  c.k = 20;
  CHECK_THROWS_AS(resolve(e, c), EstimationError);
  c.k = 8;
  c.t_min = 1e-3;
  CHECK_THROWS_AS(resolve(e, c), DomainError);
  c.t_min = 0.0;
  c.h = 2.5e-3;
  CHECK_THROWS_AS(resolve(e, c), GridError);
}

TEST_CASE("deterministic functional: all three derivatives equal g' up to O(h)") {
  const auto e = simulate(gbm(0.0, 0.2), config(16, 200));
  const PathFunctional g = [](const PathEnsemble& en, std::size_t i, std::size_t) {
    const double t = en.time(i);
    return t * t;
  };
  EstimatorConfig c;
  c.k = 8;
  const auto s = nelson_derivatives(e, g, c);
  const double h = resolve(e, c).h;
  for (std::size_t n = 0; n < s.t.size(); ++n) {
    CHECK(std::abs(s.D[n] - 2.0 * s.t[n]) <= h + 1e-9);
    CHECK(std::abs(s.Dstar[n] - 2.0 * s.t[n]) <= h + 1e-9);
    CHECK(std::abs(s.Dmean[n] - 2.0 * s.t[n]) < 1e-9);
  }
}

TEST_CASE("mean derivative of Brownian motion is W_t / 2t in state bins") {
  const auto e = simulate(gbm(0.0, 0.2), config(5000, 1000));
  for (double t : {0.2, 0.5, 0.9}) {
    const auto i = static_cast<std::size_t>(std::llround(t / e.record_dt()));
    const auto sl = nelson_at(e, W0, i);
    std::vector<double> state(e.paths()), expect(e.paths());
    for (std::size_t p = 0; p < e.paths(); ++p) {
      state[p] = e.W(i, p, 0);
      expect[p] = state[p] / (2.0 * t);
    }
    const auto b = bin_by_state(state, sl.raw.mean, expect, 10);
    CHECK(b.max_z < 5.0);
    // Neighbour averaging pulls the per-path estimate towards the same line.
    double err = 0.0, raw = 0.0;
    for (std::size_t p = 0; p < e.paths(); ++p) {
      err += std::abs(sl.Dmean[p] - expect[p]);
      raw += std::abs(sl.raw.mean[p] - expect[p]);
    }
    CHECK(err < raw / 3.0);
  }
}

TEST_CASE("mean derivative of log S follows the analytic formula") {
  const double a = 0.1, s = 0.3;
  const auto e = simulate(gbm(a, s), config(5000, 500));
  const PathFunctional logS = [](const PathEnsemble& en, std::size_t i, std::size_t p) { return std::log(en.S(i, p, 0)); };
  const std::size_t i = 250;
  const auto sl = nelson_at(e, logS, i);
  std::vector<double> state(e.paths()), expect(e.paths());
  for (std::size_t p = 0; p < e.paths(); ++p) {
    state[p] = e.W(i, p, 0);
    expect[p] = a - 0.5 * s * s + s * state[p] / (2.0 * e.time(i));
  }
  CHECK(bin_by_state(state, sl.raw.mean, expect, 10).max_z < 5.0);
}

TEST_CASE("standard error shrinks like 1/sqrt(M)") {
  EstimatorConfig c;
  c.k = 16;
  const auto a = nelson_derivatives(simulate(gbm(0.0, 0.2), config(4000, 200, 1e-3, 1)), W0, c);
  const auto b = nelson_derivatives(simulate(gbm(0.0, 0.2), config(8000, 200, 1e-3, 2)), W0, c);
  double ra = 0.0, rb = 0.0;
  for (std::size_t n = 0; n < a.t.size(); ++n) {
    ra += a.Dmean_se[n];
    rb += b.Dmean_se[n];
  }
  const double ratio = ra / rb;
  CHECK(ratio > std::sqrt(2.0) * 0.8);
  CHECK(ratio < std::sqrt(2.0) * 1.2);
}

TEST_CASE("empirical rho: zero for zero curvature, planted value otherwise, empty for one asset") {
  Eigen::MatrixXd sigma(2, 1);
  sigma << 0.2, 0.1;
  const Eigen::VectorXd S0 = Eigen::Vector2d(100.0, 50.0);
  const auto J = geometry::kernel_basis(sigma).J;
  for (double planted : {0.0, 0.02}) {
    const Eigen::VectorXd alpha = sigma * Eigen::VectorXd::Constant(1, 0.3) + J.col(0) * planted;
    const auto model = ModelSchedule::constant(coeffs(sigma, alpha), S0);
    const auto e = simulate(model, config(2000, 500, 1e-3, 5, 5));
    const auto est = empirical_rho(e, model, 0.1, 0.4);
    REQUIRE(est.dimension == 1);
    CHECK(std::abs(est.bucket_mean(0) - planted) < 3.0 * est.bucket_se(0));
    CHECK(est.bucket_se(0) > 0.0);
  }
  const auto one = gbm(0.05, 0.2);
  const auto e1 = simulate(one, config(100, 200));
  CHECK(empirical_rho(e1, one, 0.05, 0.15).dimension == 0);
}

TEST_CASE("instantaneous return of deterministic assets") {
  // D_t = e^{mu t}, no rate: Ret = mu.
  const auto grow = gbm(0.07, 0.0);
  const auto e = simulate(grow, config(16, 200));
  const std::vector<gauges::Gauge> zero{flat_gauge(0.0, 0.2)};
  const std::vector<double> x{1.0};
  EstimatorConfig c;
  c.k = 8;
  const auto ret = instantaneous_return(e, x, zero, c);
  for (double m : ret.mean) CHECK(m == doctest::Approx(0.07).epsilon(1e-9));
  // D = 1 with rate r: Ret = r.
  const auto flat = gbm(0.0, 0.0);
  const auto ef = simulate(flat, config(16, 200));
  const std::vector<gauges::Gauge> rated{flat_gauge(0.03, 0.2)};
  for (double m : instantaneous_return(ef, x, rated, c).mean) CHECK(m == doctest::Approx(0.03).epsilon(1e-6));
}

TEST_CASE("instantaneous return agrees across portfolios under zero curvature") {
  // Two assets on one factor with equal exposure: the curvature spread vanishes.
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(2, 1, 0.2);
  const Eigen::VectorXd alpha = sigma * Eigen::VectorXd::Constant(1, 0.25);
  const auto model = ModelSchedule::constant(coeffs(sigma, alpha), Eigen::Vector2d(100.0, 60.0));
  const auto e = simulate(model, config(3000, 400, 1e-3, 8, 2));
  const std::vector<gauges::Gauge> gs{flat_gauge(0.0, 0.4), flat_gauge(0.0, 0.4)};
  const auto r1 = instantaneous_return(e, std::vector<double>{1.0, 0.0}, gs);
  const auto r2 = instantaneous_return(e, std::vector<double>{0.3, 0.7}, gs);
  for (std::size_t k = 0; k < r1.t.size(); ++k)
    CHECK(std::abs(r1.mean[k] - r2.mean[k]) < 3.0 * std::hypot(r1.se[k], r2.se[k]) + 1e-12);
}

TEST_CASE("self-financing residual") {
  Eigen::MatrixXd sigma(2, 1);
  sigma << 0.2, 0.3;
  const auto model = ModelSchedule::constant(coeffs(sigma, Eigen::Vector2d(0.05, 0.02)), Eigen::Vector2d(100.0, 80.0));
  const auto e = simulate(model, config(500, 200));
  const std::size_t m = e.paths(), R = e.records();
  EstimatorConfig c;
  c.h = 1e-3;
  c.k = 8;

  // Buy and hold.
  std::vector<double> hold(R * m * 2);
  for (std::size_t i = 0; i < R * m; ++i) {
    hold[2 * i] = 1.0;
    hold[2 * i + 1] = 2.0;
  }
  const auto a = self_financing_residual(e, hold, c);
  for (std::size_t k = 0; k < a.residual.t.size(); ++k) CHECK(std::abs(a.residual.mean[k]) < 1e-9);

  // Rebalanced to equal wealth at every record without adding money.
  std::vector<double> reb(R * m * 2);
  for (std::size_t p = 0; p < m; ++p) {
    double wealth = 1.0 * e.S(0, p, 0) + 2.0 * e.S(0, p, 1);
    for (std::size_t i = 0; i < R; ++i) {
      if (i > 0) wealth = reb[((i - 1) * m + p) * 2] * e.S(i, p, 0) + reb[((i - 1) * m + p) * 2 + 1] * e.S(i, p, 1);
      reb[(i * m + p) * 2] = 0.5 * wealth / e.S(i, p, 0);
      reb[(i * m + p) * 2 + 1] = 0.5 * wealth / e.S(i, p, 1);
    }
  }
  const auto b = self_financing_residual(e, reb, c);
  for (std::size_t k = 0; k < b.residual.t.size(); ++k)
    CHECK(std::abs(b.residual.mean[k]) <= 3.0 * b.residual.se[k]);

  // Deterministic x(t) = 1 + t on a deterministic asset: residual D dx/dt.
  const auto det = ModelSchedule::constant(coeffs(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, 0.1)),
                                           Eigen::VectorXd::Constant(1, 10.0));
  const auto ed = simulate(det, config(8, 100));
  std::vector<double> xs(ed.records() * 8);
  for (std::size_t i = 0; i < ed.records(); ++i)
    for (std::size_t p = 0; p < 8; ++p) xs[i * 8 + p] = 1.0 + ed.time(i);
  const auto d = self_financing_residual(ed, xs, c);
  for (std::size_t k = 0; k < d.residual.t.size(); ++k) {
    const double D = 10.0 * std::exp(0.1 * d.residual.t[k]);
    CHECK(d.residual.mean[k] == doctest::Approx(D).epsilon(1e-3));
  }
  CHECK_THROWS_AS(self_financing_residual(ed, std::vector<double>(3), c), GridError);
}
