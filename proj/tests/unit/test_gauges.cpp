#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gat/errors.hpp"
#include "gat/gauges.hpp"
#include "support/oracles.hpp"

using namespace gat;
using namespace gat::gauges;

namespace {

// Forward curve f(t, s) = a + c t + b (s - t), so log P is quadratic in the offset.
struct Curve {
  double a = 0.02, b = 0.01, c = 0.005, decay = 0.03;
  double logP(double t, double off) const { return -((a + c * t) * off + 0.5 * b * off * off); }
  double fwd(double t, double off) const { return a + c * t + b * off; }
};

Gauge make_gauge(const Curve& k, std::size_t nv, double dv, double h, std::size_t nm) {
  std::vector<double> d(nv), p(nv * nm);
  for (std::size_t i = 0; i < nv; ++i) {
    const double t = dv * static_cast<double>(i);
    d[i] = std::exp(-k.decay * t);
    for (std::size_t m = 0; m < nm; ++m) p[i * nm + m] = std::exp(k.logP(t, h * static_cast<double>(m)));
  }
  return Gauge(UniformAxis{0.0, dv, nv}, h, std::move(d), std::move(p));
}

}  // namespace

TEST_CASE("dirac intensity is the identity for convolution and gauge transform") {
  const double h = 0.01;
  const auto nu = CashflowIntensity::sampled(h, 0.2, [](double x) { return std::exp(-x); });
  const auto c = convolve(CashflowIntensity::dirac(h), nu);
  REQUIRE(c.size() == nu.size());
  for (std::size_t k = 0; k < c.size(); ++k) CHECK(c.samples()[k] == doctest::Approx(nu.samples()[k]).epsilon(1e-14));

  const auto g = make_gauge(Curve{}, 5, 0.1, h, 40);
  const auto gd = gauge_transform(g, CashflowIntensity::dirac(h));
  REQUIRE(gd.maturities() == g.maturities());
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(gd.deflator(i) == doctest::Approx(g.deflator(i)).epsilon(1e-14));
    for (std::size_t m = 0; m < g.maturities(); ++m)
      CHECK(gd.discount(i, m) == doctest::Approx(g.discount(i, m)).epsilon(1e-14));
  }
}

TEST_CASE("convolution multiplies total mass") {
  const double h = 0.02;
  const auto pi = CashflowIntensity::sampled(h, 0.3, [](double x) { return 1.0 + x; });
  const auto nu = CashflowIntensity::sampled(h, 0.5, [](double x) { return std::exp(-2.0 * x); });
  CHECK(convolve(pi, nu).total_mass() == doctest::Approx(pi.total_mass() * nu.total_mass()).epsilon(1e-13));
}

TEST_CASE("gauge transforms compose exactly on a shared grid") {
  const double h = 0.01;
  const auto g = make_gauge(Curve{}, 6, 0.05, h, 200);
  const auto pi = CashflowIntensity::sampled(h, 0.25, [](double x) { return 2.0 + std::sin(5.0 * x); });
  const auto nu = CashflowIntensity::sampled(h, 0.4, [](double x) { return std::exp(-3.0 * x); });
  const auto twice = gauge_transform(gauge_transform(g, pi), nu);
  const auto once = gauge_transform(g, convolve(pi, nu));
  REQUIRE(twice.maturities() == once.maturities());
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(twice.deflator(i) == doctest::Approx(once.deflator(i)).epsilon(1e-12));
    for (std::size_t m = 0; m < once.maturities(); ++m)
      CHECK(twice.discount(i, m) == doctest::Approx(once.discount(i, m)).epsilon(1e-12));
  }
}

TEST_CASE("forward and short rates are exact for a quadratic log discount") {
  const Curve k;
  const double h = 0.05;
  const auto g = make_gauge(k, 4, 0.25, h, 30);
  const auto f = forward_rate(g);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t m = 0; m < 30; ++m)
      CHECK(f(i, m) == doctest::Approx(k.fwd(0.25 * static_cast<double>(i), h * static_cast<double>(m))).epsilon(1e-10));
  const auto r = short_rate(f);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == doctest::Approx(k.fwd(0.25 * static_cast<double>(i), h)).epsilon(1e-10));
  const auto back = term_structure_from_forward(f);
  for (std::size_t n = 0; n < back.values.size(); ++n)
    CHECK(back.values[n] == doctest::Approx(g.term_structure().values[n]).epsilon(1e-12));
}

TEST_CASE("portfolio gauge mixes forward rates with deflator weights") {
  const double h = 0.05;
  Curve k1, k2;
  k2.a = 0.04;
  k2.b = -0.005;
  k2.decay = 0.01;
  const std::vector<Gauge> gs{make_gauge(k1, 4, 0.25, h, 20), make_gauge(k2, 4, 0.25, h, 20)};
  const std::vector<double> x{2.0, 3.0};
  const auto w = portfolio_weights(x, std::vector<double>{gs[0].deflator(2), gs[1].deflator(2)});
  CHECK(w[0] + w[1] == doctest::Approx(1.0));
  const auto px = portfolio_gauge(x, gs);
  CHECK(px.deflator(2) == doctest::Approx(2.0 * gs[0].deflator(2) + 3.0 * gs[1].deflator(2)));
  const auto r_direct = short_rate(forward_rate(px));
  const auto r_mix = portfolio_short_rate(x, gs);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r_direct[i] == doctest::Approx(r_mix[i]).epsilon(1e-12));
}

TEST_CASE("gauge errors") {
  const double h = 0.05;
  const auto g = make_gauge(Curve{}, 3, 0.1, h, 10);
  CHECK_THROWS_AS(Gauge(UniformAxis{0.0, 0.1, 2}, h, {1.0, 1.0}, {0.9, 1.0}), DomainError);
  CHECK_THROWS_AS(Gauge(UniformAxis{0.0, 0.1, 2}, h, {1.0}, {1.0, 1.0}), ShapeError);
  CHECK_THROWS_AS(CashflowIntensity::sampled(0.03, 0.3, [](double) { return 1.0; }).resampled(0.05), GridError);
  CHECK_THROWS_AS(gauge_transform(g, CashflowIntensity::sampled(h, 1.0, [](double) { return 1.0; })), HorizonError);
  const std::vector<Gauge> gs{g, g};
  CHECK_THROWS_AS(portfolio_gauge(std::vector<double>{1.0, -1.0}, gs), DegenerateError);
  const auto other = make_gauge(Curve{}, 3, 0.1, h, 12);
  CHECK_THROWS_AS(portfolio_gauge(std::vector<double>{1.0, 1.0}, std::vector<Gauge>{g, other}), GridError);
}

TEST_CASE("commensurate resampling keeps point masses and coincident samples") {
  const auto d = CashflowIntensity(0.1, {5.0});
  const auto dr = d.resampled(0.025);
  CHECK(dr.total_mass() == doctest::Approx(0.5));
  const auto lin = CashflowIntensity::sampled(0.1, 0.5, [](double x) { return 1.0 + 2.0 * x; });
  const auto fine = lin.resampled(0.05);
  REQUIRE(fine.size() == 11);
  for (std::size_t k = 0; k < fine.size(); ++k) CHECK(fine.samples()[k] == doctest::Approx(1.0 + 0.1 * static_cast<double>(k)));
  const auto coarse = fine.resampled(0.1);
  for (std::size_t k = 0; k < coarse.size(); ++k) CHECK(coarse.samples()[k] == doctest::Approx(lin.samples()[k]));
}

TEST_CASE("gauge and intensity csv round trip") {
  const auto dir = oracle::scratch("gauges");
  const auto g = make_gauge(Curve{}, 3, 0.1, 0.05, 6);
  write_gauge_csv(g, dir / "d.csv", dir / "p.csv");
  const auto back = read_gauge_csv(dir / "d.csv", dir / "p.csv");
  CHECK(back.shares_grid_with(g));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.deflator(i) == g.deflator(i));
    for (std::size_t m = 0; m < 6; ++m) CHECK(back.discount(i, m) == doctest::Approx(g.discount(i, m)).epsilon(1e-15));
  }
  const auto pm = CashflowIntensity::dirac(0.05);
  write_intensity_csv(pm, dir / "pi.csv");
  const auto pb = read_intensity_csv(dir / "pi.csv");
  CHECK(pb.step() == doctest::Approx(0.05));
  CHECK(pb.total_mass() == doctest::Approx(1.0));
}
