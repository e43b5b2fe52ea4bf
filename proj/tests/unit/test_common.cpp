#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gat/axis.hpp"
#include "gat/call_spec.hpp"
#include "gat/csv.hpp"
#include "gat/errors.hpp"
#include "gat/parallel.hpp"
#include "gat/quadrature.hpp"
#include "gat/surface.hpp"
#include "support/oracles.hpp"

using namespace gat;

TEST_CASE("gauss-legendre integrates polynomials up to degree 2n-1 exactly") {
  for (std::size_t n : {1u, 2u, 5u, 8u, 16u}) {
    const auto r = quad::gauss_legendre(n);
    CHECK(r.nodes.size() == n);
    for (std::size_t deg = 0; deg < 2 * n; ++deg) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += r.weights[i] * std::pow(r.nodes[i], static_cast<double>(deg));
      const double exact = deg % 2 ? 0.0 : 2.0 / static_cast<double>(deg + 1);
      CHECK(acc == doctest::Approx(exact).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(quad::gauss_legendre(0), DomainError);
}

TEST_CASE("cumulative trapezoid is exact for linear integrands") {
  const std::vector<double> x{0.0, 0.5, 1.5, 2.0};
  const std::vector<double> f{1.0, 2.0, 4.0, 5.0};  // f = 1 + 2x
  const auto c = quad::cumulative_trapezoid(x, f);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(c[i] == doctest::Approx(x[i] + x[i] * x[i]));
}

TEST_CASE("uniform axis recovery") {
  const auto a = uniform_axis_from({0.0, 0.25, 0.5, 0.75}, "t");
  CHECK(a.size == 4);
  CHECK(a.step == doctest::Approx(0.25));
  CHECK(a[3] == doctest::Approx(0.75));
  CHECK_THROWS_AS(uniform_axis_from({0.0, 0.2, 0.5}, "t"), GridError);
  CHECK_THROWS_AS(uniform_axis_from({1.0, 0.0}, "t"), GridError);
}

TEST_CASE("csv round trip keeps every bit") {
  const auto dir = oracle::scratch("csv");
  csv::Table t{{"a", "b"}, {{0.1, 1e-300}, {-3.141592653589793, 12345.678901234567}}};
  csv::write(dir / "t.csv", t);
  const auto back = csv::read(dir / "t.csv");
  CHECK(back.header == t.header);
  REQUIRE(back.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(back.rows[i][j] == t.rows[i][j]);
  CHECK_THROWS_AS(csv::read(dir / "missing.csv"), IoError);
}

TEST_CASE("surface csv uses long format") {
  const auto dir = oracle::scratch("surface");
  PriceSurface s{{0.0, 1.0}, {90.0, 100.0, 110.0}, {1, 2, 3, 4, 5, 6}};
  write_surface_csv(s, dir / "s.csv", "Phi");
  const auto t = csv::read(dir / "s.csv");
  CHECK(t.header == std::vector<std::string>{"t", "X", "Phi"});
  REQUIRE(t.rows.size() == 6);
  CHECK(t.rows[4] == std::vector<double>{1.0, 100.0, 5.0});
}

TEST_CASE("call spec validation and discounting") {
  CallSpec s;
  CHECK_NOTHROW(s.validate());
  s.r = 0.05;
  CHECK(s.discounted_strike() == doctest::Approx(100.0 * std::exp(-0.05)));
  CHECK(s.tau_max() == doctest::Approx(0.02));
  s.sigma = 0.0;
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.sigma = 0.2;
  s.K = std::nan("");
  CHECK_THROWS_AS(s.validate(), DomainError);
  CallSpec big;
  big.rho = 0.6;
  CHECK(big.warnings().size() == 1);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}
