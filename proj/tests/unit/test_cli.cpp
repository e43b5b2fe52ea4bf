#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "gat/cli.hpp"
#include "gat/csv.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gat");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = gat::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json read_meta(const fs::path& dir, const std::string& command) {
  std::ifstream in(dir / (command + ".meta.json"));
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Result run_cmd(const std::string& cmd, const fs::path& cfg, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{cmd, "--config", cfg.string(), "--out", out.string()};
  a.insert(a.end(), extra.begin(), extra.end());
  return invoke(a);
}

const json kSingle = {{"schema_version", 1},
                      {"market", {{"sigma", {{0.2}}}, {"alpha", {0.07}}, {"r", {0.01}}}}};
const json kPlanted = {{"schema_version", 1},
                       {"market", {{"sigma", {{0.2}, {0.1}}}, {"lambda", {0.3}}, {"rho", {0.02}}}}};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  const auto dir = oracle::scratch("cli_usage");
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"nonsense"}).code == 2);
  CHECK(invoke({"price", "--out", dir.string()}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(run_cmd("price", dir / "missing.json", dir / "o").code == 2);

  auto bad = kSingle;
  bad["market"]["colour"] = "blue";
  const auto r = run_cmd("check-zc", write_config(dir, "bad.json", bad), dir / "o");
  CHECK(r.code == 2);
  CHECK(r.err.find("colour") != std::string::npos);

  auto version = kSingle;
  version["schema_version"] = 2;
  CHECK(run_cmd("check-zc", write_config(dir, "v.json", version), dir / "o").code == 2);

  // Times outside [0, T] are caught while reading the config.
  const json price = {{"schema_version", 1},
                      {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}}},
                      {"output", {{"t", {0.0, 2.0}}}}};
  CHECK(run_cmd("price", write_config(dir, "p.json", price), dir / "o").code == 2);

  // A failure inside a module is reported with the module's name.
  const json pde = {{"schema_version", 1},
                    {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}}},
                    {"grid", {{"space_intervals", 32}}}};
  const auto m = run_cmd("solve-pde", write_config(dir, "s.json", pde), dir / "o");
  CHECK(m.code == 2);
  CHECK(m.err.find("solve-pde: fdsolver: ") != std::string::npos);
}

TEST_CASE("check-zc: zero curvature exits 0, planted rho exits 1") {
  const auto dir = oracle::scratch("cli_zc");
  CHECK(run_cmd("check-zc", write_config(dir, "single.json", kSingle), dir / "a").code == 0);
  const auto meta = read_meta(dir / "a", "check-zc");
  CHECK(meta["status"] == "ok");
  CHECK(meta["exit_code"] == 0);

  CHECK(run_cmd("check-zc", write_config(dir, "planted.json", kPlanted), dir / "b").code == 1);
  const auto t = gat::csv::read(dir / "b" / "check_zc.csv");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][1] == doctest::Approx(0.02).epsilon(1e-10));
  CHECK(read_meta(dir / "b", "check-zc")["status"] == "flagged");
}

TEST_CASE("price: deterministic output, payoff at maturity, Black-Scholes at rho = 0") {
  const auto dir = oracle::scratch("cli_price");
  const json cfg = {{"schema_version", 1},
                    {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}}},
                    {"grid", {{"tau_intervals", 32}, {"y_intervals", 400}}},
                    {"output", {{"t", {0.0, 1.0}}, {"x_min", 80}, {"x_max", 120}, {"x_points", 5}}}};
  const auto p = write_config(dir, "price.json", cfg);
  REQUIRE(run_cmd("price", p, dir / "a").code == 0);
  REQUIRE(run_cmd("price", p, dir / "b").code == 0);
  CHECK(slurp(dir / "a" / "price.csv") == slurp(dir / "b" / "price.csv"));
  CHECK(slurp(dir / "a" / "price.meta.json") == slurp(dir / "b" / "price.meta.json"));

  const auto t = gat::csv::read(dir / "a" / "price.csv");
  REQUIRE(t.header == std::vector<std::string>{"t", "X", "Phi"});
  for (const auto& row : t.rows) {
    const double tt = row[0], X = row[1], v = row[2];
    if (tt == 1.0) CHECK(v == doctest::Approx(std::max(X - 100.0, 0.0)));
    if (tt == 0.0) CHECK(v == doctest::Approx(oracle::bs_call(X, 100.0, 0.2, 1.0)).epsilon(1e-10));
  }
  const double atm = read_meta(dir / "a", "price")["results"]["atm_t0"];
  CHECK(std::abs(atm - 7.9656) < 5e-3);
}

TEST_CASE("price at positive rho lies below Black-Scholes and passes the convergence check") {
  const auto dir = oracle::scratch("cli_price_rho");
  const json cfg = {{"schema_version", 1},
                    {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}, {"rho", 0.02}, {"r", 0.03}}},
                    {"grid", {{"tau_intervals", 32}, {"y_intervals", 400}}},
                    {"convergence", {{"enabled", true}}},
                    {"output", {{"t", {0.0}}, {"x_points", 3}, {"undiscounted", true}}}};
  REQUIRE(run_cmd("price", write_config(dir, "p.json", cfg), dir / "o").code == 0);
  const auto meta = read_meta(dir / "o", "price");
  const double atm = meta["results"]["atm_t0"];
  CHECK(atm < oracle::bs_call(100.0 * std::exp(-0.03), 100.0 * std::exp(-0.03), 0.2, 1.0));
  CHECK(fs::exists(dir / "o" / "price_undiscounted.csv"));
}

TEST_CASE("solve-pde writes a surface and matches Black-Scholes at rho = 0") {
  const auto dir = oracle::scratch("cli_pde");
  const json cfg = {{"schema_version", 1},
                    {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}}},
                    {"grid", {{"space_intervals", 256}, {"time_intervals", 256}, {"store_every", 64}}},
                    {"output", {{"x_min", 60}, {"x_max", 140}}}};
  REQUIRE(run_cmd("solve-pde", write_config(dir, "s.json", cfg), dir / "o").code == 0);
  const double v = read_meta(dir / "o", "solve-pde")["results"]["value_at_strike_t0"];
  CHECK(std::abs(v - oracle::bs_call(100.0, 100.0, 0.2, 1.0)) < 1e-2);
  const auto t = gat::csv::read(dir / "o" / "solve_pde.csv");
  CHECK(t.header.size() == 3);
  CHECK(!t.rows.empty());
}

TEST_CASE("compare adopts the dimensionless constant with the sign that solves the equation") {
  const auto dir = oracle::scratch("cli_compare");
  const json cfg = {{"schema_version", 1}, {"call", {{"K", 100}, {"T", 1}, {"sigma", 0.2}}}};
  const auto r = run_cmd("compare", write_config(dir, "c.json", cfg), dir / "o");
  CHECK(r.code == 0);
  const auto adj = read_meta(dir / "o", "compare")["results"]["adjudication"];
  CHECK(adj["unique"] == true);
  CHECK(adj["adopted"]["scale"] == "dimensionless");
  CHECK(adj["adopted"]["sign"] == "minus");
  CHECK(double(adj["adopted_coefficient"]) == doctest::Approx(50.0));
}

TEST_CASE("simulate: planted rho recovered, seed override changes the ensemble") {
  const auto dir = oracle::scratch("cli_sim");
  json cfg = {{"schema_version", 1},
              {"seed", 11},
              {"market", {{"S0", {100, 100}}, {"sigma", {{0.2}, {0.1}}}, {"lambda", {0.3}}, {"rho", {0.02}}}},
              {"simulation", {{"paths", 2000}, {"dt", 0.001}, {"steps", 400}, {"record_every", 5}}},
              {"output", {{"csv_paths", 5}}}};
  const auto p = write_config(dir, "sim.json", cfg);
  // A planted rho is flagged as arbitrage.
  CHECK(run_cmd("simulate", p, dir / "a").code == 1);
  const auto meta = read_meta(dir / "a", "simulate");
  CHECK(meta["seed"] == 11);
  const auto rho = meta["results"]["rho"][0];
  CHECK(std::abs(double(rho["estimate"]) - 0.02) < 3.0 * double(rho["se"]));
  CHECK(meta["results"]["model_mismatch"] == false);
  CHECK(meta["results"]["arbitrage_detected"] == true);

  CHECK(run_cmd("simulate", p, dir / "b").code == 1);
  CHECK(slurp(dir / "a" / "ensemble.gate") == slurp(dir / "b" / "ensemble.gate"));
  CHECK(run_cmd("simulate", p, dir / "c", {"--seed", "12"}).code == 1);
  CHECK(read_meta(dir / "c", "simulate")["seed"] == 12);
  CHECK(slurp(dir / "a" / "ensemble.gate") != slurp(dir / "c" / "ensemble.gate"));

  // Zero curvature: nothing flagged.
  cfg["market"]["rho"] = {0.0};
  CHECK(run_cmd("simulate", write_config(dir, "zc.json", cfg), dir / "d").code == 0);
}
