#include <CLI11.hpp>
#include <functional>
#include <map>

#include "gat/cli.hpp"

namespace gat::cli {

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arbitrage geometry and nonlinear Black-Scholes pricing"};
  app.require_subcommand(1);
  using Command = std::function<int(const Invocation&, std::ostream&)>;
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> table{
      {"check-zc", {"Zero-curvature residual and arbitrage measure of a market", cmd_check_zc}},
      {"price", {"Perturbation-series call prices", cmd_price}},
      {"solve-pde", {"Finite-difference call prices", cmd_solve_pde}},
      {"compare", {"Series against finite differences: error ratios and prefactor check", cmd_compare}},
      {"simulate", {"Monte Carlo ensemble and empirical arbitrage measure", cmd_simulate}},
  };
  std::map<std::string, Invocation> invocations;
  std::map<std::string, std::uint64_t> seeds;
  for (const auto& [name, entry] : table) {
    auto* sub = app.add_subcommand(name, entry.first);
    auto& inv = invocations[name];
    sub->add_option("--config", inv.config, "JSON config file")->required();
    sub->add_option("--out", inv.out, "Output directory")->required();
    sub->add_option("--seed", seeds[name], "Master seed (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  for (const auto& [name, entry] : table) {
    auto* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    auto inv = invocations[name];
    if (sub->count("--seed") > 0) inv.seed = seeds[name];
    try {
      return entry.second(inv, out);
    } catch (const UsageError& e) {
      err << "gat " << name << ": usage error: " << e.what() << '\n';
    } catch (const ModuleError& e) {
      err << "gat " << name << ": " << e.what() << '\n';
    } catch (const Error& e) {
      err << "gat " << name << ": " << e.what() << '\n';
    } catch (const std::exception& e) {
      err << "gat " << name << ": unexpected failure: " << e.what() << '\n';
    }
    return kUsage;
  }
  return kUsage;
}

}  // namespace gat::cli
