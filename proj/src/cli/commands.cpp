#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "config.hpp"
#include "gat/cli.hpp"
#include "gat/csv.hpp"
#include "gat/fdsolver.hpp"
#include "gat/geometry.hpp"
#include "gat/pricing.hpp"
#include "gat/simulate.hpp"
#include "gat/surface.hpp"

namespace gat::cli {
namespace {

using csv::format_double;

// Errors from a wrapped module, re-raised with the module name in front.
template <typename F>
auto tagged(const char* module, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw ModuleError(module, e.what());
  }
}

Node open_root(const Document& doc) {
  Node root(doc.tree, "");
  root.raw("schema_version");
  if (root.has("seed")) root.raw("seed");
  root.text("description", "");
  return root;
}

std::filesystem::path prepare(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw UsageError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

// CSV with text cells; numbers go through format_double.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}
  template <typename... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    rows_.push_back(std::move(r));
  }
  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

json spec_json(const CallSpec& s) {
  return json{{"K", s.K}, {"T", s.T}, {"sigma", s.sigma}, {"rho", s.rho}, {"r", s.r}};
}

json convention_json(const pricing::SourceConvention& c) {
  return json{{"scale", pricing::to_string(c.scale)}, {"sign", pricing::to_string(c.sign)}};
}

void write_meta(const std::filesystem::path& dir, const std::string& command, const Document& doc, json results,
                std::vector<std::string> outputs, int code) {
  json meta;
  meta["command"] = command;
  meta["schema_version"] = kSchemaVersion;
  meta["seed"] = doc.seed;
  meta["status"] = code == kOk ? "ok" : "flagged";
  meta["exit_code"] = code;
  outputs.push_back(command + ".meta.json");
  meta["outputs"] = outputs;
  meta["config"] = doc.tree;
  meta["results"] = std::move(results);
  std::ofstream out(dir / (command + ".meta.json"), std::ios::binary);
  if (!out) throw IoError("cannot write metadata in " + dir.string());
  out << meta.dump(2) << '\n';
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n == 1) return {a};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = b;
  return v;
}

// Output window shared by price and solve-pde.
struct Window {
  std::vector<double> t;
  double x_min = 0.0, x_max = 0.0;
  std::size_t x_points = 0;
  bool undiscounted = false;
};

Window parse_window(std::optional<Node> n, const CallSpec& spec, bool want_t, bool want_points) {
  Window w;
  w.t = {0.0, 0.25 * spec.T, 0.5 * spec.T, 0.75 * spec.T, spec.T};
  w.x_min = 0.5 * spec.K;
  w.x_max = 1.5 * spec.K;
  w.x_points = 101;
  if (n) {
    if (want_t) w.t = n->list("t", w.t);
    w.x_min = n->number("x_min", w.x_min);
    w.x_max = n->number("x_max", w.x_max);
    if (want_points) w.x_points = n->count("x_points", w.x_points);
    w.undiscounted = n->flag("undiscounted", false);
    n->finish();
  }
  if (!(w.x_min > 0.0) || !(w.x_max > w.x_min)) throw UsageError("output: need 0 < x_min < x_max");
  if (w.x_points < 2) throw UsageError("output.x_points: need at least 2");
  for (double t : w.t)
    if (t < 0.0 || t > spec.T) throw UsageError("output.t: times must lie in [0, T]");
  if (w.t.empty()) throw UsageError("output.t: need at least one time");
  return w;
}

struct TransformSettings {
  std::size_t tau_intervals = 64, y_intervals = 800;
  double y_halfwidth = 0.0;
};

TransformSettings parse_transform(std::optional<Node> n) {
  TransformSettings g;
  if (n) {
    g.tau_intervals = n->count("tau_intervals", g.tau_intervals);
    g.y_intervals = n->count("y_intervals", g.y_intervals);
    g.y_halfwidth = n->number("y_halfwidth", g.y_halfwidth);
    n->finish();
  }
  if (g.tau_intervals < 2 || g.y_intervals < 2) throw UsageError("grid: need at least 2 intervals per axis");
  if (g.y_halfwidth < 0.0) throw UsageError("grid.y_halfwidth: must be non-negative");
  return g;
}

json transform_json(const pricing::TransformGrid& g) {
  return json{{"tau_intervals", g.tau.size - 1},
              {"y_intervals", g.y.size - 1},
              {"tau_max", g.tau.back()},
              {"y_min", g.y.start},
              {"y_max", g.y.back()}};
}

}  // namespace

// ---------------------------------------------------------------- check-zc

int cmd_check_zc(const Invocation& inv, std::ostream& log) {
  const Document doc = load(inv.config, inv.seed);
  Node root = open_root(doc);
  const Market market = parse_market(root.child("market"));
  const double tol = root.number("tolerance", 1e-10);
  root.finish();
  if (!(tol > 0.0)) throw UsageError("tolerance: must be positive");
  const auto dir = prepare(inv.out);

  TextTable summary({"t", "residual", "rank", "B", "rho_norm"});
  TextTable rho_rows({"t", "component", "rho"});
  json points = json::array();
  double max_residual = 0.0;
  for (const auto& c : market.points) {
    const auto [res, rho, rank] = tagged("geometry", [&] {
      return std::tuple{geometry::zc_residual(c), geometry::rho(c, market.orientation),
                        geometry::numerical_rank(c.sigma)};
    });
    max_residual = std::max(max_residual, res);
    summary.row(c.t, res, rank, static_cast<std::size_t>(rho.size()), rho.norm());
    for (Eigen::Index b = 0; b < rho.size(); ++b) rho_rows.row(c.t, static_cast<std::size_t>(b), rho[b]);
    points.push_back(json{{"t", c.t}, {"residual", res}, {"rank", rank}, {"B", rho.size()}, {"rho", vec_json(rho)}});
  }
  summary.write(dir / "check_zc.csv");
  rho_rows.write(dir / "check_zc_rho.csv");
  const bool zc = max_residual < tol;
  const int code = zc ? kOk : kFlagged;
  json results{{"max_residual", max_residual}, {"tolerance", tol}, {"zero_curvature", zc}, {"points", points}};
  write_meta(dir, "check-zc", doc, results, {"check_zc.csv", "check_zc_rho.csv"}, code);
  log << "check-zc: " << market.points.size() << " point(s), max residual " << format_double(max_residual)
      << (zc ? " < " : " >= ") << format_double(tol) << (zc ? " (zero curvature)" : " (arbitrage)") << '\n';
  return code;
}

// ------------------------------------------------------------------- price

int cmd_price(const Invocation& inv, std::ostream& log) {
  const Document doc = load(inv.config, inv.seed);
  Node root = open_root(doc);
  const CallSpec spec = parse_call(root.child("call"));
  const auto conv = parse_convention(root.optional_child("convention"));
  const auto gs = parse_transform(root.optional_child("grid"));
  const Window w = parse_window(root.optional_child("output"), spec, true, true);
  bool check = true;
  double conv_tol = 1e-4;
  if (auto c = root.optional_child("convergence")) {
    check = c->flag("enabled", check);
    conv_tol = c->number("tolerance", conv_tol);
    c->finish();
  }
  root.finish();
  const auto dir = prepare(inv.out);

  const auto grid = tagged("pricing", [&] {
    return pricing::TransformGrid::for_spec(spec, gs.tau_intervals, gs.y_intervals, gs.y_halfwidth);
  });
  const auto sol = tagged("pricing", [&] { return pricing::solve_perturbation(spec, grid, conv); });
  const auto x = linspace(w.x_min, w.x_max, w.x_points);
  const auto surface = tagged("pricing", [&] { return sol.surface(w.t, x); });
  std::vector<std::string> outputs{"price.csv"};
  write_surface_csv(surface, dir / "price.csv", "Phi");
  if (w.undiscounted) {
    PriceSurface psi{w.t, x, std::vector<double>(surface.values.size())};
    tagged("pricing", [&] {
      for (std::size_t i = 0; i < w.t.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) psi(i, j) = sol.price_undiscounted(x[j], w.t[i]);
    });
    csv::Table t{{"t", "S", "Psi"}, {}};
    for (std::size_t i = 0; i < psi.t.size(); ++i)
      for (std::size_t j = 0; j < psi.x.size(); ++j) t.rows.push_back({psi.t[i], psi.x[j], psi(i, j)});
    csv::write(dir / "price_undiscounted.csv", t);
    outputs.push_back("price_undiscounted.csv");
  }

  // Grid convergence: the same surface on a grid with both axes halved.
  json convergence{{"enabled", check}, {"tolerance", conv_tol}};
  bool converged = true;
  if (check && sol.fields()) {
    const auto coarse_grid = tagged("pricing", [&] {
      return pricing::TransformGrid::for_spec(spec, std::max<std::size_t>(2, gs.tau_intervals / 2),
                                              std::max<std::size_t>(2, gs.y_intervals / 2), gs.y_halfwidth);
    });
    const auto coarse = tagged("pricing", [&] { return pricing::solve_perturbation(spec, coarse_grid, conv); });
    const auto cs = tagged("pricing", [&] { return coarse.surface(w.t, x); });
    double diff = 0.0;
    for (std::size_t k = 0; k < cs.values.size(); ++k) diff = std::max(diff, std::abs(cs.values[k] - surface.values[k]));
    converged = diff <= conv_tol * spec.K;
    convergence["coarse_grid"] = transform_json(coarse_grid);
    convergence["max_abs_diff"] = diff;
    convergence["max_rel_diff"] = diff / spec.K;
    convergence["passed"] = converged;
  } else {
    convergence["passed"] = true;
    convergence["note"] = sol.fields() ? "disabled" : "rho = 0: closed form, no correction fields";
  }

  json results;
  results["call"] = spec_json(spec);
  results["convention"] = convention_json(conv);
  results["expansion"] = sol.expansion();
  results["grid"] = transform_json(grid);
  results["warnings"] = spec.warnings();
  if (const auto* f = sol.fields())
    results["quadrature_probe"] = json{{"tau", f->probe_tau}, {"y", f->probe_y}, {"U1", f->probe_u1},
                                       {"U1_refined", f->probe_u1_refined}};
  results["atm_t0"] = tagged("pricing", [&] { return sol.price_discounted(spec.discounted_strike(), 0.0); });
  results["convergence"] = convergence;
  const int code = converged ? kOk : kFlagged;
  write_meta(dir, "price", doc, results, outputs, code);
  log << "price: Phi(0, K e^{-rT}) = " << format_double(results["atm_t0"].get<double>()) << ", " << surface.values.size()
      << " nodes" << (converged ? "" : ", grid convergence check FAILED") << '\n';
  return code;
}

// --------------------------------------------------------------- solve-pde

int cmd_solve_pde(const Invocation& inv, std::ostream& log) {
  const Document doc = load(inv.config, inv.seed);
  Node root = open_root(doc);
  const CallSpec spec = parse_call(root.child("call"));
  std::size_t nx = 256, nt = 256, store_every = 1;
  double width_sd = 4.0;
  if (auto g = root.optional_child("grid")) {
    nx = g->count("space_intervals", nx);
    nt = g->count("time_intervals", nt);
    width_sd = g->number("width_sd", width_sd);
    store_every = g->count("store_every", store_every);
    g->finish();
  }
  fd::SolveOptions opts;
  if (auto s = root.optional_child("solver")) {
    opts.rannacher_steps = s->count("rannacher_steps", opts.rannacher_steps);
    opts.max_halvings = s->count("max_halvings", opts.max_halvings);
    s->finish();
  }
  std::optional<Window> window;
  if (root.has("output")) window = parse_window(root.optional_child("output"), spec, false, false);
  root.finish();
  if (!(width_sd > 0.0)) throw UsageError("grid.width_sd: must be positive");
  const bool undiscounted = window && window->undiscounted;
  const auto dir = prepare(inv.out);

  auto grid = tagged("fdsolver", [&] { return fd::make_grid(spec, nx, nt, width_sd, undiscounted); });
  grid.store_every = store_every;
  grid = tagged("fdsolver", [&] {
    return undiscounted ? fd::solve_undiscounted(spec, std::move(grid), opts) : fd::solve(spec, std::move(grid), opts);
  });

  PriceSurface out = grid.surface;
  if (window) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < out.x.size(); ++j)
      if (out.x[j] >= window->x_min && out.x[j] <= window->x_max) cols.push_back(j);
    PriceSurface f{out.t, {}, {}};
    for (auto j : cols) f.x.push_back(out.x[j]);
    for (std::size_t i = 0; i < out.t.size(); ++i)
      for (auto j : cols) f.values.push_back(out(i, j));
    out = std::move(f);
  }
  const std::string value = undiscounted ? "Psi" : "Phi";
  write_surface_csv(out, dir / "solve_pde.csv", value);

  const double centre = tagged("fdsolver", [&] { return fd::interpolate(grid, 0, grid.strike); });
  json results;
  results["call"] = spec_json(spec);
  results["undiscounted"] = undiscounted;
  results["grid"] = json{{"space_intervals", nx},     {"time_intervals", nt}, {"width_sd", width_sd},
                         {"half_width", grid.half_width}, {"strike_node", grid.strike}, {"store_every", store_every}};
  results["halvings_used"] = grid.halvings_used;
  results["warnings"] = spec.warnings();
  results["value_at_strike_t0"] = centre;
  write_meta(dir, "solve-pde", doc, results, {"solve_pde.csv"}, kOk);
  log << "solve-pde: " << value << "(0, " << format_double(grid.strike) << ") = " << format_double(centre) << ", "
      << out.values.size() << " nodes\n";
  return kOk;
}

// ----------------------------------------------------------------- compare

namespace {

// Richardson-extrapolated finite-difference values at t = 0.
std::vector<double> fd_reference(const CallSpec& spec, const std::vector<std::size_t>& sizes, double width_sd,
                                 const std::vector<double>& X) {
  std::vector<std::vector<double>> levels;
  for (auto n : sizes) {
    auto grid = fd::make_grid(spec, n, n, width_sd);
    grid.store_every = n;
    grid = fd::solve(spec, std::move(grid));
    std::vector<double> v;
    for (double x : X) v.push_back(fd::interpolate(grid, 0, x));
    levels.push_back(std::move(v));
  }
  if (levels.size() == 1) return levels[0];
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = (4.0 * levels[1][i] - levels[0][i]) / 3.0;
  return out;
}

}  // namespace

int cmd_compare(const Invocation& inv, std::ostream& log) {
  const Document doc = load(inv.config, inv.seed);
  Node root = open_root(doc);
  const CallSpec base = parse_call(root.child("call"));
  const auto configured = parse_convention(root.optional_child("convention"));
  const auto gs = parse_transform(root.optional_child("grid"));
  const auto rhos = root.list("rhos", {0.04, 0.02, 0.01});
  const auto probes = root.list("probes", {-0.1, -0.05, 0.0, 0.05, 0.1});
  std::vector<std::size_t> fd_sizes{2048, 4096};
  double width_sd = 6.0;
  if (auto f = root.optional_child("reference")) {
    fd_sizes = f->counts("intervals", fd_sizes);
    width_sd = f->number("width_sd", width_sd);
    f->finish();
  }
  double ratio_lo = 5.5, ratio_hi = 10.5;
  if (auto r = root.optional_child("ratio_window")) {
    ratio_lo = r->number("min", ratio_lo);
    ratio_hi = r->number("max", ratio_hi);
    r->finish();
  }
  double cl_lo = 0.8, cl_hi = 1.2, cl_tol = 1e-3;
  std::size_t cl_points = 9;
  if (auto c = root.optional_child("classical")) {
    cl_lo = c->number("moneyness_min", cl_lo);
    cl_hi = c->number("moneyness_max", cl_hi);
    cl_points = c->count("points", cl_points);
    cl_tol = c->number("tolerance", cl_tol);
    c->finish();
  }
  root.finish();
  if (rhos.size() < 2) throw UsageError("rhos: need at least two values");
  for (std::size_t i = 0; i < rhos.size(); ++i)
    if (!(rhos[i] > 0.0) || (i > 0 && !(rhos[i] < rhos[i - 1])))
      throw UsageError("rhos: values must be positive and decreasing");
  if (probes.empty()) throw UsageError("probes: need at least one log-moneyness");
  if (fd_sizes.empty() || fd_sizes.size() > 2) throw UsageError("reference.intervals: one or two grid sizes");
  if (fd_sizes.size() == 2 && fd_sizes[1] != 2 * fd_sizes[0])
    throw UsageError("reference.intervals: the second size must double the first");
  if (!(cl_lo > 0.0) || !(cl_hi > cl_lo) || cl_points < 2) throw UsageError("classical: invalid moneyness lattice");
  const auto dir = prepare(inv.out);

  CallSpec spec = base;
  spec.rho = rhos[0];
  const double Kd = spec.discounted_strike();
  std::vector<double> X;
  for (double y : probes) X.push_back(Kd * std::exp(y));

  const auto grid = tagged("pricing", [&] {
    return pricing::TransformGrid::for_spec(spec, gs.tau_intervals, gs.y_intervals, gs.y_halfwidth);
  });
  const auto sol = tagged("pricing", [&] { return pricing::solve_perturbation(spec, grid, configured); });

  std::vector<std::vector<double>> refs;
  for (double rho : rhos) {
    CallSpec s = base;
    s.rho = rho;
    refs.push_back(tagged("fdsolver", [&] { return fd_reference(s, fd_sizes, width_sd, X); }));
  }

  using pricing::SourceScale;
  using pricing::SourceSign;
  const std::vector<pricing::SourceConvention> candidates{{SourceScale::dimensionless, SourceSign::minus},
                                                          {SourceScale::dimensionless, SourceSign::plus},
                                                          {SourceScale::strike_scaled, SourceSign::minus},
                                                          {SourceScale::strike_scaled, SourceSign::plus}};
  TextTable errors({"scale", "sign", "rho", "y", "X", "perturbation", "reference", "error"});
  TextTable ratios({"scale", "sign", "rho", "rho_half", "max_error", "max_error_half", "ratio", "in_window"});
  json table = json::array();
  std::vector<std::string> passing_scales;
  std::optional<pricing::SourceConvention> adopted;
  std::size_t passing = 0;
  for (const auto& c : candidates) {
    const auto scale = pricing::to_string(c.scale), sign = pricing::to_string(c.sign);
    std::vector<double> max_err;
    for (std::size_t r = 0; r < rhos.size(); ++r) {
      const auto s = sol.with_convention(c).with_rho(rhos[r]);
      double m = 0.0;
      for (std::size_t p = 0; p < X.size(); ++p) {
        const double v = tagged("pricing", [&] { return s.price_discounted(X[p], 0.0); });
        const double e = std::abs(v - refs[r][p]);
        m = std::max(m, e);
        errors.row(scale, sign, rhos[r], probes[p], X[p], v, refs[r][p], e);
      }
      max_err.push_back(m);
    }
    bool ok = true;
    json rj = json::array();
    for (std::size_t r = 0; r + 1 < rhos.size(); ++r) {
      const double ratio = max_err[r] / max_err[r + 1];
      const bool in = ratio >= ratio_lo && ratio <= ratio_hi;
      ok = ok && in;
      ratios.row(scale, sign, rhos[r], rhos[r + 1], max_err[r], max_err[r + 1], ratio, in);
      rj.push_back(number(ratio));
    }
    json me = json::array();
    for (double m : max_err) me.push_back(m);
    table.push_back(json{{"scale", scale}, {"sign", sign}, {"max_error", me}, {"ratios", rj}, {"passes", ok}});
    if (ok) {
      ++passing;
      adopted = c;
      if (std::find(passing_scales.begin(), passing_scales.end(), scale) == passing_scales.end())
        passing_scales.push_back(scale);
    }
  }
  errors.write(dir / "compare_errors.csv");
  ratios.write(dir / "compare_ratios.csv");

  // Classical limit: the series reduces to the closed form at rho = 0.
  CallSpec zero = base;
  zero.rho = 0.0;
  std::vector<double> Xc;
  for (std::size_t i = 0; i < cl_points; ++i)
    Xc.push_back(Kd * (cl_lo + (cl_hi - cl_lo) * static_cast<double>(i) / static_cast<double>(cl_points - 1)));
  const auto ref0 = tagged("fdsolver", [&] { return fd_reference(zero, fd_sizes, width_sd, Xc); });
  const auto sol0 = sol.with_rho(0.0);
  TextTable classical({"X", "perturbation", "reference", "diff"});
  double diff0 = 0.0;
  for (std::size_t i = 0; i < Xc.size(); ++i) {
    const double v = tagged("pricing", [&] { return sol0.price_discounted(Xc[i], 0.0); });
    diff0 = std::max(diff0, std::abs(v - ref0[i]));
    classical.row(Xc[i], v, ref0[i], std::abs(v - ref0[i]));
  }
  classical.write(dir / "compare_classical.csv");
  const bool classical_ok = diff0 < cl_tol * base.K;

  const bool unique = passing_scales.size() == 1 && passing == 1;
  json adjudication{{"candidates", table},
                    {"ratio_window", json::array({ratio_lo, ratio_hi})},
                    {"passing_scales", passing_scales},
                    {"unique", unique}};
  if (unique) {
    adjudication["adopted"] = convention_json(*adopted);
    adjudication["adopted_coefficient"] = adopted->coefficient(spec);
  } else {
    adjudication["adopted"] = nullptr;
  }
  const bool configured_passes = unique && adopted->scale == configured.scale && adopted->sign == configured.sign;
  json results;
  results["call"] = spec_json(base);
  results["rhos"] = rhos;
  results["probes_y"] = probes;
  results["grid"] = transform_json(grid);
  results["reference"] = json{{"intervals", fd_sizes}, {"width_sd", width_sd}, {"richardson", fd_sizes.size() == 2}};
  results["configured_convention"] = convention_json(configured);
  results["configured_convention_adopted"] = configured_passes;
  results["adjudication"] = adjudication;
  results["classical"] = json{{"max_abs_diff", diff0}, {"tolerance", cl_tol * base.K}, {"passed", classical_ok}};
  const int code = unique && classical_ok ? kOk : kFlagged;
  write_meta(dir, "compare", doc, results, {"compare_errors.csv", "compare_ratios.csv", "compare_classical.csv"}, code);

  log << "compare: " << passing << " candidate(s) in the ratio window";
  if (unique) log << ", adopted " << pricing::to_string(adopted->scale) << "/" << pricing::to_string(adopted->sign);
  log << "; rho = 0 max diff " << format_double(diff0) << (classical_ok ? "" : " (above tolerance)") << '\n';
  return code;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Invocation& inv, std::ostream& log) {
  const Document doc = load(inv.config, inv.seed);
  Node root = open_root(doc);
  const Market market = parse_market(root.child("market"));
  sim::SimConfig cfg;
  cfg.seed = doc.seed;
  {
    Node s = root.child("simulation");
    cfg.paths = s.count("paths", cfg.paths);
    cfg.dt = s.number("dt", cfg.dt);
    cfg.steps = s.count("steps", cfg.steps);
    cfg.record_every = s.count("record_every", cfg.record_every);
    s.finish();
  }
  sim::EstimatorConfig ecfg;
  if (auto e = root.optional_child("estimator")) {
    ecfg.h = e->number("h", ecfg.h);
    ecfg.k = e->count("k", ecfg.k);
    ecfg.t_min = e->number("t_min", ecfg.t_min);
    e->finish();
  }
  const double T = cfg.dt * static_cast<double>(cfg.steps);
  double t_lo = 0.2 * T, t_hi = 0.8 * T, z_max = 3.0;
  if (auto b = root.optional_child("rho_bucket")) {
    t_lo = b->number("t_lo", t_lo);
    t_hi = b->number("t_hi", t_hi);
    z_max = b->number("max_z", z_max);
    b->finish();
  }
  bool binary = true;
  std::size_t csv_paths = 100;
  if (auto o = root.optional_child("output")) {
    binary = o->flag("binary", binary);
    csv_paths = o->count("csv_paths", csv_paths);
    o->finish();
  }
  root.finish();
  if (market.S0.size() == 0) throw UsageError("market.S0: required for simulate");
  if (cfg.paths == 0 || cfg.steps == 0 || cfg.record_every == 0 || !(cfg.dt > 0.0))
    throw UsageError("simulation: paths, steps, record_every and dt must be positive");
  if (cfg.steps % cfg.record_every != 0) throw UsageError("simulation: steps must be a multiple of record_every");
  if (!(t_hi > t_lo) || t_lo < 0.0 || t_hi > T) throw UsageError("rho_bucket: need 0 <= t_lo < t_hi <= T");
  if (!(z_max > 0.0)) throw UsageError("rho_bucket.max_z: must be positive");
  const auto dir = prepare(inv.out);

  // Piecewise-constant schedule: each step uses the last point at or before its start.
  sim::ModelSchedule model;
  model.S0 = market.S0;
  model.dt = cfg.dt;
  if (market.points.size() == 1) {
    model.steps = market.points;
  } else {
    for (std::size_t k = 0; k < cfg.steps; ++k) {
      const double t = cfg.dt * static_cast<double>(k);
      std::size_t idx = 0;
      for (std::size_t p = 0; p < market.points.size(); ++p)
        if (market.points[p].t <= t + 1e-12) idx = p;
      model.steps.push_back(market.points[idx]);
    }
  }

  const auto ens = tagged("simulate", [&] { return sim::simulate(model, cfg); });
  std::vector<std::string> outputs;
  if (binary) {
    tagged("simulate", [&] { sim::write_ensemble(ens, dir / "ensemble.gate"); });
    outputs.push_back("ensemble.gate");
  }
  if (csv_paths > 0) {
    tagged("simulate", [&] { sim::write_ensemble_csv(ens, dir / "paths.csv", csv_paths); });
    outputs.push_back("paths.csv");
  }

  const auto est =
      tagged("simulate", [&] { return sim::empirical_rho(ens, model, t_lo, t_hi, ecfg, market.orientation); });
  const auto resolved = tagged("simulate", [&] { return sim::resolve(ens, ecfg); });
  const std::size_t B = est.dimension;

  // Model rho averaged over the bucket's record times.
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(B));
  std::size_t in_bucket = 0;
  for (double t : est.t)
    if (t >= t_lo - 1e-12 && t <= t_hi + 1e-12) {
      truth += geometry::rho(model.at_time(t), market.orientation);
      ++in_bucket;
    }
  if (in_bucket > 0) truth /= static_cast<double>(in_bucket);

  TextTable series({"t", "component", "mean", "se"});
  for (std::size_t i = 0; i < est.t.size(); ++i)
    for (std::size_t b = 0; b < B; ++b)
      series.row(est.t[i], b, est.mean[i][static_cast<Eigen::Index>(b)], est.se[i][static_cast<Eigen::Index>(b)]);
  series.write(dir / "rho_series.csv");
  outputs.push_back("rho_series.csv");

  TextTable bucket({"component", "estimate", "se", "model", "z_model", "z_zero"});
  bool arbitrage = false, mismatch = false;
  json comps = json::array();
  for (std::size_t b = 0; b < B; ++b) {
    const auto bb = static_cast<Eigen::Index>(b);
    const double m = est.bucket_mean[bb], se = est.bucket_se[bb], tr = truth[bb];
    const double z_model = (m - tr) / se, z_zero = m / se;
    arbitrage = arbitrage || std::abs(z_zero) > z_max;
    mismatch = mismatch || std::abs(z_model) > z_max;
    bucket.row(b, m, se, tr, z_model, z_zero);
    comps.push_back(json{{"estimate", m}, {"se", se}, {"model", tr}, {"z_model", number(z_model)},
                         {"z_zero", number(z_zero)}});
  }
  bucket.write(dir / "rho_bucket.csv");
  outputs.push_back("rho_bucket.csv");

  json results;
  results["paths"] = cfg.paths;
  results["dt"] = cfg.dt;
  results["steps"] = cfg.steps;
  results["record_every"] = cfg.record_every;
  results["estimator"] = json{{"h", resolved.h}, {"lag_records", resolved.lag}, {"k", resolved.k},
                              {"t_min", resolved.t_min}};
  results["bucket"] = json{{"t_lo", t_lo}, {"t_hi", t_hi}, {"records", in_bucket}, {"max_z", z_max}};
  results["kernel_dimension"] = B;
  results["rho"] = comps;
  results["arbitrage_detected"] = arbitrage;
  results["model_mismatch"] = mismatch;
  const int code = arbitrage || mismatch ? kFlagged : kOk;
  write_meta(dir, "simulate", doc, results, outputs, code);

  log << "simulate: " << cfg.paths << " paths x " << cfg.steps << " steps, B = " << B;
  for (std::size_t b = 0; b < B; ++b) {
    const auto bb = static_cast<Eigen::Index>(b);
    log << "; rho[" << b << "] = " << format_double(est.bucket_mean[bb]) << " +- " << format_double(est.bucket_se[bb])
        << " (model " << format_double(truth[bb]) << ")";
  }
  if (arbitrage) log << "; arbitrage detected";
  if (mismatch) log << "; estimate inconsistent with the model";
  log << '\n';
  return code;
}

}  // namespace gat::cli
