#include "gat/gauges.hpp"

#include <cmath>
#include <map>
#include <string>

#include "gat/csv.hpp"
#include "gat/errors.hpp"

namespace gat::gauges {
namespace {

constexpr double kStepTol = 1e-9;

bool same_step(double a, double b) { return std::abs(a - b) <= kStepTol * std::max(a, b); }

// Integer n with a = n * b, or 0 when a is not an integer multiple of b.
std::size_t integer_ratio(double a, double b) {
  const double q = a / b;
  const double n = std::round(q);
  if (n < 1.0 || std::abs(q - n) > 1e-9 * n) return 0;
  return static_cast<std::size_t>(n);
}

}  // namespace

CashflowIntensity::CashflowIntensity(double step, std::vector<double> samples)
    : step_(step), samples_(std::move(samples)) {
  if (!(step_ > 0.0) || !std::isfinite(step_)) throw GridError("intensity: step must be positive and finite");
  if (samples_.empty()) throw GridError("intensity: needs at least one sample");
  for (double v : samples_)
    if (!std::isfinite(v)) throw DomainError("intensity: non-finite sample");
}

CashflowIntensity CashflowIntensity::dirac(double step) { return CashflowIntensity(step, {1.0 / step}); }

double CashflowIntensity::total_mass() const {
  double s = 0.0;
  for (double v : samples_) s += v;
  return step_ * s;
}

CashflowIntensity CashflowIntensity::resampled(double new_step) const {
  if (!(new_step > 0.0)) throw GridError("intensity: resample step must be positive");
  if (same_step(new_step, step_)) return *this;
  if (is_point_mass()) return CashflowIntensity(new_step, {total_mass() / new_step});

  if (const std::size_t refine = integer_ratio(step_, new_step)) {
    std::vector<double> out((samples_.size() - 1) * refine + 1);
    for (std::size_t k = 0; k + 1 < samples_.size(); ++k)
      for (std::size_t j = 0; j < refine; ++j) {
        const double w = static_cast<double>(j) / static_cast<double>(refine);
        out[k * refine + j] = (1.0 - w) * samples_[k] + w * samples_[k + 1];
      }
    out.back() = samples_.back();
    return CashflowIntensity(new_step, std::move(out));
  }
  if (const std::size_t coarsen = integer_ratio(new_step, step_)) {
    const std::size_t n = (samples_.size() - 1 + coarsen - 1) / coarsen + 1;
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      if (k * coarsen < samples_.size()) out[k] = samples_[k * coarsen];
    return CashflowIntensity(new_step, std::move(out));
  }
  throw GridError("intensity: steps " + std::to_string(step_) + " and " + std::to_string(new_step) +
                  " are not commensurate");
}

CashflowIntensity convolve(const CashflowIntensity& pi, const CashflowIntensity& nu) {
  const double step = std::min(pi.step(), nu.step());
  const CashflowIntensity a = pi.resampled(step);
  const CashflowIntensity b = nu.resampled(step);
  const auto sa = a.samples();
  const auto sb = b.samples();
  std::vector<double> out(sa.size() + sb.size() - 1, 0.0);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] == 0.0) continue;
    for (std::size_t j = 0; j < sb.size(); ++j) out[i + j] += sa[i] * sb[j];
  }
  for (double& v : out) v *= step;
  return CashflowIntensity(step, std::move(out));
}

Gauge::Gauge(UniformAxis valuation, double maturity_step, std::vector<double> deflator,
             std::vector<double> term_structure)
    : deflator_(std::move(deflator)) {
  valuation.validate("gauge valuation");
  if (!(maturity_step > 0.0) || !std::isfinite(maturity_step))
    throw GridError("gauge: maturity step must be positive and finite");
  if (deflator_.size() != valuation.size) throw ShapeError("gauge: deflator length != valuation nodes");
  if (term_structure.empty() || term_structure.size() % valuation.size != 0)
    throw ShapeError("gauge: term structure size is not a multiple of the valuation nodes");
  surface_.valuation = valuation;
  surface_.maturity_step = maturity_step;
  surface_.maturities = term_structure.size() / valuation.size;
  surface_.values = std::move(term_structure);
  for (double d : deflator_)
    if (!std::isfinite(d)) throw DomainError("gauge: non-finite deflator");
  for (std::size_t i = 0; i < valuation.size; ++i) {
    if (std::abs(surface_(i, 0) - 1.0) > 1e-12)
      throw DomainError("gauge: P(t,t) != 1 at valuation index " + std::to_string(i));
    for (std::size_t m = 0; m < surface_.maturities; ++m) {
      const double p = surface_(i, m);
      if (!(p > 0.0) || !std::isfinite(p))
        throw DomainError("gauge: term structure must be positive and finite");
    }
  }
}

bool Gauge::shares_grid_with(const Gauge& other) const {
  return valuation().same_as(other.valuation()) && same_step(maturity_step(), other.maturity_step()) &&
         maturities() == other.maturities();
}

Gauge gauge_transform(const Gauge& g, const CashflowIntensity& pi) {
  const CashflowIntensity p = pi.resampled(g.maturity_step());
  const auto w = p.samples();
  const std::size_t support = w.size() - 1;
  if (support + 1 > g.maturities())
    throw HorizonError("gauge_transform: term structure horizon shorter than intensity support");
  const std::size_t out_m = g.maturities() - support;
  const std::size_t nv = g.valuation().size;
  const double h = p.step();

  std::vector<double> deflator(nv);
  std::vector<double> ts(nv * out_m);
  for (std::size_t i = 0; i < nv; ++i) {
    // Numerator at offset m is sum_k pi_k P(t, t + (m + k) h); denominator is the m = 0 case.
    for (std::size_t m = 0; m < out_m; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= support; ++k) acc += w[k] * g.discount(i, m + k);
      ts[i * out_m + m] = h * acc;
    }
    const double denom = ts[i * out_m];
    if (!(denom > 0.0)) throw DegenerateError("gauge_transform: nonpositive normalising integral");
    deflator[i] = g.deflator(i) * denom;
    for (std::size_t m = 0; m < out_m; ++m) ts[i * out_m + m] /= denom;
    ts[i * out_m] = 1.0;
  }
  return Gauge(g.valuation(), g.maturity_step(), std::move(deflator), std::move(ts));
}

ForwardSurface forward_rate(const Gauge& g) {
  const std::size_t nm = g.maturities();
  if (nm < 2) throw GridError("forward_rate: need at least two maturity nodes");
  ForwardSurface f{g.valuation(), g.maturity_step(), nm, std::vector<double>(g.valuation().size * nm)};
  const double h = g.maturity_step();
  std::vector<double> lp(nm);
  for (std::size_t i = 0; i < g.valuation().size; ++i) {
    for (std::size_t m = 0; m < nm; ++m) lp[m] = std::log(g.discount(i, m));
    if (nm == 2) {
      f(i, 0) = f(i, 1) = -(lp[1] - lp[0]) / h;
      continue;
    }
    f(i, 0) = -(-3.0 * lp[0] + 4.0 * lp[1] - lp[2]) / (2.0 * h);
    for (std::size_t m = 1; m + 1 < nm; ++m) f(i, m) = -(lp[m + 1] - lp[m - 1]) / (2.0 * h);
    f(i, nm - 1) = -(3.0 * lp[nm - 1] - 4.0 * lp[nm - 2] + lp[nm - 3]) / (2.0 * h);
  }
  return f;
}

TimeOffsetSurface term_structure_from_forward(const ForwardSurface& f) {
  if (f.maturities == 0) throw GridError("term_structure_from_forward: empty maturity axis");
  TimeOffsetSurface p = f;
  for (std::size_t i = 0; i < f.valuation.size; ++i) {
    double acc = 0.0;
    p(i, 0) = 1.0;
    for (std::size_t m = 1; m < f.maturities; ++m) {
      acc += 0.5 * f.maturity_step * (f(i, m - 1) + f(i, m));
      p(i, m) = std::exp(-acc);
    }
  }
  return p;
}

std::vector<double> short_rate(const ForwardSurface& f) {
  if (f.maturities < 2) throw GridError("short_rate: need a maturity node beyond t");
  std::vector<double> r(f.valuation.size);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = f(i, 1);
  return r;
}

std::vector<double> portfolio_weights(std::span<const double> nominals, std::span<const double> deflators) {
  if (nominals.size() != deflators.size()) throw ShapeError("portfolio_weights: size mismatch");
  if (nominals.empty()) throw ShapeError("portfolio_weights: empty portfolio");
  double total = 0.0;
  for (std::size_t j = 0; j < nominals.size(); ++j) total += nominals[j] * deflators[j];
  if (total == 0.0 || !std::isfinite(total)) throw DegenerateError("portfolio deflator vanishes");
  std::vector<double> w(nominals.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = nominals[j] * deflators[j] / total;
  return w;
}

namespace {

void check_portfolio(std::span<const double> nominals, std::span<const Gauge> gauges) {
  if (gauges.empty() || nominals.size() != gauges.size())
    throw ShapeError("portfolio: need one nominal per gauge");
  for (const auto& g : gauges)
    if (!g.shares_grid_with(gauges[0])) throw GridError("portfolio: gauges must share grids");
}

std::vector<double> weights_at(std::span<const double> nominals, std::span<const Gauge> gauges, std::size_t i) {
  std::vector<double> d(gauges.size());
  for (std::size_t j = 0; j < gauges.size(); ++j) d[j] = gauges[j].deflator(i);
  try {
    return portfolio_weights(nominals, d);
  } catch (const DegenerateError&) {
    throw DegenerateError("portfolio deflator vanishes at valuation index " + std::to_string(i));
  }
}

}  // namespace

Gauge portfolio_gauge(std::span<const double> nominals, std::span<const Gauge> gauges) {
  check_portfolio(nominals, gauges);
  const Gauge& g0 = gauges[0];
  const std::size_t nv = g0.valuation().size;
  const std::size_t nm = g0.maturities();
  std::vector<double> deflator(nv, 0.0);
  std::vector<double> ts(nv * nm, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto w = weights_at(nominals, gauges, i);
    for (std::size_t j = 0; j < gauges.size(); ++j) deflator[i] += nominals[j] * gauges[j].deflator(i);
    // f^x = sum_j w_j f^j with t-only weights, so log P^x is the same mix of log P^j.
    for (std::size_t m = 0; m < nm; ++m) {
      double lp = 0.0;
      for (std::size_t j = 0; j < gauges.size(); ++j) lp += w[j] * std::log(gauges[j].discount(i, m));
      ts[i * nm + m] = std::exp(lp);
    }
    ts[i * nm] = 1.0;
  }
  return Gauge(g0.valuation(), g0.maturity_step(), std::move(deflator), std::move(ts));
}

std::vector<double> portfolio_short_rate(std::span<const double> nominals, std::span<const Gauge> gauges) {
  check_portfolio(nominals, gauges);
  std::vector<std::vector<double>> rates;
  rates.reserve(gauges.size());
  for (const auto& g : gauges) rates.push_back(short_rate(forward_rate(g)));
  std::vector<double> r(gauges[0].valuation().size, 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto w = weights_at(nominals, gauges, i);
    for (std::size_t j = 0; j < gauges.size(); ++j) r[i] += w[j] * rates[j][i];
  }
  return r;
}

namespace {

void expect_columns(const csv::Table& t, std::initializer_list<const char*> names, const std::string& path) {
  if (t.header.size() != names.size()) throw IoError(path + ": unexpected column count");
  std::size_t c = 0;
  for (const char* n : names)
    if (t.header[c++] != n) throw IoError(path + ": expected column '" + n + "'");
}

}  // namespace

Gauge read_gauge_csv(const std::filesystem::path& deflator_csv, const std::filesystem::path& term_structure_csv) {
  const auto dt = csv::read(deflator_csv);
  expect_columns(dt, {"t", "value"}, deflator_csv.string());
  std::vector<double> ts_nodes, deflator;
  for (const auto& row : dt.rows) {
    ts_nodes.push_back(row[0]);
    deflator.push_back(row[1]);
  }
  const UniformAxis axis = uniform_axis_from(ts_nodes, "deflator t");

  const auto pt = csv::read(term_structure_csv);
  expect_columns(pt, {"t", "s", "value"}, term_structure_csv.string());
  std::map<std::size_t, std::vector<std::pair<double, double>>> by_t;
  for (const auto& row : pt.rows) {
    const double idx = (row[0] - axis.start) / axis.step;
    const double ri = std::round(idx);
    if (ri < 0 || ri >= static_cast<double>(axis.size) || std::abs(idx - ri) > 1e-6)
      throw GridError(term_structure_csv.string() + ": t not on the deflator grid");
    by_t[static_cast<std::size_t>(ri)].emplace_back(row[1] - row[0], row[2]);
  }
  if (by_t.size() != axis.size) throw GridError("term structure does not cover every valuation time");
  std::size_t nm = by_t.begin()->second.size();
  double ds = 0.0;
  std::vector<double> values(axis.size * nm);
  for (auto& [i, rows] : by_t) {
    if (rows.size() != nm) throw GridError("term structure: ragged maturity axis");
    std::sort(rows.begin(), rows.end());
    std::vector<double> offs;
    for (const auto& r : rows) offs.push_back(r.first);
    const UniformAxis m = uniform_axis_from(offs, "term structure s - t");
    if (std::abs(m.start) > 1e-9) throw GridError("term structure must start at s = t");
    if (ds == 0.0) ds = m.step;
    if (!same_step(ds, m.step) && nm > 1) throw GridError("term structure: maturity step varies with t");
    for (std::size_t k = 0; k < nm; ++k) values[i * nm + k] = rows[k].second;
  }
  if (nm == 1) ds = axis.step;
  return Gauge(axis, ds, std::move(deflator), std::move(values));
}

void write_gauge_csv(const Gauge& g, const std::filesystem::path& deflator_csv,
                     const std::filesystem::path& term_structure_csv) {
  csv::Table d{{"t", "value"}, {}};
  csv::Table p{{"t", "s", "value"}, {}};
  for (std::size_t i = 0; i < g.valuation().size; ++i) {
    const double t = g.valuation()[i];
    d.rows.push_back({t, g.deflator(i)});
    for (std::size_t m = 0; m < g.maturities(); ++m)
      p.rows.push_back({t, t + g.maturity_step() * static_cast<double>(m), g.discount(i, m)});
  }
  csv::write(deflator_csv, d);
  csv::write(term_structure_csv, p);
}

CashflowIntensity read_intensity_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  expect_columns(t, {"h", "value"}, path.string());
  std::vector<double> hs, vs;
  for (const auto& row : t.rows) {
    hs.push_back(row[0]);
    vs.push_back(row[1]);
  }
  if (hs.empty()) throw IoError(path.string() + ": no samples");
  if (std::abs(hs.front()) > 1e-12) throw GridError(path.string() + ": intensity grid must start at h = 0");
  if (hs.size() == 1) throw GridError(path.string() + ": a point mass needs its step; write it as two rows");
  const UniformAxis axis = uniform_axis_from(hs, "intensity h");
  return CashflowIntensity(axis.step, std::move(vs));
}

void write_intensity_csv(const CashflowIntensity& pi, const std::filesystem::path& path) {
  csv::Table t{{"h", "value"}, {}};
  const auto s = pi.samples();
  for (std::size_t k = 0; k < s.size(); ++k) t.rows.push_back({pi.step() * static_cast<double>(k), s[k]});
  // A point mass is written with a trailing zero so the step survives the round trip.
  if (s.size() == 1) t.rows.push_back({pi.step(), 0.0});
  csv::write(path, t);
}

}  // namespace gat::gauges
