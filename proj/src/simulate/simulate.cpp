#include "gat/simulate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <string>

#include "gat/csv.hpp"
#include "gat/errors.hpp"
#include "gat/parallel.hpp"

namespace gat::sim {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Standard errors of exactly constant estimates are pure rounding; report at
// least 64 ulp of the magnitude involved.
double floored(double se, double magnitude) {
  return std::max(se, 64.0 * std::numeric_limits<double>::epsilon() * std::max(magnitude, 1e-300));
}

// Minimal kd-tree for k-nearest-neighbour queries in K > 1 dimensions.
class KdTree {
 public:
  KdTree(const std::vector<double>& pts, std::size_t dim) : pts_(pts), dim_(dim), idx_(pts.size() / dim) {
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    build(0, idx_.size(), 0);
  }

  void query(std::size_t self, std::size_t k, std::vector<std::size_t>& out) const {
    std::priority_queue<std::pair<double, std::size_t>> heap;
    search(0, idx_.size(), 0, &pts_[self * dim_], k, heap);
    out.clear();
    while (!heap.empty()) {
      out.push_back(heap.top().second);
      heap.pop();
    }
  }

 private:
  void build(std::size_t lo, std::size_t hi, std::size_t axis) {
    if (hi - lo <= 1) return;
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(lo), idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       const double va = pts_[a * dim_ + axis], vb = pts_[b * dim_ + axis];
                       return va < vb || (va == vb && a < b);
                     });
    build(lo, mid, (axis + 1) % dim_);
    build(mid + 1, hi, (axis + 1) % dim_);
  }

  void search(std::size_t lo, std::size_t hi, std::size_t axis, const double* q, std::size_t k,
              std::priority_queue<std::pair<double, std::size_t>>& heap) const {
    if (lo >= hi) return;
    const std::size_t mid = (lo + hi) / 2;
    const std::size_t p = idx_[mid];
    double d2 = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double d = pts_[p * dim_ + c] - q[c];
      d2 += d * d;
    }
    if (heap.size() < k) {
      heap.emplace(d2, p);
    } else if (std::make_pair(d2, p) < heap.top()) {
      heap.pop();
      heap.emplace(d2, p);
    }
    const double diff = q[axis] - pts_[p * dim_ + axis];
    const std::size_t next = (axis + 1) % dim_;
    const bool left_first = diff < 0.0;
    if (left_first)
      search(lo, mid, next, q, k, heap);
    else
      search(mid + 1, hi, next, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().first) {
      if (left_first)
        search(mid + 1, hi, next, q, k, heap);
      else
        search(lo, mid, next, q, k, heap);
    }
  }

  const std::vector<double>& pts_;
  std::size_t dim_;
  std::vector<std::size_t> idx_;
};

void check_record(const PathEnsemble& e, std::size_t i, std::size_t lag) {
  if (lag == 0 || i < lag || i + lag >= e.records())
    throw GridError("estimator: record " + std::to_string(i) + " lacks +-" + std::to_string(lag) + " neighbours");
}

std::vector<std::size_t> usable_records(const PathEnsemble& e, const ResolvedEstimator& r) {
  std::vector<std::size_t> out;
  for (std::size_t i = r.lag; i + r.lag < e.records(); ++i)
    if (e.time(i) >= r.t_min - 1e-12) out.push_back(i);
  return out;
}

}  // namespace

ModelSchedule ModelSchedule::constant(const geometry::ItoCoefficients& c, Eigen::VectorXd S0) {
  ModelSchedule m;
  m.S0 = std::move(S0);
  m.steps = {c};
  return m;
}

const geometry::ItoCoefficients& ModelSchedule::at_time(double t) const {
  if (steps.size() == 1) return steps[0];
  const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / dt + 1e-9)));
  return steps[std::min(k, steps.size() - 1)];
}

void ModelSchedule::validate(std::size_t n_steps) const {
  if (steps.empty()) throw ShapeError("model schedule: no coefficients");
  if (steps.size() != 1 && steps.size() < n_steps)
    throw ShapeError("model schedule: need one coefficient set per step (or a single constant set)");
  if (steps.size() != 1 && !(dt > 0.0)) throw GridError("model schedule: dt must be set for time-varying coefficients");
  for (const auto& c : steps) {
    c.validate();
    if (c.assets() != static_cast<std::size_t>(S0.size()) || c.factors() != steps[0].factors())
      throw ShapeError("model schedule: dimensions vary between steps or differ from S0");
  }
  for (Eigen::Index j = 0; j < S0.size(); ++j)
    if (!(S0(j) > 0.0)) throw DomainError("model schedule: S0 must be positive");
}

PathEnsemble::PathEnsemble(std::size_t paths, std::size_t assets, std::size_t factors, std::size_t records,
                           double record_dt, std::uint64_t seed)
    : m_(paths), n_(assets), k_(factors), records_(records), dt_(record_dt), seed_(seed),
      data_(paths * (assets + factors) * records, 0.0) {
  if (paths == 0 || assets == 0 || factors == 0 || records == 0) throw ShapeError("ensemble: empty dimension");
  if (!(record_dt > 0.0)) throw GridError("ensemble: record dt must be positive");
}

bool PathEnsemble::operator==(const PathEnsemble& o) const {
  return m_ == o.m_ && n_ == o.n_ && k_ == o.k_ && records_ == o.records_ && dt_ == o.dt_ && seed_ == o.seed_ &&
         std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::uint64_t path_seed(std::uint64_t master, std::size_t path) {
  return splitmix64(master + (static_cast<std::uint64_t>(path) + 1) * 0x9E3779B97F4A7C15ULL);
}

PathEnsemble simulate(const ModelSchedule& model, const SimConfig& cfg) {
  if (cfg.paths == 0 || cfg.steps == 0 || cfg.record_every == 0) throw ShapeError("simulate: empty configuration");
  if (!(cfg.dt > 0.0)) throw GridError("simulate: dt must be positive");
  model.validate(cfg.steps);
  if (model.steps.size() > 1 && std::abs(model.dt - cfg.dt) > 1e-12 * cfg.dt)
    throw GridError("simulate: model schedule step differs from dt");
  const std::size_t n = model.assets(), kf = model.factors();
  const std::size_t records = cfg.steps / cfg.record_every + 1;
  PathEnsemble e(cfg.paths, n, kf, records, cfg.dt * static_cast<double>(cfg.record_every), cfg.seed);

  // Per-step drift of log S and volatility rows.
  const std::size_t distinct = model.steps.size();
  std::vector<double> drift(distinct * n), vol(distinct * n * kf);
  for (std::size_t s = 0; s < distinct; ++s) {
    const auto& c = model.steps[s];
    for (std::size_t j = 0; j < n; ++j) {
      drift[s * n + j] = (c.alpha(static_cast<Eigen::Index>(j)) -
                          0.5 * c.sigma.row(static_cast<Eigen::Index>(j)).squaredNorm()) * cfg.dt;
      for (std::size_t q = 0; q < kf; ++q)
        vol[(s * n + j) * kf + q] = c.sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q));
    }
  }
  const double sq = std::sqrt(cfg.dt);

  parallel_for(cfg.paths, [&](std::size_t p) {
    std::mt19937_64 rng(path_seed(cfg.seed, p));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> logS(n), W(kf, 0.0), dW(kf);
    for (std::size_t j = 0; j < n; ++j) logS[j] = std::log(model.S0(static_cast<Eigen::Index>(j)));
    auto record = [&](std::size_t i) {
      for (std::size_t j = 0; j < n; ++j) e.S(i, p, j) = std::exp(logS[j]);
      for (std::size_t q = 0; q < kf; ++q) e.W(i, p, q) = W[q];
    };
    record(0);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const std::size_t s = distinct == 1 ? 0 : step;
      for (std::size_t q = 0; q < kf; ++q) {
        dW[q] = sq * normal(rng);
        W[q] += dW[q];
      }
      for (std::size_t j = 0; j < n; ++j) {
        double x = drift[s * n + j];
        for (std::size_t q = 0; q < kf; ++q) x += vol[(s * n + j) * kf + q] * dW[q];
        logS[j] += x;
      }
      if ((step + 1) % cfg.record_every == 0) record((step + 1) / cfg.record_every);
    }
  });
  return e;
}

ResolvedEstimator resolve(const PathEnsemble& e, const EstimatorConfig& cfg) {
  ResolvedEstimator r;
  const double rdt = e.record_dt();
  const double h = cfg.h > 0.0 ? cfg.h : 5.0 * rdt;
  const double lag = std::max(1.0, std::round(h / rdt));
  if (cfg.h > 0.0 && std::abs(lag * rdt - cfg.h) > 1e-9 * cfg.h)
    throw GridError("estimator: h must be a whole number of record steps");
  r.lag = static_cast<std::size_t>(lag);
  r.h = lag * rdt;
  r.k = cfg.k > 0 ? cfg.k : std::max<std::size_t>(8, e.paths() / 200);
  if (r.k < 8) throw EstimationError("estimator: k must be at least 8", r.k);
  r.t_min = cfg.t_min > 0.0 ? cfg.t_min : 10.0 * rdt;
  if (r.t_min < 10.0 * rdt - 1e-12) throw DomainError("estimator: t_min must be at least 10 record steps");
  if (e.paths() < r.k)
    throw EstimationError("estimator: " + std::to_string(e.paths()) + " paths, need k = " + std::to_string(r.k),
                          e.paths());
  return r;
}

std::vector<double> knn_conditional_mean(const PathEnsemble& e, std::size_t i, std::span<const double> values,
                                         std::size_t k) {
  const std::size_t m = e.paths();
  if (values.size() != m) throw ShapeError("knn: one value per path required");
  if (m < k || k == 0)
    throw EstimationError("knn: " + std::to_string(m) + " paths available for k = " + std::to_string(k), m);
  std::vector<double> out(m);
  const std::size_t dim = e.factors();
  if (dim == 1) {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return e.W(i, a, 0) < e.W(i, b, 0); });
    std::vector<double> x(m), prefix(m + 1, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      x[r] = e.W(i, order[r], 0);
      prefix[r + 1] = prefix[r] + values[order[r]];
    }
    // The k nearest neighbours of a sorted point form a window whose start
    // never moves left as the point moves right.
    std::size_t a = 0;
    for (std::size_t r = 0; r < m; ++r) {
      while (a + k < m && (r >= a + k || x[a + k] - x[r] < x[r] - x[a])) ++a;
      out[order[r]] = (prefix[a + k] - prefix[a]) / static_cast<double>(k);
    }
    return out;
  }
  std::vector<double> pts(m * dim);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t c = 0; c < dim; ++c) pts[p * dim + c] = e.W(i, p, c);
  KdTree tree(pts, dim);
  std::vector<std::size_t> nb;
  for (std::size_t p = 0; p < m; ++p) {
    tree.query(p, k, nb);
    double s = 0.0;
    for (auto q : nb) s += values[q];
    out[p] = s / static_cast<double>(k);
  }
  return out;
}

RawDifferences raw_differences(const PathEnsemble& e, const PathFunctional& Q, std::size_t i, std::size_t lag) {
  check_record(e, i, lag);
  const double h = e.record_dt() * static_cast<double>(lag);
  RawDifferences r;
  r.t = e.time(i);
  const std::size_t m = e.paths();
  r.forward.resize(m);
  r.backward.resize(m);
  r.mean.resize(m);
  for (std::size_t p = 0; p < m; ++p) {
    const double qm = Q(e, i - lag, p), q0 = Q(e, i, p), qp = Q(e, i + lag, p);
    r.forward[p] = (qp - q0) / h;
    r.backward[p] = (q0 - qm) / h;
    r.mean[p] = (qp - qm) / (2.0 * h);
  }
  return r;
}

NelsonSlice nelson_at(const PathEnsemble& e, const PathFunctional& Q, std::size_t i, const EstimatorConfig& cfg) {
  const auto r = resolve(e, cfg);
  if (e.time(i) < r.t_min - 1e-12)
    throw DomainError("nelson: t = " + std::to_string(e.time(i)) + " below t_min = " + std::to_string(r.t_min));
  NelsonSlice s;
  s.raw = raw_differences(e, Q, i, r.lag);
  s.t = s.raw.t;
  s.D = knn_conditional_mean(e, i, s.raw.forward, r.k);
  s.Dstar = knn_conditional_mean(e, i, s.raw.backward, r.k);
  s.Dmean.resize(s.D.size());
  for (std::size_t p = 0; p < s.D.size(); ++p) s.Dmean[p] = 0.5 * (s.D[p] + s.Dstar[p]);
  return s;
}

NelsonSeries nelson_derivatives(const PathEnsemble& e, const PathFunctional& Q, const EstimatorConfig& cfg) {
  const auto r = resolve(e, cfg);
  const auto recs = usable_records(e, r);
  NelsonSeries out;
  out.t.resize(recs.size());
  out.D.resize(recs.size());
  out.Dstar.resize(recs.size());
  out.Dmean.resize(recs.size());
  out.D_se.resize(recs.size());
  out.Dstar_se.resize(recs.size());
  out.Dmean_se.resize(recs.size());
  parallel_for(recs.size(), [&](std::size_t n) {
    const auto s = nelson_at(e, Q, recs[n], cfg);
    out.t[n] = s.t;
    out.D[n] = mean_of(s.D);
    out.Dstar[n] = mean_of(s.Dstar);
    out.Dmean[n] = mean_of(s.Dmean);
    // Spread of the raw quotients: the conditional averages share neighbours.
    out.D_se[n] = se_of(s.raw.forward, mean_of(s.raw.forward));
    out.Dstar_se[n] = se_of(s.raw.backward, mean_of(s.raw.backward));
    out.Dmean_se[n] = se_of(s.raw.mean, mean_of(s.raw.mean));
  });
  return out;
}

BinnedComparison bin_by_state(std::span<const double> state, std::span<const double> raw,
                              std::span<const double> expected, std::size_t bins) {
  const std::size_t m = state.size();
  if (raw.size() != m || expected.size() != m) throw ShapeError("bin_by_state: size mismatch");
  if (bins == 0 || m < 2 * bins) throw EstimationError("bin_by_state: need at least two samples per bin", m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return state[a] < state[b]; });
  BinnedComparison out;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * m / bins, hi = (b + 1) * m / bins;
    std::vector<double> vals;
    double st = 0.0, ex = 0.0;
    for (std::size_t r = lo; r < hi; ++r) {
      vals.push_back(raw[order[r]]);
      st += state[order[r]];
      ex += expected[order[r]];
    }
    const double n = static_cast<double>(hi - lo);
    const double mu = mean_of(vals);
    const double se = se_of(vals, mu);
    out.state_mean.push_back(st / n);
    out.estimate.push_back(mu);
    out.se.push_back(se);
    out.expected.push_back(ex / n);
    out.count.push_back(hi - lo);
    if (se > 0.0) out.max_z = std::max(out.max_z, std::abs(mu - ex / n) / se);
  }
  return out;
}

namespace {

// Linear interpolation of a series on a uniform axis.
double sample_series(const UniformAxis& axis, const std::vector<double>& v, double t) {
  const double pos = (t - axis.start) / axis.step;
  if (pos < -1e-9 || pos > static_cast<double>(axis.size - 1) + 1e-9)
    throw HorizonError("gauge valuation grid does not cover t = " + std::to_string(t));
  if (axis.size == 1) return v[0];
  const auto i0 = std::min(static_cast<std::size_t>(std::max(0.0, std::floor(pos))), axis.size - 2);
  const double w = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
  return (1.0 - w) * v[i0] + w * v[i0 + 1];
}

}  // namespace

Series instantaneous_return(const PathEnsemble& e, std::span<const double> nominals,
                            std::span<const gauges::Gauge> gs, const EstimatorConfig& cfg) {
  const std::size_t n = e.assets();
  if (nominals.size() != n || gs.size() != n) throw ShapeError("instantaneous_return: one nominal and gauge per asset");
  const auto r = resolve(e, cfg);
  std::vector<std::vector<double>> rates;
  for (const auto& g : gs) rates.push_back(gauges::short_rate(gauges::forward_rate(g)));
  const PathFunctional logD = [nominals](const PathEnsemble& en, std::size_t i, std::size_t p) {
    double d = 0.0;
    for (std::size_t j = 0; j < en.assets(); ++j) d += nominals[j] * en.S(i, p, j);
    if (!(d > 0.0)) throw DegenerateError("instantaneous_return: portfolio deflator must stay positive");
    return std::log(d);
  };
  const auto recs = usable_records(e, r);
  Series out{std::vector<double>(recs.size()), std::vector<double>(recs.size()), std::vector<double>(recs.size())};
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const std::size_t i = recs[k];
    const auto raw = raw_differences(e, logD, i, r.lag);
    const auto cond = knn_conditional_mean(e, i, raw.mean, r.k);
    std::vector<double> rj(n);
    for (std::size_t j = 0; j < n; ++j) rj[j] = sample_series(gs[j].valuation(), rates[j], e.time(i));
    std::vector<double> est(e.paths()), rawret(e.paths());
    std::vector<double> d(n);
    for (std::size_t p = 0; p < e.paths(); ++p) {
      for (std::size_t j = 0; j < n; ++j) d[j] = e.S(i, p, j);
      const auto w = gauges::portfolio_weights(nominals, d);
      double rx = 0.0;
      for (std::size_t j = 0; j < n; ++j) rx += w[j] * rj[j];
      est[p] = cond[p] + rx;
      rawret[p] = raw.mean[p] + rx;
    }
    out.t[k] = e.time(i);
    out.mean[k] = mean_of(est);
    double mag = 0.0;
    for (double v : rawret) mag = std::max(mag, std::abs(v));
    out.se[k] = floored(se_of(rawret, mean_of(rawret)), mag);
  }
  return out;
}

RhoEstimate empirical_rho(const PathEnsemble& e, const ModelSchedule& model, double t_lo, double t_hi,
                          const EstimatorConfig& cfg, geometry::Orientation orientation) {
  const std::size_t n = e.assets(), kf = e.factors();
  if (model.assets() != n || model.factors() != kf) throw ShapeError("empirical_rho: model does not match ensemble");
  const auto r = resolve(e, cfg);
  RhoEstimate out;
  out.t_lo = t_lo;
  out.t_hi = t_hi;
  const auto recs = usable_records(e, r);
  if (recs.empty()) throw GridError("empirical_rho: no usable record times");
  const std::size_t B = geometry::kernel_basis(model.at_time(e.time(recs[0])).sigma, orientation).dimension();
  out.dimension = B;
  const std::size_t m = e.paths();
  std::vector<double> path_sum(m * B, 0.0);
  std::size_t bucket_count = 0;
  double bucket_mag = 0.0;
  Eigen::VectorXd bucket_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(B));
  if (B == 0) return out;

  for (const std::size_t i : recs) {
    const double t = e.time(i);
    const auto& c = model.at_time(t);
    const Eigen::MatrixXd J = geometry::kernel_basis(c.sigma, orientation).J;
    if (static_cast<std::size_t>(J.cols()) != B) throw DomainError("empirical_rho: kernel dimension changes over time");
    const Eigen::VectorXd half_var = 0.5 * c.sigma.rowwise().squaredNorm();
    Eigen::VectorXd mean(B), se(B);
    for (std::size_t b = 0; b < B; ++b) {
      const Eigen::VectorXd jb = J.col(static_cast<Eigen::Index>(b));
      std::vector<double> proj(m), corr(m);
      double mag = 0.0;
      for (std::size_t p = 0; p < m; ++p) {
        double raw = 0.0, fix = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          const double d = (std::log(e.S(i + r.lag, p, j)) - std::log(e.S(i - r.lag, p, j))) / (2.0 * r.h);
          double sw = 0.0;
          for (std::size_t q = 0; q < kf; ++q) sw += c.sigma(jj, static_cast<Eigen::Index>(q)) * e.W(i, p, q);
          const double f = half_var(jj) + c.r(jj) - sw / (2.0 * t);
          raw += jb(jj) * d;
          fix += jb(jj) * f;
          mag = std::max(mag, std::abs(jb(jj)) * (std::abs(d) + std::abs(f)));
        }
        proj[p] = raw;
        corr[p] = fix;
      }
      const auto cond = knn_conditional_mean(e, i, proj, r.k);
      std::vector<double> est(m), unsmoothed(m);
      for (std::size_t p = 0; p < m; ++p) {
        est[p] = cond[p] + corr[p];
        unsmoothed[p] = proj[p] + corr[p];
      }
      const auto bb = static_cast<Eigen::Index>(b);
      mean(bb) = mean_of(est);
      se(bb) = floored(se_of(unsmoothed, mean_of(unsmoothed)), mag);
      if (t >= t_lo - 1e-12 && t <= t_hi + 1e-12) {
        for (std::size_t p = 0; p < m; ++p) path_sum[p * B + b] += unsmoothed[p];
        bucket_mean(bb) += mean(bb);
        bucket_mag = std::max(bucket_mag, mag);
      }
    }
    if (t >= t_lo - 1e-12 && t <= t_hi + 1e-12) ++bucket_count;
    out.t.push_back(t);
    out.mean.push_back(mean);
    out.se.push_back(se);
  }
  if (bucket_count == 0) throw GridError("empirical_rho: bucket contains no usable record times");
  out.bucket_mean = bucket_mean / static_cast<double>(bucket_count);
  out.bucket_se.resize(static_cast<Eigen::Index>(B));
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> v(m);
    for (std::size_t p = 0; p < m; ++p) v[p] = path_sum[p * B + b] / static_cast<double>(bucket_count);
    out.bucket_se(static_cast<Eigen::Index>(b)) = floored(se_of(v, mean_of(v)), bucket_mag);
  }
  return out;
}

SelfFinancingReport self_financing_residual(const PathEnsemble& e, std::span<const double> strategy,
                                            const EstimatorConfig& cfg) {
  const std::size_t n = e.assets(), m = e.paths();
  if (strategy.size() != e.records() * m * n)
    throw GridError("self_financing_residual: strategy must hold N nominals per record and path");
  const auto r = resolve(e, cfg);
  auto x = [&](std::size_t i, std::size_t p, std::size_t j) { return strategy[(i * m + p) * n + j]; };
  SelfFinancingReport rep;
  for (const std::size_t i : usable_records(e, r)) {
    const std::size_t a = i - r.lag, b = i + r.lag;
    std::vector<double> res(m), cov(m);
    double mag = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double vb = 0.0, va = 0.0, xd = 0.0, qv = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        vb += x(b, p, j) * e.S(b, p, j);
        va += x(a, p, j) * e.S(a, p, j);
        xd += x(i, p, j) * (e.S(b, p, j) - e.S(a, p, j));
        qv += (x(i, p, j) - x(a, p, j)) * (e.S(i, p, j) - e.S(a, p, j));
      }
      const double first = (vb - va) / (2.0 * r.h);
      const double second = xd / (2.0 * r.h);
      cov[p] = 0.5 * qv / r.h;
      res[p] = first - second + cov[p];
      mag = std::max({mag, std::abs(first), std::abs(second), std::abs(cov[p])});
    }
    const double t = e.time(i);
    const double mr = mean_of(res), mc = mean_of(cov);
    rep.residual.t.push_back(t);
    rep.residual.mean.push_back(mr);
    rep.residual.se.push_back(floored(se_of(res, mr), mag));
    rep.covariation.t.push_back(t);
    rep.covariation.mean.push_back(mc);
    rep.covariation.se.push_back(floored(se_of(cov, mc), mag));
  }
  return rep;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw IoError("ensemble file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_ensemble(const PathEnsemble& e, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("GATE", 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, e.paths());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(e.assets()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(e.factors()));
  put<std::uint64_t>(out, e.records() - 1);
  put<double>(out, e.record_dt());
  put<std::uint64_t>(out, e.seed());
  if constexpr (std::endian::native == std::endian::little) {
    const auto raw = e.raw();
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
  } else {
    for (double v : e.raw()) put<double>(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PathEnsemble read_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "GATE", 4) != 0) throw IoError(path.string() + ": bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  const auto m = get<std::uint64_t>(in);
  const auto n = get<std::uint32_t>(in);
  const auto k = get<std::uint32_t>(in);
  const auto steps = get<std::uint64_t>(in);
  const auto dt = get<double>(in);
  const auto seed = get<std::uint64_t>(in);
  PathEnsemble e(m, n, k, steps + 1, dt, seed);
  auto raw = e.raw();
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double))))
      throw IoError(path.string() + ": payload truncated");
  } else {
    for (double& v : raw) v = get<double>(in);
  }
  return e;
}

void write_ensemble_csv(const PathEnsemble& e, const std::filesystem::path& path, std::size_t max_paths) {
  csv::Table t;
  t.header = {"t", "path"};
  for (std::size_t j = 0; j < e.assets(); ++j) t.header.push_back("S" + std::to_string(j));
  for (std::size_t q = 0; q < e.factors(); ++q) t.header.push_back("W" + std::to_string(q));
  const std::size_t mp = std::min(max_paths, e.paths());
  for (std::size_t i = 0; i < e.records(); ++i)
    for (std::size_t p = 0; p < mp; ++p) {
      std::vector<double> row{e.time(i), static_cast<double>(p)};
      for (std::size_t j = 0; j < e.assets(); ++j) row.push_back(e.S(i, p, j));
      for (std::size_t q = 0; q < e.factors(); ++q) row.push_back(e.W(i, p, q));
      t.rows.push_back(std::move(row));
    }
  csv::write(path, t);
}

}  // namespace gat::sim
