#include "config.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "gat/cli.hpp"

namespace gat::cli {

Node::Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
  if (!j.is_object()) throw UsageError(path_ + ": expected an object");
}

std::string Node::where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

bool Node::has(const std::string& key) const { return j_->contains(key); }

const json& Node::raw(const std::string& key) {
  if (!has(key)) throw UsageError(where(key) + ": required key missing");
  used_.insert(key);
  return (*j_)[key];
}

double Node::number(const std::string& key) {
  const json& v = raw(key);
  if (!v.is_number()) throw UsageError(where(key) + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw UsageError(where(key) + ": must be finite");
  return d;
}

double Node::number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

std::size_t Node::count(const std::string& key, std::size_t fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_number_unsigned()) throw UsageError(where(key) + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t Node::u64(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_number_unsigned()) throw UsageError(where(key) + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool Node::flag(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_boolean()) throw UsageError(where(key) + ": expected true or false");
  return v.get<bool>();
}

std::string Node::text(const std::string& key, const std::string& fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_string()) throw UsageError(where(key) + ": expected a string");
  return v.get<std::string>();
}

std::vector<double> Node::list(const std::string& key) {
  const json& v = raw(key);
  if (!v.is_array()) throw UsageError(where(key) + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw UsageError(where(key) + ": expected an array of numbers");
    out.push_back(e.get<double>());
    if (!std::isfinite(out.back())) throw UsageError(where(key) + ": entries must be finite");
  }
  return out;
}

std::vector<double> Node::list(const std::string& key, std::vector<double> fallback) {
  return has(key) ? list(key) : fallback;
}

std::vector<std::size_t> Node::counts(const std::string& key, std::vector<std::size_t> fallback) {
  if (!has(key)) return fallback;
  const json& v = raw(key);
  if (!v.is_array()) throw UsageError(where(key) + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) throw UsageError(where(key) + ": expected an array of integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

Eigen::MatrixXd Node::matrix(const std::string& key) {
  const json& v = raw(key);
  const std::string at = where(key);
  if (!v.is_array() || v.empty()) throw UsageError(at + ": expected a non-empty array");
  auto num = [&](const json& e) {
    if (!e.is_number()) throw UsageError(at + ": entries must be numbers");
    return e.get<double>();
  };
  if (!v[0].is_array()) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = num(v[i]);
    return m;
  }
  const std::size_t cols = v[0].size();
  if (cols == 0) throw UsageError(at + ": rows must be non-empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) throw UsageError(at + ": rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = num(v[i][k]);
  }
  return m;
}

Node Node::child(const std::string& key) { return Node(raw(key), where(key)); }

std::optional<Node> Node::optional_child(const std::string& key) {
  if (!has(key)) return std::nullopt;
  return child(key);
}

std::vector<Node> Node::children(const std::string& key) {
  const json& v = raw(key);
  if (!v.is_array() || v.empty()) throw UsageError(where(key) + ": expected a non-empty array of objects");
  std::vector<Node> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(v[i], where(key) + "[" + std::to_string(i) + "]");
  return out;
}

void Node::finish() const {
  for (const auto& [k, v] : j_->items())
    if (!used_.count(k)) throw UsageError(where(k) + ": unknown key");
}

Document load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path.string() + "'");
  Document d;
  try {
    d.tree = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!d.tree.is_object()) throw UsageError("config root must be an object");
  if (!d.tree.contains("schema_version")) throw UsageError("schema_version: required key missing");
  const json& v = d.tree["schema_version"];
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
    throw UsageError("schema_version: only version " + std::to_string(kSchemaVersion) + " is supported");
  if (d.tree.contains("seed")) {
    if (!d.tree["seed"].is_number_unsigned()) throw UsageError("seed: expected a non-negative integer");
    d.seed = d.tree["seed"].get<std::uint64_t>();
  }
  if (seed_override) d.seed = *seed_override;
  return d;
}

CallSpec parse_call(Node n) {
  CallSpec s;
  s.K = n.number("K");
  s.T = n.number("T");
  s.sigma = n.number("sigma");
  s.rho = n.number("rho", 0.0);
  s.r = n.number("r", 0.0);
  n.finish();
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(n.path() + ": " + e.what());
  }
  return s;
}

pricing::SourceConvention parse_convention(std::optional<Node> n) {
  pricing::SourceConvention c;
  if (!n) return c;
  try {
    c.scale = pricing::parse_scale(n->text("scale", pricing::to_string(c.scale)));
    c.sign = pricing::parse_sign(n->text("sign", pricing::to_string(c.sign)));
  } catch (const DomainError& e) {
    throw UsageError(n->path() + ": " + e.what());
  }
  n->finish();
  return c;
}

geometry::Orientation parse_orientation(const std::string& s) {
  if (s == "first_positive") return geometry::Orientation::first_positive;
  if (s == "last_positive") return geometry::Orientation::last_positive;
  throw UsageError("orientation: expected first_positive or last_positive, got '" + s + "'");
}

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

geometry::ItoCoefficients parse_point(Node& n, geometry::Orientation orientation, double t) {
  geometry::ItoCoefficients c;
  c.t = n.number("t", t);
  c.sigma = n.matrix("sigma");
  const auto N = c.sigma.rows();
  c.r = n.has("r") ? to_vector(n.list("r")) : Eigen::VectorXd::Zero(N);
  if (c.r.size() != N) throw UsageError(n.path() + ".r: expected " + std::to_string(N) + " entries");
  const bool has_alpha = n.has("alpha");
  const bool has_split = n.has("lambda") || n.has("rho");
  if (has_alpha == has_split)
    throw UsageError(n.path() + ": give either alpha or (lambda, rho) for the drift");
  if (has_alpha) {
    c.alpha = to_vector(n.list("alpha"));
    if (c.alpha.size() != N) throw UsageError(n.path() + ".alpha: expected " + std::to_string(N) + " entries");
  } else {
    const Eigen::VectorXd lambda = n.has("lambda") ? to_vector(n.list("lambda")) : Eigen::VectorXd::Zero(c.sigma.cols());
    if (lambda.size() != c.sigma.cols())
      throw UsageError(n.path() + ".lambda: expected " + std::to_string(c.sigma.cols()) + " entries");
    const auto basis = geometry::kernel_basis(c.sigma, orientation);
    const Eigen::VectorXd rho =
        n.has("rho") ? to_vector(n.list("rho")) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.dimension()));
    if (rho.size() != basis.J.cols())
      throw UsageError(n.path() + ".rho: kernel dimension is " + std::to_string(basis.dimension()));
    c.alpha = c.sigma * lambda + basis.J * rho - c.r;
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(n.path() + ": " + e.what());
  }
  return c;
}

}  // namespace

Market parse_market(Node n) {
  Market m;
  m.orientation = parse_orientation(n.text("orientation", "first_positive"));
  if (n.has("S0")) m.S0 = to_vector(n.list("S0"));
  if (n.has("points")) {
    double last = -std::numeric_limits<double>::infinity();
    for (auto& p : n.children("points")) {
      m.points.push_back(parse_point(p, m.orientation, 0.0));
      p.finish();
      if (!(m.points.back().t > last)) throw UsageError(p.path() + ".t: times must increase");
      last = m.points.back().t;
    }
  } else {
    m.points.push_back(parse_point(n, m.orientation, 0.0));
  }
  n.finish();
  const auto N = m.points.front().sigma.rows();
  for (const auto& p : m.points)
    if (p.sigma.rows() != N || p.sigma.cols() != m.points.front().sigma.cols())
      throw UsageError(n.path() + ": every point needs the same sigma shape");
  if (m.S0.size() != 0 && m.S0.size() != N)
    throw UsageError(n.path() + ".S0: expected " + std::to_string(N) + " entries");
  for (Eigen::Index j = 0; j < m.S0.size(); ++j)
    if (!(m.S0[j] > 0.0)) throw UsageError(n.path() + ".S0: entries must be positive");
  return m;
}

}  // namespace gat::cli
