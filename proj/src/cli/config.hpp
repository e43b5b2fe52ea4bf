#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gat/call_spec.hpp"
#include "gat/geometry.hpp"
#include "gat/pricing.hpp"

// Strict reader over a JSON config tree. Every accessor marks its key as
// consumed; finish() rejects whatever was left over.
namespace gat::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

class Node {
 public:
  Node(const json& j, std::string path);

  bool has(const std::string& key) const;
  const json& raw(const std::string& key);

  double number(const std::string& key);
  double number(const std::string& key, double fallback);
  std::size_t count(const std::string& key, std::size_t fallback);
  std::uint64_t u64(const std::string& key, std::uint64_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<double> list(const std::string& key);
  std::vector<double> list(const std::string& key, std::vector<double> fallback);
  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback);
  /// Array of rows, or a flat array read as a single column.
  Eigen::MatrixXd matrix(const std::string& key);

  Node child(const std::string& key);
  std::optional<Node> optional_child(const std::string& key);
  std::vector<Node> children(const std::string& key);

  /// Throws UsageError naming the first unknown key.
  void finish() const;
  const std::string& path() const { return path_; }

 private:
  std::string where(const std::string& key) const;
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

/// Parsed root document; the JSON is kept for the metadata echo.
struct Document {
  json tree;
  std::uint64_t seed = 1;
};

/// Parses the file, checks schema_version and reads the optional root seed
/// (the command-line seed wins). Throws UsageError.
Document load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override);

CallSpec parse_call(Node n);
pricing::SourceConvention parse_convention(std::optional<Node> n);
geometry::Orientation parse_orientation(const std::string& s);

/// Market: optional S0 plus either inline coefficients or a "points" list.
/// Drift is given as alpha, or as (lambda, rho) with alpha = sigma lambda + J rho - r.
struct Market {
  Eigen::VectorXd S0;
  std::vector<geometry::ItoCoefficients> points;  // ascending t
  geometry::Orientation orientation = geometry::Orientation::first_positive;
};
Market parse_market(Node n);

}  // namespace gat::cli
