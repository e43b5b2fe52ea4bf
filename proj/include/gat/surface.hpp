#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace gat {

/// Price surface on a (t, x) tensor grid; values are row-major in t.
struct PriceSurface {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * x.size() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * x.size() + j]; }
};

/// Long-format CSV with columns "t,X,<value_name>".
void write_surface_csv(const PriceSurface& s, const std::filesystem::path& path,
                       const std::string& value_name = "Phi");

}  // namespace gat
