#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gat/errors.hpp"

namespace gat {

/// Uniform one-dimensional grid `start + i * step`, i in [0, size).
struct UniformAxis {
  double start = 0.0;
  double step = 1.0;
  std::size_t size = 0;

  double operator[](std::size_t i) const { return start + step * static_cast<double>(i); }
  double back() const { return (*this)[size - 1]; }
  bool empty() const { return size == 0; }

  std::vector<double> nodes() const {
    std::vector<double> out(size);
    for (std::size_t i = 0; i < size; ++i) out[i] = (*this)[i];
    return out;
  }

  bool same_as(const UniformAxis& other, double tol = 1e-12) const {
    return size == other.size && std::abs(start - other.start) <= tol &&
           std::abs(step - other.step) <= tol * std::max(1.0, std::abs(step));
  }

  void validate(const char* what) const {
    if (!(step > 0.0) || !std::isfinite(step) || !std::isfinite(start) || size == 0)
      throw GridError(std::string(what) + ": axis needs a positive finite step and at least one node");
  }
};

/// Recover a uniform axis from sampled abscissae; throws GridError if the
/// spacing varies by more than `rel_tol` of the mean step.
UniformAxis uniform_axis_from(const std::vector<double>& xs, const char* what, double rel_tol = 1e-6);

}  // namespace gat
