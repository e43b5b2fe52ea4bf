#include "gat/axis.hpp"

#include <string>

namespace gat {

UniformAxis uniform_axis_from(const std::vector<double>& xs, const char* what, double rel_tol) {
  if (xs.empty()) throw GridError(std::string(what) + ": no nodes");
  if (xs.size() == 1) return UniformAxis{xs[0], 1.0, 1};
  const double step = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  if (!(step > 0.0)) throw GridError(std::string(what) + ": nodes must increase");
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double d = xs[i] - xs[i - 1];
    if (std::abs(d - step) > rel_tol * step)
      throw GridError(std::string(what) + ": nodes are not uniformly spaced");
  }
  return UniformAxis{xs.front(), step, xs.size()};
}

}  // namespace gat
