#include "gat/call_spec.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat {

void CallSpec::validate() const {
  if (!std::isfinite(K) || !std::isfinite(T) || !std::isfinite(sigma) || !std::isfinite(rho) || !std::isfinite(r))
    throw DomainError("call spec: non-finite field");
  if (!(K > 0.0)) throw DomainError("call spec: K must be positive");
  if (!(T > 0.0)) throw DomainError("call spec: T must be positive");
  if (!(sigma > 0.0)) throw DomainError("call spec: sigma must be positive");
}

std::vector<std::string> CallSpec::warnings() const {
  std::vector<std::string> w;
  if (std::abs(rho) * T > 0.5) w.emplace_back("|rho| T > 0.5: the second-order series is unreliable");
  return w;
}

double CallSpec::discounted_strike() const { return K * std::exp(-r * T); }

}  // namespace gat
