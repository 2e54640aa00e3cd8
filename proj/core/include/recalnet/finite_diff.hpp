#pragma once

#include <cmath>
#include <functional>

#include "recalnet/linalg.hpp"

namespace recalnet {

// Central-difference gradient oracle: (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps).
// f must be evaluable and finite at every probe point.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                               const Vector& x, double eps) {
  if (!(eps > 0.0)) throw InvariantError("finite_diff_grad: eps must be > 0");
  Vector grad(x.size());
  Vector probe(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    double fp = f(probe);
    probe[i] = x[i] - eps;
    double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw InvariantError(
          msg("finite_diff_grad: non-finite value at coordinate ", i));
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace recalnet
