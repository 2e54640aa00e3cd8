#include "recalnet/activations.hpp"

#include <algorithm>
#include <cmath>

namespace recalnet {

Vector activate(Activation kind, const Vector& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::isnan(x[i]))
      throw InvariantError(msg("activate: NaN at coordinate ", i));
  Vector out(x.size());
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case Activation::Sparsemax:
      return sparsemax(x);
  }
  return out;
}

Vector sparsemax(const Vector& z) {
  if (z.empty()) throw InvariantError("sparsemax: empty input");
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!std::isfinite(z[i]))
      throw InvariantError(msg("sparsemax: non-finite input at coordinate ", i));

  Vector sorted(z);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  // Largest k with sorted[k-1] * k > (sum of top k) - 1.
  double cumsum = 0.0;
  double support_sum = 0.0;
  std::size_t support = 0;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    cumsum += sorted[k - 1];
    if (sorted[k - 1] * static_cast<double>(k) > cumsum - 1.0) {
      support = k;
      support_sum = cumsum;
    }
  }
  double tau = (support_sum - 1.0) / static_cast<double>(support);

  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = std::max(z[i] - tau, 0.0);
  return out;
}

}  // namespace recalnet
