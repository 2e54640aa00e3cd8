#pragma once

#include "recalnet/linalg.hpp"

namespace recalnet {

enum class Activation { Sigmoid, Relu, Tanh, Sparsemax };

// Numerically stable for |x| up to at least 1e3: never forms exp(+large).
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Element-wise sigmoid/relu/tanh. Rejects NaN input.
Vector activate(Activation kind, const Vector& x);

// Euclidean projection of z onto the probability simplex (sort-based).
// Output is nonnegative, sums to 1, and is invariant to adding a constant
// to every coordinate.
Vector sparsemax(const Vector& z);

}  // namespace recalnet
