#pragma once

#include "recalnet/activations.hpp"
#include "recalnet/linalg.hpp"

namespace recalnet {

// One bank of causal dilated convolution filters. Each of the n_filters()
// kernels spans the full input width over kernel_len taps, laid out row-major
// as filters(f, l * in_width + j): tap l (0 = current visit), input feature j.
struct ConvBank {
  Matrix filters;  // n_filters x (kernel_len * in_width)
  Vector bias;     // n_filters
  int dilation = 1;
  int kernel_len = 2;
  int in_width = 0;

  std::size_t n_filters() const { return filters.rows(); }
  void validate() const;
};

// Squeeze-and-excitation gate: u = act(U * relu(W * x)), x~ = u (.) x.
struct SEParams {
  Matrix compress;  // ceil(n/ratio) x n
  Matrix expand;    // n x ceil(n/ratio)
  int ratio = 2;
  Activation act = Activation::Sigmoid;

  void validate() const;
};

struct SERecal {
  Vector weights;   // u, length n
  Vector weighted;  // u (.) x, length n
};

// Cho-style GRU cell. Gate matrices act on [h_prev; v]; the candidate matrix
// acts on [reset (.) h_prev; v].
struct GruParams {
  Matrix w_update, w_reset, w_cand;  // each n_hidden x (n_hidden + in_width)
  Vector b_update, b_reset, b_cand;  // each n_hidden

  std::size_t n_hidden() const { return w_update.rows(); }
  void validate() const;
};

// Intermediate gate values; the model's backward pass replays them.
struct GruStepTrace {
  Vector update, reset, cand, h;
};

// out(t, f) = bias_f + sum_l <filter_f[l], series[t - dilation*l]>, with
// visits before the start treated as zero (causal left padding). Output at
// visit t never reads visits after t.
Matrix dilated_causal_conv(const Matrix& series, const ConvBank& bank);

// Per-visit concatenation of every bank's output, bank order preserved.
Matrix multi_scale_conv(const Matrix& series, const std::vector<ConvBank>& banks);

SERecal se_recalibrate(const Vector& x, const SEParams& p);

Vector gru_step(const Vector& h_prev, const Vector& v, const GruParams& p);
GruStepTrace gru_step_trace(const Vector& h_prev, const Vector& v,
                            const GruParams& p);

}  // namespace recalnet
