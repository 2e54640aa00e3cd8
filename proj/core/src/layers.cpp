#include "recalnet/layers.hpp"

namespace recalnet {

void ConvBank::validate() const {
  if (kernel_len < 1 || dilation < 1 || in_width < 1 || n_filters() < 1)
    throw InvariantError(msg("ConvBank: kernel_len=", kernel_len, " dilation=",
                             dilation, " in_width=", in_width, " filters=",
                             n_filters(), "; all must be >= 1"));
  if (filters.cols() != static_cast<std::size_t>(kernel_len) * in_width)
    throw InvariantError(msg("ConvBank: filter matrix has ", filters.cols(),
                             " cols, expected kernel_len*in_width = ",
                             static_cast<std::size_t>(kernel_len) * in_width));
  if (bias.size() != n_filters())
    throw InvariantError(msg("ConvBank: bias length ", bias.size(),
                             " != filter count ", n_filters()));
}

void SEParams::validate() const {
  if (ratio < 1) throw InvariantError("SEParams: ratio must be >= 1");
  if (compress.rows() != expand.cols() || compress.cols() != expand.rows())
    throw InvariantError(msg("SEParams: compress is ", compress.rows(), "x",
                             compress.cols(), " but expand is ", expand.rows(),
                             "x", expand.cols()));
  if (act != Activation::Sigmoid && act != Activation::Sparsemax)
    throw InvariantError("SEParams: activation must be sigmoid or sparsemax");
}

void GruParams::validate() const {
  std::size_t nh = w_update.rows();
  auto bad = [&](const Matrix& m) {
    return m.rows() != nh || m.cols() != w_update.cols();
  };
  if (bad(w_reset) || bad(w_cand) || b_update.size() != nh ||
      b_reset.size() != nh || b_cand.size() != nh)
    throw InvariantError("GruParams: gate shapes inconsistent");
  if (w_update.cols() <= nh)
    throw InvariantError(msg("GruParams: gate width ", w_update.cols(),
                             " leaves no room for input (hidden=", nh, ")"));
}

Matrix dilated_causal_conv(const Matrix& series, const ConvBank& bank) {
  bank.validate();
  if (series.cols() != static_cast<std::size_t>(bank.in_width))
    throw InvariantError(msg("dilated_causal_conv: series width ",
                             series.cols(), " != bank in_width ",
                             bank.in_width));
  const std::size_t t_len = series.rows();
  const std::size_t n_r = series.cols();
  const std::size_t n_f = bank.n_filters();
  Matrix out(t_len, n_f);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t f = 0; f < n_f; ++f) {
      const double* kern = bank.filters.row(f);
      double acc = bank.bias[f];
      for (int l = 0; l < bank.kernel_len; ++l) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                   static_cast<std::ptrdiff_t>(bank.dilation) * l;
        if (src < 0) continue;  // causal zero padding
        const double* row = series.row(static_cast<std::size_t>(src));
        const double* kl = kern + static_cast<std::size_t>(l) * n_r;
        for (std::size_t j = 0; j < n_r; ++j) acc += kl[j] * row[j];
      }
      out(t, f) = acc;
    }
  }
  return out;
}

Matrix multi_scale_conv(const Matrix& series, const std::vector<ConvBank>& banks) {
  if (banks.empty()) throw InvariantError("multi_scale_conv: no banks");
  const std::size_t n_c = banks.front().n_filters();
  for (const auto& b : banks)
    if (b.n_filters() != n_c)
      throw InvariantError(msg("multi_scale_conv: banks disagree on filter "
                               "count: ", n_c, " vs ", b.n_filters()));
  Matrix out(series.rows(), banks.size() * n_c);
  for (std::size_t b = 0; b < banks.size(); ++b) {
    Matrix part = dilated_causal_conv(series, banks[b]);
    for (std::size_t t = 0; t < series.rows(); ++t)
      for (std::size_t f = 0; f < n_c; ++f) out(t, b * n_c + f) = part(t, f);
  }
  return out;
}

SERecal se_recalibrate(const Vector& x, const SEParams& p) {
  p.validate();
  if (x.size() != p.compress.cols())
    throw InvariantError(msg("se_recalibrate: input length ", x.size(),
                             " != compress cols ", p.compress.cols()));
  Vector hidden = activate(Activation::Relu, affine(p.compress, x));
  Vector pre = affine(p.expand, hidden);
  SERecal r;
  r.weights = activate(p.act, pre);
  r.weighted.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r.weighted[i] = r.weights[i] * x[i];
  return r;
}

GruStepTrace gru_step_trace(const Vector& h_prev, const Vector& v,
                            const GruParams& p) {
  p.validate();
  const std::size_t nh = p.n_hidden();
  if (h_prev.size() != nh || nh + v.size() != p.w_update.cols())
    throw InvariantError(msg("gru_step: hidden ", h_prev.size(), " + input ",
                             v.size(), " does not match gate width ",
                             p.w_update.cols()));
  Vector hv(nh + v.size());
  std::copy(h_prev.begin(), h_prev.end(), hv.begin());
  std::copy(v.begin(), v.end(), hv.begin() + nh);

  GruStepTrace tr;
  tr.update = activate(Activation::Sigmoid, affine(p.w_update, hv, p.b_update));
  tr.reset = activate(Activation::Sigmoid, affine(p.w_reset, hv, p.b_reset));

  Vector rh_v(hv);
  for (std::size_t i = 0; i < nh; ++i) rh_v[i] = tr.reset[i] * h_prev[i];
  tr.cand = activate(Activation::Tanh, affine(p.w_cand, rh_v, p.b_cand));

  tr.h.resize(nh);
  for (std::size_t i = 0; i < nh; ++i)
    tr.h[i] = (1.0 - tr.update[i]) * h_prev[i] + tr.update[i] * tr.cand[i];
  return tr;
}

Vector gru_step(const Vector& h_prev, const Vector& v, const GruParams& p) {
  return gru_step_trace(h_prev, v, p).h;
}

}  // namespace recalnet
