#include "recalnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "recalnet/rng.hpp"

namespace recalnet {

namespace {
constexpr double kProbClamp = 1e-7;
}

void ModelConfig::validate() const {
  if (n_features < 1)
    throw InvariantError(msg("ModelConfig: n_features=", n_features));
  if (hidden < 1) throw InvariantError(msg("ModelConfig: hidden=", hidden));
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw InvariantError(msg("ModelConfig: dropout=", dropout,
                             " outside [0, 1)"));
  if (max_seq_len < 1)
    throw InvariantError(msg("ModelConfig: max_seq_len=", max_seq_len));
  if (use_conv) {
    if (conv_filters < 1 || kernel_len < 1)
      throw InvariantError(msg("ModelConfig: conv_filters=", conv_filters,
                               " kernel_len=", kernel_len));
    if (dilations.empty())
      throw InvariantError("ModelConfig: no dilation rates");
    for (std::size_t i = 0; i < dilations.size(); ++i) {
      if (dilations[i] < 1)
        throw InvariantError(msg("ModelConfig: dilation rate ", dilations[i]));
      if (i > 0 && dilations[i] <= dilations[i - 1])
        throw InvariantError("ModelConfig: dilation rates must be strictly increasing");
    }
  }
  if (compress_ratio < 1)
    throw InvariantError(msg("ModelConfig: compress_ratio=", compress_ratio));
  if (raw_activation != Activation::Sigmoid &&
      raw_activation != Activation::Sparsemax)
    throw InvariantError("ModelConfig: raw_activation must be sigmoid or sparsemax");
}

std::string ParamLayout::locate(std::size_t flat_index) const {
  for (const auto& e : entries)
    if (flat_index >= e.offset && flat_index < e.offset + e.size)
      return msg(e.name, "[", flat_index - e.offset, "]");
  return msg("<out of range ", flat_index, ">");
}

ParamLayout layout_of(const ParamSet& params) {
  ParamLayout layout;
  params.for_each([&](const std::string& name, const auto& t) {
    ParamLayout::Entry e;
    e.name = name;
    e.shape = tensor_shape(t);
    e.offset = layout.total;
    e.size = tensor_span(t).size();
    layout.total += e.size;
    layout.entries.push_back(std::move(e));
  });
  return layout;
}

Vector flatten(const ParamSet& params) {
  Vector flat;
  params.for_each([&](const std::string&, const auto& t) {
    auto s = tensor_span(t);
    flat.insert(flat.end(), s.begin(), s.end());
  });
  return flat;
}

void unflatten(ParamSet& params, const Vector& flat) {
  std::size_t pos = 0;
  params.for_each([&](const std::string& name, auto& t) {
    auto s = tensor_span(t);
    if (pos + s.size() > flat.size())
      throw InvariantError(msg("unflatten: flat vector too short at ", name));
    std::copy(flat.begin() + pos, flat.begin() + pos + s.size(), s.begin());
    pos += s.size();
  });
  if (pos != flat.size())
    throw InvariantError(msg("unflatten: flat vector has ", flat.size(),
                             " values, layout needs ", pos));
}

namespace {
std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }
}

ParamSet make_zero_params(const ModelConfig& config) {
  config.validate();
  ParamSet p;
  const std::size_t n_r = config.n_features;
  if (config.use_conv) {
    for (int rate : config.dilations) {
      ConvBank bank;
      bank.dilation = rate;
      bank.kernel_len = config.kernel_len;
      bank.in_width = config.n_features;
      bank.filters = Matrix(config.conv_filters, config.kernel_len * n_r);
      bank.bias = Vector(config.conv_filters, 0.0);
      p.banks.push_back(std::move(bank));
    }
    const std::size_t cw = config.conv_width();
    const std::size_t mc = ceil_div(cw, config.compress_ratio);
    p.se_conv.compress = Matrix(mc, cw);
    p.se_conv.expand = Matrix(cw, mc);
    p.se_conv.ratio = config.compress_ratio;
    p.se_conv.act = Activation::Sigmoid;
  }
  if (config.use_raw_recal) {
    const std::size_t mr = ceil_div(n_r, config.compress_ratio);
    p.se_raw.compress = Matrix(mr, n_r);
    p.se_raw.expand = Matrix(n_r, mr);
    p.se_raw.ratio = config.compress_ratio;
    p.se_raw.act = config.raw_activation;
  }
  const std::size_t nh = config.hidden;
  const std::size_t gate_w = nh + config.visit_width();
  p.gru.w_update = Matrix(nh, gate_w);
  p.gru.w_reset = Matrix(nh, gate_w);
  p.gru.w_cand = Matrix(nh, gate_w);
  p.gru.b_update = Vector(nh, 0.0);
  p.gru.b_reset = Vector(nh, 0.0);
  p.gru.b_cand = Vector(nh, 0.0);
  p.out_w = Matrix(1, nh);
  p.out_b = Vector(1, 0.0);
  return p;
}

void axpy(ParamSet& acc, const ParamSet& g, double scale) {
  Vector flat_g = flatten(g);
  std::size_t pos = 0;
  acc.for_each([&](const std::string& name, auto& t) {
    auto s = tensor_span(t);
    if (pos + s.size() > flat_g.size())
      throw InvariantError(msg("axpy: shape mismatch at ", name));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += scale * flat_g[pos + i];
    pos += s.size();
  });
  if (pos != flat_g.size()) throw InvariantError("axpy: layouts differ");
}

void scale_params(ParamSet& params, double scale) {
  params.for_each([&](const std::string&, auto& t) {
    for (double& x : tensor_span(t)) x *= scale;
  });
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamSet p = make_zero_params(config);
  Rng rng(seed);
  p.for_each([&](const std::string& name, auto& t) {
    using T = std::remove_reference_t<decltype(t)>;
    if constexpr (std::is_same_v<T, Matrix>) {
      // Biases stay zero; only 2-D tensors get Xavier draws.
      const double fan_in = static_cast<double>(t.cols());
      const double fan_out = static_cast<double>(t.rows());
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& x : tensor_span(t)) x = rng.uniform(-bound, bound);
    } else {
      (void)name;
    }
  });
  return p;
}

double bce_loss(const Vector& preds, const Vector& labels, const Vector& mask) {
  if (preds.size() != labels.size() || preds.size() != mask.size())
    throw InvariantError(msg("bce_loss: lengths differ: preds=", preds.size(),
                             " labels=", labels.size(), " mask=", mask.size()));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    if (mask[t] == 0.0) continue;
    double p = std::clamp(preds[t], kProbClamp, 1.0 - kProbClamp);
    sum += -(labels[t] * std::log(p) + (1.0 - labels[t]) * std::log(1.0 - p));
    ++count;
  }
  if (count == 0) throw InvariantError("bce_loss: empty mask");
  return sum / static_cast<double>(count);
}

namespace {

struct VisitCache {
  Vector c, se_c_hidden_pre, se_c_hidden, u_c, ctil;
  Vector se_r_hidden_pre, se_r_hidden, u_r, rtil;
  Vector v;
  GruStepTrace gru;
  Vector dropmask;  // empty when dropout is off or in eval mode
  double yhat = 0.0;
};

struct ForwardCache {
  std::vector<VisitCache> visits;
};

void check_sequence(const PatientSequence& seq, const ModelConfig& config) {
  if (seq.visits.cols() != static_cast<std::size_t>(config.n_features))
    throw InvariantError(msg("forward: sequence width ", seq.visits.cols(),
                             " != n_features ", config.n_features,
                             " (patient ", seq.id, ")"));
  if (seq.length() < 1)
    throw InvariantError(msg("forward: empty sequence (patient ", seq.id, ")"));
  if (seq.length() > static_cast<std::size_t>(config.max_seq_len))
    throw InvariantError(msg("forward: sequence length ", seq.length(),
                             " exceeds max_seq_len ", config.max_seq_len,
                             " (patient ", seq.id, ")"));
}

// One SE block evaluation with every intermediate kept for the backward pass.
void se_forward(const Vector& x, const SEParams& se, Vector& hidden_pre,
                Vector& hidden, Vector& u, Vector& gated) {
  hidden_pre = affine(se.compress, x);
  hidden = activate(Activation::Relu, hidden_pre);
  Vector pre = affine(se.expand, hidden);
  u = activate(se.act, pre);
  gated.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) gated[i] = u[i] * x[i];
}

ForwardOutput forward_impl(const PatientSequence& seq, const ParamSet& params,
                           const ModelConfig& config, const Mode& mode,
                           ForwardCache* cache) {
  check_sequence(seq, config);
  const std::size_t t_len = seq.length();
  const std::size_t n_r = config.n_features;
  const std::size_t nh = config.hidden;

  ForwardOutput out;
  out.predictions.resize(t_len);
  out.hidden.resize(t_len);
  out.trace.u_raw.resize(t_len);
  out.trace.conv_filters = config.use_conv ? config.conv_filters : 0;
  if (config.use_conv) {
    out.trace.dilation_rates = config.dilations;
    out.trace.u_conv.resize(t_len);
  }
  if (cache) cache->visits.resize(t_len);

  Matrix conv_out;
  if (config.use_conv) conv_out = multi_scale_conv(seq.visits, params.banks);

  const bool dropping = mode.is_train && config.dropout > 0.0;
  Rng drop_rng(mode.dropout_seed);
  const double keep_scale = dropping ? 1.0 / (1.0 - config.dropout) : 1.0;

  Vector h(nh, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    VisitCache local;
    VisitCache& vc = cache ? cache->visits[t] : local;

    Vector r_t(seq.visits.row(t), seq.visits.row(t) + n_r);

    if (config.use_raw_recal) {
      se_forward(r_t, params.se_raw, vc.se_r_hidden_pre, vc.se_r_hidden,
                 vc.u_r, vc.rtil);
    } else {
      vc.u_r = Vector(n_r, 1.0);
      vc.rtil = r_t;
    }
    // Trace fidelity: the gated record consumed downstream must equal
    // u_r (.) r_t.
    for (std::size_t j = 0; j < n_r; ++j)
      if (vc.rtil[j] != vc.u_r[j] * r_t[j])
        throw InvariantError("forward: recalibration trace diverged from the "
                             "consumed record");

    if (config.use_conv) {
      vc.c = Vector(conv_out.row(t), conv_out.row(t) + conv_out.cols());
      se_forward(vc.c, params.se_conv, vc.se_c_hidden_pre, vc.se_c_hidden,
                 vc.u_c, vc.ctil);
      vc.v.resize(n_r + vc.c.size());
      std::copy(vc.rtil.begin(), vc.rtil.end(), vc.v.begin());
      std::copy(vc.ctil.begin(), vc.ctil.end(), vc.v.begin() + n_r);
    } else {
      vc.v = vc.rtil;
    }

    vc.gru = gru_step_trace(h, vc.v, params.gru);
    h = vc.gru.h;

    Vector head_in = h;
    if (dropping) {
      vc.dropmask.resize(nh);
      for (std::size_t i = 0; i < nh; ++i)
        vc.dropmask[i] = drop_rng.uniform() >= config.dropout ? keep_scale : 0.0;
      for (std::size_t i = 0; i < nh; ++i) head_in[i] *= vc.dropmask[i];
    }

    double s = params.out_b[0];
    const double* wy = params.out_w.row(0);
    for (std::size_t i = 0; i < nh; ++i) s += wy[i] * head_in[i];
    vc.yhat = sigmoid(s);

    out.predictions[t] = vc.yhat;
    out.hidden[t] = h;
    out.trace.u_raw[t] = vc.u_r;
    if (config.use_conv) out.trace.u_conv[t] = vc.u_c;
  }
  return out;
}

}  // namespace

ForwardOutput forward(const PatientSequence& seq, const ParamSet& params,
                      const ModelConfig& config, const Mode& mode) {
  return forward_impl(seq, params, config, mode, nullptr);
}

BackwardResult backward(const PatientSequence& seq, const ParamSet& params,
                        const ModelConfig& config,
                        std::uint64_t dropout_seed) {
  check_sequence(seq, config);
  if (seq.labels.size() != seq.length() || seq.mask.size() != seq.length())
    throw InvariantError(msg("backward: labels/mask length mismatch (patient ",
                             seq.id, ")"));

  ForwardCache cache;
  ForwardOutput out = forward_impl(seq, params, config,
                                   Mode::train(dropout_seed), &cache);

  BackwardResult result;
  result.loss = bce_loss(out.predictions, seq.labels, seq.mask);
  result.grads = make_zero_params(config);
  ParamSet& g = result.grads;

  const std::size_t t_len = seq.length();
  const std::size_t n_r = config.n_features;
  const std::size_t nh = config.hidden;
  const std::size_t n_c = config.conv_filters;

  std::size_t masked = 0;
  for (double m : seq.mask) masked += m != 0.0 ? 1 : 0;
  const double inv_m = 1.0 / static_cast<double>(masked);

  Vector out_w_row(params.out_w.row(0), params.out_w.row(0) + nh);
  Vector delta_h_next(nh, 0.0);
  // Conv output gradient per visit; conv filter grads accumulate at the end.
  std::vector<Vector> delta_c(config.use_conv ? t_len : 0);

  for (std::size_t ti = t_len; ti-- > 0;) {
    const VisitCache& vc = cache.visits[ti];
    const Vector h_prev =
        ti == 0 ? Vector(nh, 0.0) : cache.visits[ti - 1].gru.h;

    // Head. Clamped predictions contribute no gradient.
    double delta_s = 0.0;
    if (seq.mask[ti] != 0.0 && vc.yhat >= kProbClamp &&
        vc.yhat <= 1.0 - kProbClamp)
      delta_s = inv_m * (vc.yhat - seq.labels[ti]);

    Vector head_in = vc.gru.h;
    if (!vc.dropmask.empty())
      for (std::size_t i = 0; i < nh; ++i) head_in[i] *= vc.dropmask[i];

    Vector delta_h(delta_h_next);
    if (delta_s != 0.0) {
      for (std::size_t i = 0; i < nh; ++i) {
        g.out_w(0, i) += delta_s * head_in[i];
        double dh = delta_s * out_w_row[i];
        if (!vc.dropmask.empty()) dh *= vc.dropmask[i];
        delta_h[i] += dh;
      }
      g.out_b[0] += delta_s;
    }

    // GRU cell.
    const GruStepTrace& gs = vc.gru;
    Vector delta_cand(nh), delta_update(nh), delta_h_prev(nh);
    for (std::size_t i = 0; i < nh; ++i) {
      delta_cand[i] = delta_h[i] * gs.update[i];
      delta_update[i] = delta_h[i] * (gs.cand[i] - h_prev[i]);
      delta_h_prev[i] = delta_h[i] * (1.0 - gs.update[i]);
    }

    Vector hv(nh + vc.v.size());
    std::copy(h_prev.begin(), h_prev.end(), hv.begin());
    std::copy(vc.v.begin(), vc.v.end(), hv.begin() + nh);
    Vector rh_v(hv);
    for (std::size_t i = 0; i < nh; ++i) rh_v[i] = gs.reset[i] * h_prev[i];

    Vector delta_a_cand(nh);
    for (std::size_t i = 0; i < nh; ++i)
      delta_a_cand[i] = delta_cand[i] * (1.0 - gs.cand[i] * gs.cand[i]);
    add_outer(g.gru.w_cand, delta_a_cand, rh_v);
    add_scaled(g.gru.b_cand, delta_a_cand, 1.0);
    Vector delta_rh_v(hv.size(), 0.0);
    add_matvec_transposed(params.gru.w_cand, delta_a_cand, delta_rh_v);

    Vector delta_reset(nh);
    Vector delta_v(vc.v.size(), 0.0);
    for (std::size_t i = 0; i < nh; ++i) {
      delta_reset[i] = delta_rh_v[i] * h_prev[i];
      delta_h_prev[i] += delta_rh_v[i] * gs.reset[i];
    }
    for (std::size_t i = 0; i < vc.v.size(); ++i) delta_v[i] += delta_rh_v[nh + i];

    Vector delta_a_update(nh), delta_a_reset(nh);
    for (std::size_t i = 0; i < nh; ++i) {
      delta_a_update[i] = delta_update[i] * gs.update[i] * (1.0 - gs.update[i]);
      delta_a_reset[i] = delta_reset[i] * gs.reset[i] * (1.0 - gs.reset[i]);
    }
    add_outer(g.gru.w_update, delta_a_update, hv);
    add_scaled(g.gru.b_update, delta_a_update, 1.0);
    add_outer(g.gru.w_reset, delta_a_reset, hv);
    add_scaled(g.gru.b_reset, delta_a_reset, 1.0);

    Vector delta_hv(hv.size(), 0.0);
    add_matvec_transposed(params.gru.w_update, delta_a_update, delta_hv);
    add_matvec_transposed(params.gru.w_reset, delta_a_reset, delta_hv);
    for (std::size_t i = 0; i < nh; ++i) delta_h_prev[i] += delta_hv[i];
    for (std::size_t i = 0; i < vc.v.size(); ++i) delta_v[i] += delta_hv[nh + i];

    delta_h_next = delta_h_prev;

    // Split the visit-embedding gradient back into raw and conv paths.
    Vector r_t(seq.visits.row(ti), seq.visits.row(ti) + n_r);
    if (config.use_raw_recal) {
      Vector delta_u_r(n_r);
      for (std::size_t j = 0; j < n_r; ++j) delta_u_r[j] = delta_v[j] * r_t[j];
      Vector delta_pre(n_r, 0.0);
      if (params.se_raw.act == Activation::Sigmoid) {
        for (std::size_t j = 0; j < n_r; ++j)
          delta_pre[j] = delta_u_r[j] * vc.u_r[j] * (1.0 - vc.u_r[j]);
      } else {
        // Sparsemax generalized Jacobian: identity minus mean on the support,
        // zero elsewhere.
        double mean = 0.0;
        std::size_t support = 0;
        for (std::size_t j = 0; j < n_r; ++j)
          if (vc.u_r[j] > 0.0) {
            mean += delta_u_r[j];
            ++support;
          }
        mean /= static_cast<double>(support);
        for (std::size_t j = 0; j < n_r; ++j)
          delta_pre[j] = vc.u_r[j] > 0.0 ? delta_u_r[j] - mean : 0.0;
      }
      add_outer(g.se_raw.expand, delta_pre, vc.se_r_hidden);
      Vector delta_hid(vc.se_r_hidden.size(), 0.0);
      add_matvec_transposed(params.se_raw.expand, delta_pre, delta_hid);
      for (std::size_t j = 0; j < delta_hid.size(); ++j)
        if (vc.se_r_hidden_pre[j] <= 0.0) delta_hid[j] = 0.0;
      add_outer(g.se_raw.compress, delta_hid, r_t);
    }

    if (config.use_conv) {
      const std::size_t cw = vc.c.size();
      Vector delta_ctil(delta_v.begin() + n_r, delta_v.end());
      Vector delta_u_c(cw), dc(cw);
      for (std::size_t j = 0; j < cw; ++j) {
        delta_u_c[j] = delta_ctil[j] * vc.c[j];
        dc[j] = delta_ctil[j] * vc.u_c[j];
      }
      Vector delta_pre(cw);
      for (std::size_t j = 0; j < cw; ++j)
        delta_pre[j] = delta_u_c[j] * vc.u_c[j] * (1.0 - vc.u_c[j]);
      add_outer(g.se_conv.expand, delta_pre, vc.se_c_hidden);
      Vector delta_hid(vc.se_c_hidden.size(), 0.0);
      add_matvec_transposed(params.se_conv.expand, delta_pre, delta_hid);
      for (std::size_t j = 0; j < delta_hid.size(); ++j)
        if (vc.se_c_hidden_pre[j] <= 0.0) delta_hid[j] = 0.0;
      add_outer(g.se_conv.compress, delta_hid, vc.c);
      add_matvec_transposed(params.se_conv.compress, delta_hid, dc);
      delta_c[ti] = std::move(dc);
    }
  }

  if (config.use_conv) {
    for (std::size_t b = 0; b < params.banks.size(); ++b) {
      const ConvBank& bank = params.banks[b];
      ConvBank& gb = g.banks[b];
      for (std::size_t t = 0; t < t_len; ++t) {
        const Vector& dct = delta_c[t];
        for (std::size_t f = 0; f < n_c; ++f) {
          const double df = dct[b * n_c + f];
          if (df == 0.0) continue;
          gb.bias[f] += df;
          double* grow = gb.filters.row(f);
          for (int l = 0; l < bank.kernel_len; ++l) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(t) -
                static_cast<std::ptrdiff_t>(bank.dilation) * l;
            if (src < 0) continue;
            const double* row = seq.visits.row(static_cast<std::size_t>(src));
            double* gl = grow + static_cast<std::size_t>(l) * n_r;
            for (std::size_t j = 0; j < n_r; ++j) gl[j] += df * row[j];
          }
        }
      }
    }
  }

  return result;
}

}  // namespace recalnet
