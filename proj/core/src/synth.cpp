#include <cmath>

#include "recalnet/activations.hpp"
#include "recalnet/data.hpp"
#include "recalnet/error.hpp"
#include "recalnet/rng.hpp"

namespace recalnet {

void SynthSpec::validate() const {
  if (n_patients < 1)
    throw InvariantError(msg("SynthSpec: n_patients=", n_patients));
  if (t_min < 1 || t_max < t_min)
    throw InvariantError(msg("SynthSpec: T range [", t_min, ", ", t_max, "]"));
  if (n_features < 1)
    throw InvariantError(msg("SynthSpec: n_features=", n_features));
  if (trend_feature < 0 || trend_feature >= n_features)
    throw InvariantError(msg("SynthSpec: trend_feature=", trend_feature,
                             " outside [0, ", n_features, ")"));
  if (spike_feature < 0 || spike_feature >= n_features)
    throw InvariantError(msg("SynthSpec: spike_feature=", spike_feature,
                             " outside [0, ", n_features, ")"));
  if (spike_window < 1)
    throw InvariantError(msg("SynthSpec: spike_window=", spike_window));
  if (!(prevalence > 0.0 && prevalence < 1.0))
    throw InvariantError(msg("SynthSpec: prevalence=", prevalence));
  if (!(chronic_fraction >= 0.0 && chronic_fraction <= 1.0))
    throw InvariantError(msg("SynthSpec: chronic_fraction=", chronic_fraction));
  if (noise_std < 0.0 || baseline_std < 0.0)
    throw InvariantError("SynthSpec: negative noise/baseline std");
}

namespace {

struct PlantedPatient {
  bool chronic = false;
  bool progressor = false;  // chronic with an actual drift
  double drift_rate = 0.0;  // feature units lost per visit
  bool has_spike = false;
  int spike_at = -1;
  int t_len = 0;
};

// Per-visit risk logit before the cohort-level bias term.
double risk_signal(const SynthSpec& spec, const PlantedPatient& p, int t) {
  double s = 0.0;
  if (p.chronic && p.progressor)
    s += spec.trend_risk * p.drift_rate * static_cast<double>(t);
  if (p.has_spike && t >= p.spike_at && t < p.spike_at + spec.spike_window)
    s += spec.spike_risk;
  return s;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();

  Dataset ds;
  ds.feature_names.resize(spec.n_features);
  for (int j = 0; j < spec.n_features; ++j) {
    char name[16];
    std::snprintf(name, sizeof(name), "f%02d", j);
    ds.feature_names[j] = name;
  }

  // First pass: plant signals and write feature values.
  std::vector<PlantedPatient> planted(spec.n_patients);
  for (int p = 0; p < spec.n_patients; ++p) {
    Rng rng(derive_seed(spec.seed, "synth-patient", static_cast<uint64_t>(p)));
    PlantedPatient& pl = planted[p];
    pl.t_len = static_cast<int>(rng.uniform_int(spec.t_min, spec.t_max));
    pl.chronic = rng.uniform() < spec.chronic_fraction;
    double baseline = rng.normal(0.0, spec.baseline_std);
    if (pl.chronic) {
      pl.progressor = rng.uniform() < 0.5;
      if (pl.progressor) pl.drift_rate = spec.trend_slope * rng.uniform(0.5, 1.5);
    } else {
      pl.has_spike = rng.uniform() < 0.7;
      if (pl.has_spike)
        pl.spike_at = static_cast<int>(rng.uniform_int(0, pl.t_len - 1));
    }

    PatientSequence seq;
    char pid[16];
    std::snprintf(pid, sizeof(pid), "p%05d", p);
    seq.id = pid;
    seq.group = pl.chronic ? "chronic" : "acute";
    seq.visits = Matrix(pl.t_len, spec.n_features);
    for (int t = 0; t < pl.t_len; ++t) {
      for (int j = 0; j < spec.n_features; ++j)
        seq.visits(t, j) = rng.normal(0.0, spec.noise_std);
      seq.visits(t, spec.trend_feature) +=
          baseline - pl.drift_rate * static_cast<double>(t);
      if (pl.has_spike && t == pl.spike_at)
        seq.visits(t, spec.spike_feature) += spec.spike_magnitude;
    }
    seq.labels.assign(pl.t_len, 0.0);
    seq.mask.assign(pl.t_len, 1.0);
    ds.patients.push_back(std::move(seq));
  }

  // Solve the bias term so the mean label probability hits the target.
  auto mean_prob = [&](double bias) {
    double sum = 0.0;
    std::size_t count = 0;
    for (int p = 0; p < spec.n_patients; ++p)
      for (int t = 0; t < planted[p].t_len; ++t) {
        sum += sigmoid(bias + risk_signal(spec, planted[p], t));
        ++count;
      }
    return sum / static_cast<double>(count);
  };
  double lo = -40.0, hi = 40.0;
  if (mean_prob(lo) > spec.prevalence || mean_prob(hi) < spec.prevalence)
    throw Error(msg("synth_generate: prevalence target ", spec.prevalence,
                    " is unsatisfiable for the planted signals"));
  for (int iter = 0; iter < 100; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (mean_prob(mid) < spec.prevalence)
      lo = mid;
    else
      hi = mid;
  }
  const double bias = 0.5 * (lo + hi);

  // Second pass: sample labels from an independent stream.
  for (int p = 0; p < spec.n_patients; ++p) {
    Rng rng(derive_seed(spec.seed, "synth-label", static_cast<uint64_t>(p)));
    PatientSequence& seq = ds.patients[p];
    for (int t = 0; t < planted[p].t_len; ++t) {
      double prob = sigmoid(bias + risk_signal(spec, planted[p], t));
      seq.labels[t] = rng.uniform() < prob ? 1.0 : 0.0;
    }
  }
  return ds;
}

}  // namespace recalnet
