#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recalnet/linalg.hpp"

namespace recalnet {

// One patient's visit history. Missing values are NaN between ingestion and
// imputation and must never leave this module unimputed.
struct PatientSequence {
  std::string id;
  Matrix visits;  // T x N_r
  Vector labels;  // T, each 0 or 1
  Vector mask;    // T, 1 = labeled visit
  std::string group;  // optional outcome-group tag

  std::size_t length() const { return visits.rows(); }
};

struct Dataset {
  std::vector<PatientSequence> patients;
  std::vector<std::string> feature_names;
  // Per-feature z-score statistics; empty until prepare() fits them on train.
  Vector norm_mean, norm_std;

  std::size_t n_features() const { return feature_names.size(); }
  std::size_t n_patients() const { return patients.size(); }
};

struct SplitFractions {
  double train = 0.7225, valid = 0.1275, test = 0.15;
};

struct Splits {
  Dataset train, valid, test;
};

// Synthetic EMR cohort with planted risk signals: a slow per-patient drift on
// one feature (chronic patients) and a one-visit spike on another (acute
// patients). Per-visit label probability is a logistic function of the drift
// accumulated so far and of spike presence within the trailing window.
struct SynthSpec {
  int n_patients = 1000;
  int t_min = 8, t_max = 32;
  int n_features = 20;
  std::uint64_t seed = 0;

  int trend_feature = 0;
  double trend_slope = 0.15;  // per-visit drift in feature units
  double trend_risk = 1.5;    // slope-to-risk coefficient (logit per drift unit)

  int spike_feature = 1;
  int spike_window = 3;         // label window w after the spike
  double spike_magnitude = 4.0; // feature-space bump at the spike visit
  double spike_risk = 4.0;      // logit bump while the spike is in window

  double noise_std = 1.0;
  double baseline_std = 2.0;  // per-patient offset on the trend feature
  double prevalence = 0.15;   // positive-rate target, solved via the bias term
  double chronic_fraction = 0.5;

  void validate() const;
};

// records CSV: header `patient_id,visit_index,<feature names...>`, empty cell
// means missing. labels CSV: header `patient_id,visit_index,label`.
Dataset load_csv(const std::string& records_path, const std::string& labels_path);

// Optional groups CSV: header `patient_id,group`; tags patients for
// importance aggregation.
void apply_groups_csv(Dataset& ds, const std::string& groups_path);

// Last observation carried forward; leading missing cells take the first
// observed value. Errors if a feature is never observed for a patient.
Dataset impute(const Dataset& ds);

// Truncate to max_len visits, split at patient level (largest-remainder
// rounding, seeded shuffle), then z-score with statistics fitted on train
// only. Input must already be imputed.
Splits prepare(const Dataset& ds, int max_len, const SplitFractions& fractions,
               std::uint64_t seed);

Dataset synth_generate(const SynthSpec& spec);

// n with-replacement samples of patient indices, each of size n_patients.
std::vector<std::vector<std::size_t>> bootstrap_resample(
    std::size_t n_patients, std::size_t n, std::uint64_t seed);

void write_records_csv(const Dataset& ds, const std::string& path);
void write_labels_csv(const Dataset& ds, const std::string& path);
void write_groups_csv(const Dataset& ds, const std::string& path);

}  // namespace recalnet
