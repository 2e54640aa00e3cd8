#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recalnet/linalg.hpp"

namespace recalnet {

// Scores and binary labels pooled over all masked-in visits.
struct ScoredSet {
  Vector scores;
  Vector labels;
};

// Per-patient scores, kept separate so the bootstrap can resample patients.
struct PatientScores {
  Vector scores;
  Vector labels;
};
using GroupedScores = std::vector<PatientScores>;

ScoredSet pool(const GroupedScores& grouped);

// Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 * P(tie). Rank-based
// with half credit for ties; exact and order-independent.
double auroc(const ScoredSet& s);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0, recall = 0.0;
  double tpr = 0.0, fpr = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per distinct threshold, descending
  double auprc = 0.0;           // step-wise sum (R_i - R_{i-1}) * P_i
  double min_se_pp = 0.0;       // max over points of min(precision, recall)
};

PrCurve pr_curve(const ScoredSet& s);

struct MetricStats {
  double mean = 0.0, stddev = 0.0;
};

struct EvalReport {
  double auprc = 0.0, auroc = 0.0, min_se_pp = 0.0;
  MetricStats boot_auprc, boot_auroc, boot_min_se_pp;
  std::size_t n_samples = 0;    // resamples requested
  std::size_t n_degenerate = 0; // resamples skipped for losing one class
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// Point estimates on the full set plus bootstrap mean/std at patient
// granularity; a resampled patient contributes all its visits. Errors if more
// than half the resamples are degenerate.
EvalReport bootstrap_eval(const GroupedScores& grouped,
                          const std::vector<std::vector<std::size_t>>& resamples,
                          std::uint64_t seed);

void write_curve_csv(const PrCurve& curve, const std::string& path);

}  // namespace recalnet
