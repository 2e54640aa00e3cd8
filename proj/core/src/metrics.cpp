#include "recalnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "recalnet/error.hpp"

namespace recalnet {

ScoredSet pool(const GroupedScores& grouped) {
  ScoredSet s;
  for (const auto& p : grouped) {
    s.scores.insert(s.scores.end(), p.scores.begin(), p.scores.end());
    s.labels.insert(s.labels.end(), p.labels.begin(), p.labels.end());
  }
  return s;
}

namespace {
void check_scored(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size())
    throw InvariantError(msg("metrics: ", s.scores.size(), " scores vs ",
                             s.labels.size(), " labels"));
  if (s.scores.empty()) throw InvariantError("metrics: empty scored set");
}
}  // namespace

double auroc(const ScoredSet& s) {
  check_scored(s);
  std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] < s.scores[b];
  });

  std::size_t n_pos = 0;
  for (double y : s.labels) n_pos += y != 0.0 ? 1 : 0;
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw InvariantError(msg("auroc: single-class input (", n_pos,
                             " positives of ", n, ")"));

  // Sum of average ranks of the positives; ties within a group share the
  // mean rank, so every term is an exact multiple of 0.5.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (s.labels[order[k]] != 0.0) rank_sum += avg_rank;
    i = j;
  }
  double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) /
         (np * static_cast<double>(n_neg));
}

PrCurve pr_curve(const ScoredSet& s) {
  check_scored(s);
  std::size_t n = s.scores.size();
  std::size_t n_pos = 0;
  for (double y : s.labels) n_pos += y != 0.0 ? 1 : 0;
  if (n_pos == 0) throw InvariantError("pr_curve: no positive labels");
  std::size_t n_neg = n - n_pos;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
    return a < b;
  });

  PrCurve curve;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (s.labels[order[k]] != 0.0)
        ++tp;
      else
        ++fp;
    }
    PrPoint pt;
    pt.threshold = s.scores[order[i]];
    pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    pt.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    pt.tpr = pt.recall;
    pt.fpr = n_neg == 0 ? 0.0
                        : static_cast<double>(fp) / static_cast<double>(n_neg);
    curve.auprc += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
    curve.min_se_pp = std::max(curve.min_se_pp, std::min(pt.precision, pt.recall));
    curve.points.push_back(pt);
    i = j;
  }
  return curve;
}

EvalReport bootstrap_eval(const GroupedScores& grouped,
                          const std::vector<std::vector<std::size_t>>& resamples,
                          std::uint64_t seed) {
  if (grouped.empty()) throw InvariantError("bootstrap_eval: no patients");
  ScoredSet full = pool(grouped);
  PrCurve full_curve = pr_curve(full);

  EvalReport report;
  report.auprc = full_curve.auprc;
  report.min_se_pp = full_curve.min_se_pp;
  report.auroc = auroc(full);
  report.n_samples = resamples.size();
  report.seed = seed;

  Vector auprcs, aurocs, min_se_pps;
  auprcs.reserve(resamples.size());
  for (const auto& idx : resamples) {
    ScoredSet rs;
    for (std::size_t p : idx) {
      if (p >= grouped.size())
        throw InvariantError(msg("bootstrap_eval: patient index ", p,
                                 " out of range"));
      rs.scores.insert(rs.scores.end(), grouped[p].scores.begin(),
                       grouped[p].scores.end());
      rs.labels.insert(rs.labels.end(), grouped[p].labels.begin(),
                       grouped[p].labels.end());
    }
    std::size_t pos = 0;
    for (double y : rs.labels) pos += y != 0.0 ? 1 : 0;
    if (pos == 0 || pos == rs.labels.size()) {
      ++report.n_degenerate;
      continue;
    }
    PrCurve c = pr_curve(rs);
    auprcs.push_back(c.auprc);
    min_se_pps.push_back(c.min_se_pp);
    aurocs.push_back(auroc(rs));
  }
  if (!resamples.empty() && report.n_degenerate * 2 > resamples.size())
    throw Error(msg("bootstrap_eval: ", report.n_degenerate, " of ",
                    resamples.size(), " resamples lost a class"));

  auto stats = [](const Vector& xs) {
    MetricStats st;
    if (xs.empty()) return st;
    double sum = 0.0;
    for (double x : xs) sum += x;
    st.mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - st.mean) * (x - st.mean);
    st.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
    return st;
  };
  report.boot_auprc = stats(auprcs);
  report.boot_auroc = stats(aurocs);
  report.boot_min_se_pp = stats(min_se_pps);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["auprc"] = auprc;
  j["auroc"] = auroc;
  j["min_se_pp"] = min_se_pp;
  j["bootstrap"] = {
      {"n_samples", n_samples},
      {"n_degenerate", n_degenerate},
      {"seed", seed},
      {"auprc", {{"mean", boot_auprc.mean}, {"std", boot_auprc.stddev}}},
      {"auroc", {{"mean", boot_auroc.mean}, {"std", boot_auroc.stddev}}},
      {"min_se_pp",
       {{"mean", boot_min_se_pp.mean}, {"std", boot_min_se_pp.stddev}}},
  };
  return j.dump(2);
}

void write_curve_csv(const PrCurve& curve, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(msg("write_curve_csv: cannot open ", path));
  os << "threshold,precision,recall,tpr,fpr\n";
  char buf[512];
  for (const auto& pt : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  pt.threshold, pt.precision, pt.recall, pt.tpr, pt.fpr);
    os << buf;
  }
  if (!os) throw Error(msg("write_curve_csv: write failed for ", path));
}

}  // namespace recalnet
