#include "recalnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "recalnet/finite_diff.hpp"
#include "recalnet/metrics.hpp"
#include "recalnet/parallel.hpp"
#include "recalnet/rng.hpp"

namespace recalnet {

namespace {
// Patients reduce into chunks of this fixed size; chunk partials are summed
// in index order, so results do not depend on the worker count.
constexpr std::size_t kReduceChunk = 8;
}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvariantError(msg("TrainConfig: lr=", lr));
  if (batch_size < 1)
    throw InvariantError(msg("TrainConfig: batch_size=", batch_size));
  if (max_epochs < 1)
    throw InvariantError(msg("TrainConfig: max_epochs=", max_epochs));
  if (patience < 1) throw InvariantError(msg("TrainConfig: patience=", patience));
  if (threads < 1) throw InvariantError(msg("TrainConfig: threads=", threads));
}

AdamState make_adam_state(const ParamSet& params) {
  AdamState state;
  state.m.assign(layout_of(params).total, 0.0);
  state.v.assign(state.m.size(), 0.0);
  return state;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const TrainConfig& cfg) {
  Vector g = flatten(grads);
  if (g.size() != state.m.size())
    throw InvariantError(msg("adam_step: ", g.size(), " gradients vs state of ",
                             state.m.size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::isnan(g[i]))
      throw Error(msg("adam_step: NaN gradient at ",
                      layout_of(grads).locate(i)));

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t pos = 0;
  params.for_each([&](const std::string&, auto& t) {
    for (double& x : tensor_span(t)) {
      const double gi = g[pos];
      state.m[pos] = cfg.beta1 * state.m[pos] + (1.0 - cfg.beta1) * gi;
      state.v[pos] = cfg.beta2 * state.v[pos] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = state.m[pos] / bc1;
      const double vhat = state.v[pos] / bc2;
      x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      ++pos;
    }
  });
}

namespace {

// Deterministic Fisher-Yates using the pinned Rng.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

GroupedScores score_dataset(const Dataset& ds, const ParamSet& params,
                            const ModelConfig& mcfg, int threads) {
  GroupedScores grouped(ds.patients.size());
  const std::size_t n_chunks =
      (ds.patients.size() + kReduceChunk - 1) / kReduceChunk;
  parallel_chunks(n_chunks, threads, [&](std::size_t chunk) {
    const std::size_t lo = chunk * kReduceChunk;
    const std::size_t hi = std::min(lo + kReduceChunk, ds.patients.size());
    for (std::size_t p = lo; p < hi; ++p) {
      ForwardOutput out = forward(ds.patients[p], params, mcfg, Mode::eval());
      PatientScores& ps = grouped[p];
      for (std::size_t t = 0; t < out.predictions.size(); ++t) {
        if (ds.patients[p].mask[t] == 0.0) continue;
        ps.scores.push_back(out.predictions[t]);
        ps.labels.push_back(ds.patients[p].labels[t]);
      }
    }
  });
  return grouped;
}

void check_dataset_width(const Dataset& ds, const ModelConfig& mcfg,
                         const char* which) {
  if (ds.patients.empty())
    throw InvariantError(msg("fit: ", which, " dataset is empty"));
  for (const auto& p : ds.patients)
    if (p.visits.cols() != static_cast<std::size_t>(mcfg.n_features))
      throw InvariantError(msg("fit: ", which, " patient ", p.id, " has width ",
                               p.visits.cols(), ", model expects ",
                               mcfg.n_features));
}

}  // namespace

FitResult fit(const Dataset& train, const Dataset& valid,
              const ModelConfig& mcfg, const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  check_dataset_width(train, mcfg, "train");
  check_dataset_width(valid, mcfg, "valid");

  ParamSet params = init_params(mcfg, derive_seed(tcfg.seed, "init"));
  AdamState adam = make_adam_state(params);

  FitResult result;
  double best_auprc = -1.0;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train.patients.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tcfg.seed, "shuffle", epoch));
    shuffle_indices(order, shuffle_rng);

    double loss_sum = 0.0;
    const std::size_t n = order.size();
    const std::size_t batch_n = static_cast<std::size_t>(tcfg.batch_size);
    for (std::size_t start = 0, batch_idx = 0; start < n;
         start += batch_n, ++batch_idx) {
      const std::size_t b_size = std::min(batch_n, n - start);
      const std::size_t n_chunks = (b_size + kReduceChunk - 1) / kReduceChunk;

      std::vector<ParamSet> chunk_grads(n_chunks);
      Vector chunk_loss(n_chunks, 0.0);
      parallel_chunks(n_chunks, tcfg.threads, [&](std::size_t chunk) {
        const std::size_t lo = chunk * kReduceChunk;
        const std::size_t hi = std::min(lo + kReduceChunk, b_size);
        ParamSet acc = make_zero_params(mcfg);
        double local_loss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t patient = order[start + i];
          BackwardResult br = backward(
              train.patients[patient], params, mcfg,
              derive_seed(tcfg.seed, "dropout",
                          static_cast<std::uint64_t>(epoch), patient));
          local_loss += br.loss;
          axpy(acc, br.grads, 1.0);
        }
        chunk_grads[chunk] = std::move(acc);
        chunk_loss[chunk] = local_loss;
      });

      ParamSet batch_grads = std::move(chunk_grads[0]);
      double batch_loss = chunk_loss[0];
      for (std::size_t c = 1; c < n_chunks; ++c) {
        axpy(batch_grads, chunk_grads[c], 1.0);
        batch_loss += chunk_loss[c];
      }
      scale_params(batch_grads, 1.0 / static_cast<double>(b_size));
      batch_loss /= static_cast<double>(b_size);
      if (!std::isfinite(batch_loss))
        throw Error(msg("fit: non-finite loss at epoch ", epoch, ", batch ",
                        batch_idx));
      loss_sum += batch_loss * static_cast<double>(b_size);
      adam_step(params, batch_grads, adam, tcfg);
    }

    GroupedScores val_scores = score_dataset(valid, params, mcfg, tcfg.threads);
    ScoredSet pooled = pool(val_scores);
    PrCurve curve = pr_curve(pooled);

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.val_auprc = curve.auprc;
    stats.val_min_se_pp = curve.min_se_pp;
    stats.val_auroc = auroc(pooled);
    result.history.push_back(stats);

    if (stats.val_auprc > best_auprc) {
      best_auprc = stats.val_auprc;
      result.best_params = params;
      result.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= tcfg.patience) break;
    }
  }
  return result;
}

void write_history_jsonl(const std::vector<EpochStats>& history,
                         const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(msg("write_history_jsonl: cannot open ", path));
  for (const auto& e : history) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_auprc"] = e.val_auprc;
    j["val_auroc"] = e.val_auroc;
    j["val_min_se_pp"] = e.val_min_se_pp;
    os << j.dump() << "\n";
  }
  if (!os) throw Error(msg("write_history_jsonl: write failed for ", path));
}

GradCheckReport gradient_check_with(
    const ModelConfig& mcfg, std::uint64_t seed,
    const std::function<void(ParamSet&)>& corrupt_grads) {
  ModelConfig cfg = mcfg;
  cfg.dropout = 0.0;  // the finite-difference oracle needs a smooth loss
  cfg.validate();

  // Small random batch: two patients of five visits each.
  Rng data_rng(derive_seed(seed, "gradcheck-data"));
  std::vector<PatientSequence> batch;
  for (int p = 0; p < 2; ++p) {
    PatientSequence seq;
    seq.id = msg("gc", p);
    const std::size_t t_len = std::min(5, cfg.max_seq_len);
    seq.visits = Matrix(t_len, cfg.n_features);
    for (double& x : seq.visits.storage()) x = data_rng.normal();
    seq.labels.resize(t_len);
    seq.mask.assign(t_len, 1.0);
    for (double& y : seq.labels) y = data_rng.uniform() < 0.5 ? 0.0 : 1.0;
    batch.push_back(std::move(seq));
  }

  ParamSet params = init_params(cfg, derive_seed(seed, "gradcheck-init"));
  ParamLayout layout = layout_of(params);

  ParamSet analytic = make_zero_params(cfg);
  for (const auto& seq : batch) {
    BackwardResult br = backward(seq, params, cfg, 0);
    axpy(analytic, br.grads, 1.0 / static_cast<double>(batch.size()));
  }
  if (corrupt_grads) corrupt_grads(analytic);

  ParamSet probe = make_zero_params(cfg);
  auto loss_at = [&](const Vector& flat) {
    unflatten(probe, flat);
    double total = 0.0;
    for (const auto& seq : batch) {
      ForwardOutput out = forward(seq, probe, cfg, Mode::train(0));
      total += bce_loss(out.predictions, seq.labels, seq.mask);
    }
    return total / static_cast<double>(batch.size());
  };
  Vector numeric = finite_diff_grad(loss_at, flatten(params), 1e-5);
  Vector flat_analytic = flatten(analytic);

  GradCheckReport report;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = flat_analytic[i], nu = numeric[i];
    const double rel =
        std::abs(a - nu) / std::max({std::abs(a), std::abs(nu), 1e-8});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = layout.locate(i);
      report.analytic = a;
      report.numeric = nu;
    }
  }
  return report;
}

GradCheckReport gradient_check(const ModelConfig& mcfg, std::uint64_t seed) {
  return gradient_check_with(mcfg, seed, nullptr);
}

}  // namespace recalnet
