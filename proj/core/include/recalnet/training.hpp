#pragma once

#include <functional>

#include "recalnet/model.hpp"

namespace recalnet {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;
  int max_epochs = 30;
  int patience = 5;  // epochs without validation-AUPRC improvement
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// Flat moment accumulators in ParamSet layout order.
struct AdamState {
  Vector m, v;
  long step = 0;
};

AdamState make_adam_state(const ParamSet& params);

// Standard bias-corrected Adam update, in place. Rejects NaN gradients,
// naming the offending parameter.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auprc = 0.0, val_auroc = 0.0, val_min_se_pp = 0.0;
};

struct FitResult {
  ParamSet best_params;
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

// Seeded mini-batch epochs with early stopping on validation AUPRC. Keeps the
// best-validation parameters. Deterministic for a fixed seed regardless of
// thread count: patients reduce into fixed-size chunks that are summed in
// index order.
FitResult fit(const Dataset& train, const Dataset& valid,
              const ModelConfig& mcfg, const TrainConfig& tcfg);

// One JSON object per epoch: epoch, train_loss, val_auprc, val_auroc,
// val_min_se_pp.
void write_history_jsonl(const std::vector<EpochStats>& history,
                         const std::string& path);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  double analytic = 0.0, numeric = 0.0;  // at the worst coordinate
};

// Compares backward() against central finite differences on a small random
// batch, dropout disabled. Relative error is |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport gradient_check(const ModelConfig& mcfg, std::uint64_t seed);

// Test hook: corrupt_grads edits the analytic gradients before comparison.
GradCheckReport gradient_check_with(
    const ModelConfig& mcfg, std::uint64_t seed,
    const std::function<void(ParamSet&)>& corrupt_grads);

}  // namespace recalnet
