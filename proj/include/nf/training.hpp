#pragma once

// Training loop: losses on the de-weighted functional derivative (functional
// form), on J applied to it (temporal form) or on the functional value itself
// (scalar form, toys), optimized with Adam under a cosine learning-rate decay.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nf/data.hpp"
#include "nf/functional.hpp"
#include "nf/pde.hpp"

namespace nf {

enum class LossMode { Functional, Temporal, Scalar };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& name);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws NumericError naming the step
/// on a non-finite gradient; parameters are untouched in that case.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

/// Cosine decay from lr0 at step 0 to lr1 at step `total`.
double cosine_lr(double lr0, double lr1, std::int64_t step, std::int64_t total);

/// Flat training examples on one grid.
struct TrainingSet {
  Grid grid;
  std::vector<Field> inputs;
  std::vector<Field> targets;  // dH/du or du/dt, shaped like inputs (empty for scalar form)
  std::vector<double> scalars;  // functional values (scalar form)

  [[nodiscard]] std::size_t size() const { return inputs.size(); }
};

TrainingSet training_set(const ToyDataset& toy, LossMode mode);
/// One example per (sample, step) pair, keeping every `time_stride`-th step.
/// Labels come from make_labels for the requested form.
TrainingSet training_set(const Dataset& dataset, const PdeSystem& system, LossMode mode, int time_stride = 1);

/// Batch loss on `params`' tape. `system` is required for the temporal form.
ad::Var hnf_loss(const FunctionalModel& model, const BoundParameters& params, const TrainingSet& set,
                 std::span<const std::size_t> batch, LossMode mode, const PdeSystem* system = nullptr);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // flattened like ParameterSet::flatten
};

/// Loss and parameter gradient over `batch`, split across workers.
LossGradient loss_and_gradient(const FunctionalModel& model, const TrainingSet& set, std::span<const std::size_t> batch,
                               LossMode mode, const PdeSystem* system = nullptr);

/// Mean loss over the whole set, evaluated in chunks without parameter gradients.
double evaluate_loss(const FunctionalModel& model, const TrainingSet& set, LossMode mode,
                     const PdeSystem* system = nullptr, std::size_t chunk = 64);

struct TrainOptions {
  LossMode loss = LossMode::Functional;
  double lr = 1e-3;
  double lr_final = 1e-5;
  int batch_size = 32;  // 0: full batch
  int epochs = 100;
  std::int64_t max_steps = 0;  // 0: no cap beyond epochs
  int eval_every = 1;          // validation cadence in epochs
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint;  // last good parameters are kept here
};

struct HistoryRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
};

struct TrainResult {
  FunctionalModel model;
  std::vector<HistoryRow> history;
  std::vector<double> step_losses;
  std::int64_t steps = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_val_loss;
  double seconds = 0.0;
};

/// Trains from the model's current parameters. A non-finite loss or
/// gradient raises DivergenceError after writing the last good checkpoint.
TrainResult train(FunctionalModel model, const TrainingSet& train_set, const TrainingSet* val_set,
                  const TrainOptions& options, const PdeSystem* system = nullptr);

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct ToyMetrics {
  double functional_mse = 0.0;
  double derivative_mse = 0.0;
};

/// MSE of H_theta against the closed-form labels and of the de-weighted
/// derivative against the analytic derivative field.
ToyMetrics evaluate_toy(const FunctionalModel& model, const ToyDataset& toy);

}  // namespace nf
