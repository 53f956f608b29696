#include "nf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>

#include "nf/checkpoint.hpp"
#include "nf/errors.hpp"
#include "nf/parallel.hpp"

namespace nf {

using ad::Var;

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Functional: return "functional";
    case LossMode::Temporal: return "temporal";
    case LossMode::Scalar: return "scalar";
  }
  return "functional";
}

LossMode loss_mode_from_string(const std::string& name) {
  if (name == "functional") return LossMode::Functional;
  if (name == "temporal") return LossMode::Temporal;
  if (name == "scalar") return LossMode::Scalar;
  throw ConfigError("unknown loss mode '" + name + "' (expected functional, temporal or scalar)");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at step " + std::to_string(state.step + 1) + " (parameter " +
                         std::to_string(i) + ")");
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double cosine_lr(double lr0, double lr1, std::int64_t step, std::int64_t total) {
  if (total <= 0) return lr0;
  const double f = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(std::numbers::pi * f));
}

// ---------------------------------------------------------------------------

TrainingSet training_set(const ToyDataset& toy, LossMode mode) {
  if (mode == LossMode::Temporal) throw ConfigError("toy datasets have no temporal labels");
  TrainingSet set;
  set.grid = toy.grid;
  for (const ToySample& s : toy.samples) {
    set.inputs.push_back(s.u);
    if (mode == LossMode::Functional) set.targets.push_back(s.derivative);
    set.scalars.push_back(s.label);
  }
  return set;
}

TrainingSet training_set(const Dataset& dataset, const PdeSystem& system, LossMode mode, int time_stride) {
  if (dataset.manifest.pde == "toy") return training_set(to_toy(dataset), mode);
  if (time_stride < 1) throw ConfigError("time_stride: must be >= 1");
  TrainingSet set;
  set.grid = dataset.manifest.grid();
  for (const Trajectory& source : dataset.samples) {
    Trajectory traj = source;
    if (mode == LossMode::Temporal && traj.steps() < 5) {
      throw ConfigError("temporal labels need at least 5 steps per trajectory, dataset has " +
                        std::to_string(traj.steps()));
    }
    if (mode != LossMode::Scalar) make_labels(traj, system, mode == LossMode::Functional ? LabelMode::Functional
                                                                                         : LabelMode::Temporal);
    for (int t = 0; t < traj.steps(); t += time_stride) {
      const auto k = static_cast<std::size_t>(t);
      set.inputs.push_back(traj.states[k]);
      if (mode == LossMode::Scalar) {
        set.scalars.push_back(hamiltonian_value(system, traj.states[k], set.grid));
      } else {
        set.targets.push_back(traj.labels[k]);
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------

Var hnf_loss(const FunctionalModel& model, const BoundParameters& params, const TrainingSet& set,
             std::span<const std::size_t> batch, LossMode mode, const PdeSystem* system) {
  if (batch.empty()) throw UsageError("hnf_loss: empty batch");
  ad::Tape& tape = params.tape();
  std::vector<Field> fields;
  fields.reserve(batch.size());
  for (std::size_t i : batch) fields.push_back(set.inputs.at(i));
  const int n = static_cast<int>(batch.size());

  if (mode == LossMode::Scalar) {
    if (set.scalars.size() != set.inputs.size()) throw ConfigError("scalar-form loss needs functional value labels");
    Array labels(n, 1);
    for (int b = 0; b < n; ++b) labels(b, 0) = set.scalars[batch[static_cast<std::size_t>(b)]];
    Var u = tape.constant(model.pack(fields, set.grid));
    return ad::mean_square(model.evaluate(params, u, n, set.grid) - tape.constant(labels));
  }

  if (set.targets.size() != set.inputs.size()) {
    throw ConfigError(to_string(mode) + "-form loss needs " +
                      (mode == LossMode::Functional ? std::string("dH/du") : std::string("du/dt")) + " labels");
  }
  std::vector<Field> targets;
  targets.reserve(batch.size());
  for (std::size_t i : batch) targets.push_back(set.targets[i]);

  FunctionalPass pass = functional_pass(model, params, fields, set.grid, params.requires_grad());
  if (mode == LossMode::Functional) {
    return ad::mean_square(pass.derivative - tape.constant(model.pack(targets, set.grid)));
  }
  if (system == nullptr) throw ConfigError("temporal-form loss needs a PDE system");
  if (!model.spec().is_integral_kernel()) throw ConfigError("temporal-form loss needs an integral kernel model");
  Var du_dt = apply_J(*system, pass.derivative, fields, set.grid);
  return ad::mean_square(du_dt - tape.constant(model.pack(targets, set.grid)));
}

namespace {

std::vector<std::span<const std::size_t>> split(std::span<const std::size_t> items, std::size_t parts) {
  parts = std::max<std::size_t>(1, std::min(parts, items.size()));
  std::vector<std::span<const std::size_t>> out;
  const std::size_t base = items.size() / parts;
  const std::size_t extra = items.size() % parts;
  std::size_t at = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out.push_back(items.subspan(at, len));
    at += len;
  }
  return out;
}

}  // namespace

LossGradient loss_and_gradient(const FunctionalModel& model, const TrainingSet& set, std::span<const std::size_t> batch,
                               LossMode mode, const PdeSystem* system) {
  const auto chunks = split(batch, static_cast<std::size_t>(worker_count()));
  std::vector<LossGradient> partial(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t c) {
    ad::Tape tape;
    BoundParameters p(tape, model.parameters(), true);
    Var loss = hnf_loss(model, p, set, chunks[c], mode, system);
    const std::vector<Array> grads = tape.gradient_values(loss, p.vars());
    LossGradient& out = partial[c];
    out.loss = loss.scalar();
    for (const Array& g : grads) out.gradient.insert(out.gradient.end(), g.data(), g.data() + g.size());
  });
  LossGradient total;
  total.gradient.assign(model.parameters().scalar_count(), 0.0);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const double w = static_cast<double>(chunks[c].size()) / static_cast<double>(batch.size());
    total.loss += w * partial[c].loss;
    for (std::size_t i = 0; i < total.gradient.size(); ++i) total.gradient[i] += w * partial[c].gradient[i];
  }
  return total;
}

double evaluate_loss(const FunctionalModel& model, const TrainingSet& set, LossMode mode, const PdeSystem* system,
                     std::size_t chunk) {
  if (set.size() == 0) throw ConfigError("evaluate_loss: empty dataset");
  chunk = std::max<std::size_t>(1, chunk);
  std::vector<std::size_t> all(set.size());
  std::iota(all.begin(), all.end(), 0);
  const std::size_t n_chunks = (all.size() + chunk - 1) / chunk;
  std::vector<double> partial(n_chunks);
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk;
    const std::size_t len = std::min(chunk, all.size() - lo);
    ad::Tape tape;
    BoundParameters p(tape, model.parameters(), false);
    partial[c] = hnf_loss(model, p, set, std::span<const std::size_t>(all).subspan(lo, len), mode, system).scalar() *
                 static_cast<double>(len);
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0) / static_cast<double>(all.size());
}

// ---------------------------------------------------------------------------

TrainResult train(FunctionalModel model, const TrainingSet& train_set, const TrainingSet* val_set,
                  const TrainOptions& options, const PdeSystem* system) {
  const std::size_t n = train_set.size();
  if (n == 0) throw ConfigError("training set is empty");
  if (options.epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (!(options.lr > 0.0) || options.lr_final < 0.0) throw ConfigError("lr: must be positive");
  const auto start = std::chrono::steady_clock::now();

  const std::size_t bs = options.batch_size <= 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(options.batch_size));
  const auto steps_per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  std::int64_t total = steps_per_epoch * options.epochs;
  if (options.max_steps > 0) total = std::min(total, options.max_steps);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  AdamState adam;
  std::vector<double> flat = model.parameters().flatten();

  TrainResult result{model, {}, {}, 0, 0.0, std::nullopt, 0.0};
  auto diverge = [&](const std::string& why) {
    FunctionalModel good = FunctionalModel::from_flat(model.spec(), flat);
    if (options.checkpoint) {
      save_checkpoint(good, *options.checkpoint,
                      {{"diverged_at_step", result.steps}, {"seed", options.seed}, {"loss", to_string(options.loss)}});
    }
    throw DivergenceError("training diverged at step " + std::to_string(result.steps) + ": " + why);
  };

  for (int epoch = 1; epoch <= options.epochs && result.steps < total; ++epoch) {
    if (bs < n) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t lo = 0; lo < n && result.steps < total; lo += bs) {
      const std::span<const std::size_t> batch(order.data() + lo, std::min(bs, n - lo));
      LossGradient lg;
      try {
        lg = loss_and_gradient(model, train_set, batch, options.loss, system);
      } catch (const NumericError& e) {
        diverge(e.what());
      }
      if (!std::isfinite(lg.loss)) diverge("non-finite loss");
      std::vector<double> next = flat;
      try {
        adam_step(next, lg.gradient, adam, cosine_lr(options.lr, options.lr_final, result.steps, total));
      } catch (const NumericError& e) {
        diverge(e.what());
      }
      flat = std::move(next);
      model.parameters().assign(flat);
      result.step_losses.push_back(lg.loss);
      epoch_loss += lg.loss;
      ++batches;
      ++result.steps;
    }
    result.history.push_back({epoch, "train", epoch_loss / batches});
    const bool last = result.steps >= total || epoch == options.epochs;
    if (val_set && val_set->size() > 0 && (last || epoch % std::max(1, options.eval_every) == 0)) {
      double v = 0.0;
      try {
        v = evaluate_loss(model, *val_set, options.loss, system);
      } catch (const NumericError& e) {
        diverge(e.what());
      }
      if (!std::isfinite(v)) diverge("non-finite validation loss");
      result.history.push_back({epoch, "val", v});
      if (last) result.final_val_loss = v;
    }
  }
  try {
    result.final_train_loss = evaluate_loss(model, train_set, options.loss, system);
  } catch (const NumericError& e) {
    diverge(e.what());
  }
  result.model = std::move(model);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17) << "epoch,split,loss\n";
  for (const HistoryRow& r : history) out << r.epoch << ',' << r.split << ',' << r.loss << '\n';
}

// ---------------------------------------------------------------------------

ToyMetrics evaluate_toy(const FunctionalModel& model, const ToyDataset& toy) {
  if (toy.samples.empty()) throw ConfigError("evaluate_toy: empty dataset");
  std::vector<Field> fields;
  fields.reserve(toy.samples.size());
  for (const ToySample& s : toy.samples) fields.push_back(s.u);
  const BatchEvaluation e = evaluate_batch(model, fields, toy.grid);
  ToyMetrics m;
  for (std::size_t i = 0; i < toy.samples.size(); ++i) {
    const double d = e.values[i] - toy.samples[i].label;
    m.functional_mse += d * d;
    m.derivative_mse += (e.derivatives[i] - toy.samples[i].derivative).squaredNorm() /
                        static_cast<double>(toy.samples[i].derivative.size());
  }
  m.functional_mse /= static_cast<double>(toy.samples.size());
  m.derivative_mse /= static_cast<double>(toy.samples.size());
  return m;
}

}  // namespace nf
