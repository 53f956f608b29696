#pragma once

// Time stepping (Euler bootstrap then two-step Adams-Bashforth), rollouts
// through a learned or analytic functional derivative, and the rollout
// metrics: relative L2, Pearson correlation time and Hamiltonian error.

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nf/functional.hpp"
#include "nf/pde.hpp"
#include "nf/trajectory.hpp"

namespace nf {

/// Cached tendency from the previous step; empty exactly at step 0.
struct IntegratorState {
  std::optional<Field> previous;
  int step = 0;
};

/// One step: Euler when no tendency is cached, otherwise
/// u + dt (3/2 f_t - 1/2 f_{t-1}). Updates the cache.
Field ab2_step(const Field& u, const Field& f, IntegratorState& state, double dt);

/// du/dt for a state plus, optionally, the learned functional value there.
struct Tendency {
  Field du_dt;
  std::optional<double> model_value;
};
using TendencyFn = std::function<Tendency(const Field& state)>;

struct RolloutOptions {
  double divergence_limit = 1e6;
};

/// Per-step comparison against a reference trajectory.
struct RolloutComparison {
  std::vector<double> time;
  std::vector<double> rel_l2;
  std::vector<double> correlation;  // NaN where undefined
  std::vector<std::vector<double>> correlation_per_channel;
  std::vector<double> h_pred;
  std::vector<double> h_true;
  double rollout_error = 0.0;
  double correlation_time = 0.0;
  double hamiltonian_error = 0.0;
  std::vector<int> undefined_correlation_steps;
};

struct RolloutReport {
  std::vector<Field> states;  // states[0] = u0
  double dt = 0.0;
  std::vector<double> h_pred;   // analytic Hamiltonian of predictions
  std::vector<double> h_model;  // learned functional, when a model drives the rollout
  std::vector<double> step_seconds;
  bool diverged = false;
  int diverged_at = -1;
  std::string failure;
  std::optional<RolloutComparison> comparison;
};

RolloutReport rollout_with(const TendencyFn& tendency, const PdeSystem& system, const Field& u0, int nt, double dt,
                           const Grid& grid, const RolloutOptions& options = {});

/// Learned pipeline: H_theta -> autodiff dH/du (de-weighted) -> J -> AB2.
RolloutReport rollout(const FunctionalModel& model, const PdeSystem& system, const Field& u0, int nt, double dt,
                      const Grid& grid, const RolloutOptions& options = {});

/// Same pipeline with the analytic dH/du in place of the model.
RolloutReport rollout_oracle(const PdeSystem& system, const Field& u0, int nt, double dt, const Grid& grid,
                             const RolloutOptions& options = {});

TendencyFn model_tendency(const FunctionalModel& model, const PdeSystem& system, const Grid& grid);
TendencyFn analytic_tendency(const PdeSystem& system, const Grid& grid);

// ---------------------------------------------------------------------------
// Metrics. Index 0 of a trajectory is the shared initial condition; the
// time averages run over steps 1..T (all steps when only one is given).

/// ||truth - pred||^2 / ||truth||^2 over all points and channels.
double relative_l2(const Field& pred, const Field& truth);
double rollout_error(std::span<const Field> pred, std::span<const Field> truth);

/// Pearson correlation of the flattened fields; nullopt if either is constant.
std::optional<double> pearson(const Field& a, const Field& b);

struct CorrelationTime {
  double time = 0.0;
  int first_failure = -1;  // -1: never dropped to the threshold
  std::vector<int> undefined_steps;
};

/// Time of the last step before the first one whose correlation is at or
/// below `threshold` (undefined correlation counts as a drop); the full
/// horizon (nt - 1) * dt if that never happens.
CorrelationTime correlation_time_details(std::span<const Field> pred, std::span<const Field> truth, double dt,
                                         double threshold = 0.8);
double correlation_time(std::span<const Field> pred, std::span<const Field> truth, double dt, double threshold = 0.8);

/// Mean relative squared error of the analytic Hamiltonian.
double hamiltonian_error(std::span<const Field> pred, std::span<const Field> truth, const PdeSystem& system,
                         const Grid& grid);
double hamiltonian_error_from_series(std::span<const double> h_pred, std::span<const double> h_true);

/// Fills report.comparison against `truth` over the common horizon.
void compare(RolloutReport& report, std::span<const Field> truth, const PdeSystem& system, const Grid& grid,
             double threshold = 0.8);

nlohmann::json report_summary(const RolloutReport& report);
/// CSV columns: t, rel_l2, correlation, h_pred, h_true.
void write_series_csv(const RolloutReport& report, const std::filesystem::path& path);

}  // namespace nf
