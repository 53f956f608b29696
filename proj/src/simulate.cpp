#include "nf/simulate.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "nf/errors.hpp"

namespace nf {

Field ab2_step(const Field& u, const Field& f, IntegratorState& state, double dt) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  if (!f.allFinite()) throw NumericError("non-finite tendency at step " + std::to_string(state.step));
  if (f.rows() != u.rows() || f.cols() != u.cols()) throw ShapeError("tendency shape does not match state");
  Field next;
  if (!state.previous) {
    next = u + dt * f;
  } else {
    next = u + dt * (1.5 * f - 0.5 * *state.previous);
  }
  state.previous = f;
  ++state.step;
  return next;
}

TendencyFn model_tendency(const FunctionalModel& model, const PdeSystem& system, const Grid& grid) {
  return [&model, system, grid](const Field& u) {
    BatchEvaluation e = evaluate_batch(model, std::span<const Field>(&u, 1), grid);
    return Tendency{apply_J(system, e.derivatives.front(), u, grid), e.values.front()};
  };
}

TendencyFn analytic_tendency(const PdeSystem& system, const Grid& grid) {
  return [system, grid](const Field& u) {
    return Tendency{apply_J(system, analytic_functional_derivative(system, u, grid), u, grid), std::nullopt};
  };
}

RolloutReport rollout_with(const TendencyFn& tendency, const PdeSystem& system, const Field& u0, int nt, double dt,
                           const Grid& grid, const RolloutOptions& options) {
  if (nt < 1) throw DomainError("rollout needs nt >= 1");
  RolloutReport report;
  report.dt = dt;
  report.states.reserve(static_cast<std::size_t>(nt));
  report.states.push_back(u0);
  report.h_pred.push_back(hamiltonian_value(system, u0, grid));
  report.step_seconds.push_back(0.0);

  IntegratorState integrator;
  Field u = u0;
  for (int t = 1; t < nt; ++t) {
    const auto start = std::chrono::steady_clock::now();
    try {
      Tendency f = tendency(u);
      if (f.model_value) report.h_model.push_back(*f.model_value);
      u = ab2_step(u, f.du_dt, integrator, dt);
    } catch (const NumericError& e) {
      report.diverged = true;
      report.diverged_at = t;
      report.failure = e.what();
      break;
    }
    if (!u.allFinite() || u.cwiseAbs().maxCoeff() > options.divergence_limit) {
      report.diverged = true;
      report.diverged_at = t;
      report.failure = "state exceeded divergence limit";
      break;
    }
    const auto stop = std::chrono::steady_clock::now();
    report.states.push_back(u);
    double h = std::numeric_limits<double>::quiet_NaN();
    try {
      h = hamiltonian_value(system, u, grid);
    } catch (const DomainError&) {
      // unphysical state (e.g. negative depth); keep the step, record NaN
    }
    report.h_pred.push_back(h);
    report.step_seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  return report;
}

RolloutReport rollout(const FunctionalModel& model, const PdeSystem& system, const Field& u0, int nt, double dt,
                      const Grid& grid, const RolloutOptions& options) {
  if (model.spec().channels != system.channels()) {
    throw ConfigError("model has " + std::to_string(model.spec().channels) + " channel(s), " + system.name() +
                      " needs " + std::to_string(system.channels()));
  }
  return rollout_with(model_tendency(model, system, grid), system, u0, nt, dt, grid, options);
}

RolloutReport rollout_oracle(const PdeSystem& system, const Field& u0, int nt, double dt, const Grid& grid,
                             const RolloutOptions& options) {
  return rollout_with(analytic_tendency(system, grid), system, u0, nt, dt, grid, options);
}

// ---------------------------------------------------------------------------

double relative_l2(const Field& pred, const Field& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ShapeError("relative_l2: shape mismatch");
  const double denom = truth.squaredNorm();
  if (denom == 0.0) throw DomainError("relative_l2: reference state has zero norm");
  return (truth - pred).squaredNorm() / denom;
}

namespace {

std::pair<std::size_t, std::size_t> averaging_range(std::size_t n) {
  if (n == 0) throw DomainError("metric over an empty trajectory");
  return n == 1 ? std::pair<std::size_t, std::size_t>{0, 1} : std::pair<std::size_t, std::size_t>{1, n};
}

void check_horizons(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("trajectories have different lengths (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

double rollout_error(std::span<const Field> pred, std::span<const Field> truth) {
  check_horizons(pred.size(), truth.size());
  const auto [lo, hi] = averaging_range(pred.size());
  double total = 0.0;
  for (std::size_t t = lo; t < hi; ++t) {
    try {
      total += relative_l2(pred[t], truth[t]);
    } catch (const DomainError&) {
      throw DomainError("rollout_error undefined: reference state at step " + std::to_string(t) + " has zero norm");
    }
  }
  return total / static_cast<double>(hi - lo);
}

std::optional<double> pearson(const Field& a, const Field& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("pearson: shape mismatch");
  const auto n = static_cast<double>(a.size());
  const double ma = a.sum() / n;
  const double mb = b.sum() / n;
  const Eigen::ArrayXXd da = a.array() - ma;
  const Eigen::ArrayXXd db = b.array() - mb;
  const double va = da.square().sum();
  const double vb = db.square().sum();
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return (da * db).sum() / std::sqrt(va * vb);
}

CorrelationTime correlation_time_details(std::span<const Field> pred, std::span<const Field> truth, double dt,
                                         double threshold) {
  check_horizons(pred.size(), truth.size());
  if (pred.empty()) throw DomainError("correlation_time over an empty trajectory");
  CorrelationTime out;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const auto c = pearson(pred[t], truth[t]);
    if (!c) out.undefined_steps.push_back(static_cast<int>(t));
    if (!c || *c <= threshold) {
      out.first_failure = static_cast<int>(t);
      out.time = t == 0 ? 0.0 : static_cast<double>(t - 1) * dt;
      return out;
    }
  }
  out.time = static_cast<double>(pred.size() - 1) * dt;
  return out;
}

double correlation_time(std::span<const Field> pred, std::span<const Field> truth, double dt, double threshold) {
  return correlation_time_details(pred, truth, dt, threshold).time;
}

double hamiltonian_error_from_series(std::span<const double> h_pred, std::span<const double> h_true) {
  check_horizons(h_pred.size(), h_true.size());
  const auto [lo, hi] = averaging_range(h_pred.size());
  double total = 0.0;
  for (std::size_t t = lo; t < hi; ++t) {
    if (h_true[t] == 0.0) {
      throw DomainError("hamiltonian_error undefined: reference Hamiltonian is zero at step " + std::to_string(t));
    }
    const double d = h_true[t] - h_pred[t];
    total += d * d / (h_true[t] * h_true[t]);
  }
  return total / static_cast<double>(hi - lo);
}

double hamiltonian_error(std::span<const Field> pred, std::span<const Field> truth, const PdeSystem& system,
                         const Grid& grid) {
  check_horizons(pred.size(), truth.size());
  std::vector<double> hp, ht;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    hp.push_back(hamiltonian_value(system, pred[t], grid));
    ht.push_back(hamiltonian_value(system, truth[t], grid));
  }
  return hamiltonian_error_from_series(hp, ht);
}

void compare(RolloutReport& report, std::span<const Field> truth, const PdeSystem& system, const Grid& grid,
             double threshold) {
  const std::size_t n = std::min(report.states.size(), truth.size());
  const std::span<const Field> pred(report.states.data(), n);
  const std::span<const Field> ref(truth.data(), n);
  RolloutComparison c;
  const int channels = n > 0 ? static_cast<int>(ref[0].cols()) : 0;
  c.correlation_per_channel.resize(static_cast<std::size_t>(channels));
  for (std::size_t t = 0; t < n; ++t) {
    c.time.push_back(static_cast<double>(t) * report.dt);
    c.rel_l2.push_back(relative_l2(pred[t], ref[t]));
    const auto r = pearson(pred[t], ref[t]);
    c.correlation.push_back(r.value_or(std::numeric_limits<double>::quiet_NaN()));
    for (int ch = 0; ch < channels; ++ch) {
      const auto rc = pearson(pred[t].col(ch), ref[t].col(ch));
      c.correlation_per_channel[static_cast<std::size_t>(ch)].push_back(
          rc.value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    c.h_pred.push_back(report.h_pred[t]);
    c.h_true.push_back(hamiltonian_value(system, ref[t], grid));
  }
  c.rollout_error = rollout_error(pred, ref);
  const CorrelationTime ct = correlation_time_details(pred, ref, report.dt, threshold);
  c.correlation_time = ct.time;
  c.undefined_correlation_steps = ct.undefined_steps;
  c.hamiltonian_error = hamiltonian_error_from_series(c.h_pred, c.h_true);
  report.comparison = std::move(c);
}

nlohmann::json report_summary(const RolloutReport& report) {
  nlohmann::json j;
  j["steps"] = report.states.size();
  j["dt"] = report.dt;
  j["diverged"] = report.diverged;
  if (report.diverged) {
    j["diverged_at"] = report.diverged_at;
    j["failure"] = report.failure;
  }
  double total = 0.0;
  for (double s : report.step_seconds) total += s;
  j["mean_step_seconds"] = report.states.size() > 1 ? total / static_cast<double>(report.states.size() - 1) : 0.0;
  if (report.comparison) {
    const auto& c = *report.comparison;
    j["rollout_error"] = c.rollout_error;
    j["correlation_time"] = c.correlation_time;
    j["hamiltonian_error"] = c.hamiltonian_error;
    j["undefined_correlation_steps"] = c.undefined_correlation_steps;
  }
  return j;
}

void write_series_csv(const RolloutReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "t,rel_l2,correlation,h_pred,h_true\n";
  const std::size_t n = report.states.size();
  for (std::size_t t = 0; t < n; ++t) {
    out << static_cast<double>(t) * report.dt << ',';
    if (report.comparison && t < report.comparison->time.size()) {
      const auto& c = *report.comparison;
      out << c.rel_l2[t] << ',' << c.correlation[t] << ',' << c.h_pred[t] << ',' << c.h_true[t] << '\n';
    } else {
      out << ",," << report.h_pred[t] << ",\n";
    }
  }
}

}  // namespace nf
