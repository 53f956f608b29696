// Acceptance runner: one PASS/FAIL/SKIPPED line per criterion, each at its
// stated tolerance. Exit status is 0 once every criterion has been evaluated;
// with --strict it is 1 if any criterion failed.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "nf/data.hpp"
#include "nf/functional.hpp"
#include "nf/pde.hpp"
#include "nf/simulate.hpp"
#include "nf/training.hpp"
#include "properties.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Outcome { Pass, Fail, Skipped };

struct Line {
  std::string name;
  Outcome outcome;
  double measured;
  std::string bound;
  std::string note;
};

class Report {
 public:
  void add(std::string name, bool pass, double measured, std::string bound, std::string note = {}) {
    emit({std::move(name), pass ? Outcome::Pass : Outcome::Fail, measured, std::move(bound), std::move(note)});
  }
  void skip(std::string name, std::string note) { emit({std::move(name), Outcome::Skipped, NAN, "-", std::move(note)}); }

  [[nodiscard]] int count(Outcome o) const {
    return static_cast<int>(std::count_if(lines_.begin(), lines_.end(), [o](const Line& l) { return l.outcome == o; }));
  }

  [[nodiscard]] json to_json() const {
    json out = json::array();
    for (const Line& l : lines_) {
      out.push_back({{"criterion", l.name},
                     {"outcome", l.outcome == Outcome::Pass ? "PASS" : l.outcome == Outcome::Fail ? "FAIL" : "SKIPPED"},
                     {"measured", std::isfinite(l.measured) ? json(l.measured) : json(nullptr)},
                     {"bound", l.bound},
                     {"note", l.note}});
    }
    return out;
  }

 private:
  void emit(Line line) {
    const char* tag = line.outcome == Outcome::Pass ? "PASS" : line.outcome == Outcome::Fail ? "FAIL" : "SKIPPED";
    std::printf("%-7s %-44s measured=%-12.4g bound=%s", tag, line.name.c_str(), line.measured, line.bound.c_str());
    if (!line.note.empty()) std::printf("  (%s)", line.note.c_str());
    std::printf("\n");
    std::fflush(stdout);
    lines_.push_back(std::move(line));
  }

  std::vector<Line> lines_;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

nf::ModelSpec toy_spec(nf::ModelKind kind, int width, const nf::Grid& grid) {
  nf::ModelSpec spec;
  spec.kind = kind;
  spec.width = width;
  spec.depth = 2;
  spec.seed = 0;
  if (kind == nf::ModelKind::BaselineMlp) spec.input_points = grid.points();
  spec.normalize_to(grid);
  return spec;
}

nf::TrainResult train_toy(const nf::ModelSpec& spec, const nf::ToyDataset& train, const nf::ToyDataset& val,
                          double lr_final) {
  nf::TrainOptions opt;
  opt.loss = nf::LossMode::Scalar;
  opt.lr = 1e-3;
  opt.lr_final = lr_final;
  opt.batch_size = 0;
  opt.epochs = 2000;
  opt.eval_every = 500;
  opt.seed = 0;
  const nf::TrainingSet ts = nf::training_set(train, opt.loss);
  const nf::TrainingSet vs = nf::training_set(val, opt.loss);
  return nf::train(nf::FunctionalModel::create(spec), ts, &vs, opt);
}

nf::ToyConfig toy_config(nf::ToyFunctional f, int samples, std::uint64_t seed) {
  nf::ToyConfig c;
  c.functional = f;
  c.samples = samples;
  c.seed = seed;
  return c;
}

void toy_linear(Report& r) {
  const nf::ToyConfig base = toy_config(nf::ToyFunctional::Linear, 100, 0);
  const nf::ToyDataset train = nf::gen_toy_dataset(base);
  const nf::ToyDataset val = nf::gen_toy_dataset(toy_config(nf::ToyFunctional::Linear, 10, 1));
  const nf::ToyVariants variants = nf::gen_ood_variants(base, 10, 1);

  const nf::ModelSpec spec = toy_spec(nf::ModelKind::MlpLinear, 64, train.grid);
  const nf::TrainResult res = train_toy(spec, train, val, 1e-6);
  const nf::ToyMetrics m = nf::evaluate_toy(res.model, val);
  const nf::ToyMetrics ood = nf::evaluate_toy(res.model, variants.ood);
  const nf::ToyMetrics disc = nf::evaluate_toy(res.model, variants.disc);
  const std::string params = std::to_string(res.model.parameters().scalar_count()) + " params";

  r.add("toy_linear.base_functional_mse", m.functional_mse < 1e-10, m.functional_mse, "< 1e-10", params);
  r.add("toy_linear.base_derivative_mse", m.derivative_mse < 5e-3, m.derivative_mse, "< 5e-3");
  r.add("toy_linear.ood_derivative_mse", ood.derivative_mse < 5e-3, ood.derivative_mse, "< 5e-3");
  r.add("toy_linear.disc_functional_mse", disc.functional_mse < 1.0, disc.functional_mse, "< 1.0",
        "x in [-2, 2], kernel extrapolated outside the training domain");
  r.add("toy_linear.runtime_seconds", res.seconds < 120.0, res.seconds, "< 120",
        std::to_string(res.steps) + " full-batch steps");

  // Smoke criterion: median over 5 model seeds of the first 100 losses at a constant lr of 1e-3.
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    nf::ModelSpec s = spec;
    s.seed = seed;
    nf::TrainOptions opt;
    opt.loss = nf::LossMode::Scalar;
    opt.lr = 1e-3;
    opt.lr_final = 1e-3;
    opt.batch_size = 0;
    opt.epochs = 100;
    opt.seed = seed;
    curves.push_back(nf::train(nf::FunctionalModel::create(s), nf::training_set(train, opt.loss), nullptr, opt).step_losses);
  }
  int increases = 0, first = -1;
  double prev = 0.0;
  for (std::size_t step = 0; step < 100; ++step) {
    std::vector<double> v;
    for (const auto& c : curves) v.push_back(c[step]);
    std::nth_element(v.begin(), v.begin() + 2, v.end());
    if (step > 0 && v[2] > prev) {
      ++increases;
      if (first < 0) first = static_cast<int>(step);
    }
    prev = v[2];
  }
  r.add("toy_linear.monotone_first_100_steps", increases == 0, increases, "0 increases",
        first < 0 ? "median of 5 seeds" : "median of 5 seeds, first increase at step " + std::to_string(first));
}

void toy_nonlinear(Report& r) {
  const nf::ToyConfig base = toy_config(nf::ToyFunctional::Nonlinear, 100, 0);
  const nf::ToyDataset train = nf::gen_toy_dataset(base);
  const nf::ToyDataset val = nf::gen_toy_dataset(toy_config(nf::ToyFunctional::Nonlinear, 10, 1));

  const nf::TrainResult nf_res = train_toy(toy_spec(nf::ModelKind::MlpNonlinear, 32, train.grid), train, val, 1e-5);
  const nf::ToyMetrics m = nf::evaluate_toy(nf_res.model, val);
  const nf::TrainResult base_res = train_toy(toy_spec(nf::ModelKind::BaselineMlp, 32, train.grid), train, val, 1e-5);
  const nf::ToyMetrics b = nf::evaluate_toy(base_res.model, val);
  const double ratio = b.derivative_mse / m.derivative_mse;

  r.add("toy_nonlinear.base_functional_mse", m.functional_mse < 0.01, m.functional_mse, "< 0.01",
        std::to_string(nf_res.model.parameters().scalar_count()) + " params, " +
            std::to_string(static_cast<int>(nf_res.seconds)) + " s");
  r.add("toy_nonlinear.base_derivative_mse", m.derivative_mse < 0.5, m.derivative_mse, "< 0.5");
  r.add("toy_nonlinear.baseline_derivative_ratio", ratio >= 5.0, ratio, ">= 5",
        "baseline derivative mse " + sci(b.derivative_mse));
}

void advection(Report& r, const fs::path& work) {
  nf::AdvectionConfig tc;
  tc.samples = 64;
  tc.nt = 200;
  tc.t_end = 4.0;
  tc.seed = 0;
  nf::AdvectionConfig vc = tc;
  vc.samples = 8;
  vc.nt = 1000;
  vc.t_end = 20.0;
  vc.seed = 100;
  const nf::PdeSystem system = nf::PdeSystem::advection();
  const nf::Dataset train_ds = nf::to_dataset(nf::gen_advection_dataset(tc));
  const nf::Dataset val_ds = nf::to_dataset(nf::gen_advection_dataset(vc));
  const nf::Grid grid = train_ds.manifest.grid();

  nf::ModelSpec spec;
  spec.kind = nf::ModelKind::SirenFilmLocal;
  spec.width = 32;
  spec.depth = 2;
  spec.omega0 = 30.0;
  spec.seed = 0;
  spec.normalize_to(grid);

  nf::TrainOptions opt;
  opt.loss = nf::LossMode::Functional;
  opt.batch_size = 32;
  opt.epochs = 100;
  opt.max_steps = 2000;
  opt.eval_every = 100;
  opt.seed = 0;
  opt.checkpoint = work / "advection_checkpoint";
  const nf::TrainingSet ts = nf::training_set(train_ds, system, opt.loss);
  const nf::TrainResult res = nf::train(nf::FunctionalModel::create(spec), ts, nullptr, opt, &system);

  double rollout_sum = 0.0, h_sum = 0.0, h_drift = 0.0;
  for (const nf::Trajectory& truth : val_ds.samples) {
    nf::RolloutReport rep = nf::rollout(res.model, system, truth.states.front(), truth.steps(), truth.dt, grid);
    nf::compare(rep, truth.states, system, grid);
    rollout_sum += rep.comparison->rollout_error;
    h_sum += rep.comparison->hamiltonian_error;
    const double h0 = rep.comparison->h_true.front();
    for (double h : rep.h_pred) h_drift = std::max(h_drift, std::abs(h - h0) / std::abs(h0));
    if (rep.diverged) h_drift = INFINITY;
  }
  const double n = static_cast<double>(val_ds.samples.size());
  const std::string budget = std::to_string(res.steps) + " steps, " + std::to_string(static_cast<int>(res.seconds)) +
                             " s, train loss " + sci(res.final_train_loss);
  r.add("advection.rollout_error", rollout_sum / n < 0.05, rollout_sum / n, "< 0.05", budget);
  r.add("advection.hamiltonian_error", h_sum / n < 0.01, h_sum / n, "< 0.01");
  r.add("advection.h_flat_max_rel_drift", h_drift <= 0.02, h_drift, "<= 0.02", "over t in [0, 20]");
  const nf::TrainingSet vs = nf::training_set(val_ds, system, nf::LossMode::Functional);
  const double val_loss = nf::evaluate_loss(res.model, vs, nf::LossMode::Functional, &system);
  r.add("advection.val_functional_loss", val_loss < 1e-4, val_loss, "< 1e-4", "labels -u over t in [0, 20]");
}

void oracle_rollout(Report& r) {
  const double length = 16.0, dt = 0.02;
  const nf::Grid grid = nf::Grid::line(128, 0.0, length, true);
  nf::SineSeries ic;
  ic.amplitude = {1.0};
  ic.wavenumber = {1};
  ic.phase = {0.0};
  ic.length = length;
  const int steps = static_cast<int>(std::lround(4.0 / dt));
  const nf::RolloutReport rep =
      nf::rollout_oracle(nf::PdeSystem::advection(), nf::advect_exact(ic, grid, 0.0), steps + 1, dt, grid);
  // Reference: sin(2 pi (x - t) / L) evaluated directly.
  nf::Field exact(grid.points(), 1);
  for (int i = 0; i < grid.points(); ++i) exact(i, 0) = std::sin(2.0 * std::numbers::pi * (grid.x(i) - 4.0) / length);
  const double rel = (rep.states.back() - exact).norm() / exact.norm();
  r.add("oracle_rollout.advection_rel_l2_t4", rel < 0.01, rel, "< 0.01", "||e|| / ||u||, n=128, dt=0.02");
}

void properties(Report& r) {
  const std::vector<std::pair<std::string, std::function<props::Result()>>> suites = {
      {"properties.autodiff_vs_fd", [] { return props::autodiff_vs_fd(100); }},
      {"properties.trapezoid_order", props::trapezoid_order},
      {"properties.ab2_order", props::ab2_order},
      {"properties.fd_stencils", props::fd_stencils},
      {"properties.deweighted_identity", props::deweighted_identity},
      {"properties.directional_derivative", [] { return props::directional_derivative(10); }},
      {"properties.richardson_t2", props::richardson_t2},
      {"properties.savitzky_golay_polynomials", props::savitzky_golay_polynomials},
      {"properties.dataset_round_trip", props::dataset_round_trip},
  };
  for (const auto& [name, fn] : suites) {
    const props::Result res = fn();
    char bound[32] = "exact";
    if (res.bound > 0.0) std::snprintf(bound, sizeof bound, "<= %g", res.bound);
    r.add(name, res.pass, res.measured, bound, res.detail);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "nf_acceptance").string();
  std::vector<std::string> only;
  bool strict = false;
  app.add_option("--work-dir", work, "scratch directory for checkpoints and results");
  app.add_option("--only", only, "groups to run: properties, oracle, toy_linear, toy_nonlinear, advection, kdv")
      ->delimiter(',');
  app.add_flag("--strict", strict, "exit 1 if any criterion fails");
  CLI11_PARSE(app, argc, argv);

  auto selected = [&](const std::string& g) { return only.empty() || std::find(only.begin(), only.end(), g) != only.end(); };
  fs::create_directories(work);
  Report report;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (selected("properties")) properties(report);
    if (selected("oracle")) oracle_rollout(report);
    if (selected("toy_linear")) toy_linear(report);
    if (selected("toy_nonlinear")) toy_nonlinear(report);
    if (selected("advection")) advection(report, work);
    if (selected("kdv")) report.skip("kdv.correlation_time", "needs KdV trajectories from the external solver");
  } catch (const std::exception& e) {
    std::cerr << "acceptance run aborted: " << e.what() << "\n";
    return 2;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream(fs::path(work) / "acceptance.json") << report.to_json().dump(2) << "\n";
  std::printf("SUMMARY %d PASS, %d FAIL, %d SKIPPED in %.0f s\n", report.count(Outcome::Pass), report.count(Outcome::Fail),
              report.count(Outcome::Skipped), seconds);
  return strict && report.count(Outcome::Fail) > 0 ? 1 : 0;
}
