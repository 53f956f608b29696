#include "nf/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nf/checkpoint.hpp"
#include "nf/data.hpp"
#include "nf/errors.hpp"
#include "nf/simulate.hpp"
#include "nf/training.hpp"

namespace nf::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

/// Reads keys from a JSON object and rejects any it was not asked about.
class ConfigReader {
 public:
  ConfigReader(json j, std::string where) : j_(std::move(j)), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return convert<T>(key);
  }

  ConfigReader child(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return ConfigReader(j_[key], where_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

  [[nodiscard]] const json& raw() const { return j_; }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  json j_;
  std::string where_;
  std::set<std::string> used_;
};

std::pair<double, double> read_range(ConfigReader& r, const std::string& key, std::pair<double, double> fallback) {
  const auto v = r.get<std::vector<double>>(key, {fallback.first, fallback.second});
  if (v.size() != 2) throw ConfigError(key + ": expected [lo, hi]");
  return {v[0], v[1]};
}

fs::path resolve(const std::string& p) { return fs::absolute(fs::path(p)).lexically_normal(); }

PdeSystem system_for(const DatasetManifest& m, const std::string& override_name = {}) {
  PdeSystem s = PdeSystem::from_name(override_name.empty() ? m.pde : override_name);
  s.gravity = m.gravity;
  return s;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------

void summarize(const Dataset& ds, const fs::path& out, std::ostream& os) {
  const DatasetManifest& m = ds.manifest;
  os << "wrote " << m.pde << " dataset to " << out.string() << ": n_samples=" << m.n_samples << " nt=" << m.nt
     << " nx=" << m.nx;
  if (m.ny > 1) os << " ny=" << m.ny;
  os << " channels=" << m.channels << " seed=" << m.seed << "\n";
}

int cmd_gen(const std::string& kind, const fs::path& config_path, const fs::path& out, std::ostream& os) {
  ConfigReader r(load_json(config_path), config_path.filename().string());
  if (kind == "toy") {
    ToyConfig c;
    c.degree = r.get("degree", c.degree);
    std::tie(c.coeff_lo, c.coeff_hi) = read_range(r, "coeff_range", {c.coeff_lo, c.coeff_hi});
    c.points = r.get("points", c.points);
    std::tie(c.x_lo, c.x_hi) = read_range(r, "domain", {c.x_lo, c.x_hi});
    c.samples = r.get("samples", c.samples);
    c.functional = toy_functional_from_string(r.get<std::string>("functional", "linear"));
    c.seed = r.get("seed", c.seed);
    const std::string variant = r.get<std::string>("variant", "base");
    r.finish();
    c.validate();
    ToyDataset toy;
    if (variant == "base") {
      toy = gen_toy_dataset(c);
    } else if (variant == "ood" || variant == "disc") {
      ToyVariants v = gen_ood_variants(c, c.samples, c.seed);
      toy = variant == "ood" ? std::move(v.ood) : std::move(v.disc);
    } else {
      throw ConfigError("variant: expected base, ood or disc, got '" + variant + "'");
    }
    const Dataset ds = to_dataset(toy);
    write_dataset(ds, out);
    summarize(ds, out, os);
    return kOk;
  }
  if (kind == "advection") {
    AdvectionConfig c;
    c.length = r.get("length", c.length);
    c.nx = r.get("nx", c.nx);
    c.modes = r.get("modes", c.modes);
    c.amplitude = r.get("amplitude", c.amplitude);
    c.max_wavenumber = r.get("max_wavenumber", c.max_wavenumber);
    c.nt = r.get("nt", c.nt);
    c.t_end = r.get("t_end", c.t_end);
    c.samples = r.get("samples", c.samples);
    c.seed = r.get("seed", c.seed);
    r.finish();
    const Dataset ds = to_dataset(gen_advection_dataset(c));
    write_dataset(ds, out);
    summarize(ds, out, os);
    return kOk;
  }
  throw ConfigError("gen: unknown dataset kind '" + kind + "' (expected toy or advection)");
}

// ---------------------------------------------------------------------------

int cmd_train(const fs::path& config_path, std::ostream& os) {
  ConfigReader r(load_json(config_path), config_path.filename().string());
  const fs::path dataset_path = resolve(r.require<std::string>("dataset"));
  const std::string val_name = r.get<std::string>("val_dataset", "");
  const std::optional<fs::path> val_path = val_name.empty() ? std::nullopt : std::optional(resolve(val_name));
  const fs::path checkpoint = resolve(r.require<std::string>("checkpoint"));
  const fs::path history = resolve(r.get<std::string>("history", (checkpoint / "history.csv").string()));
  const std::string pde_name = r.get<std::string>("pde", "");

  TrainOptions opt;
  opt.loss = loss_mode_from_string(r.get<std::string>("loss", "functional"));
  opt.lr = r.get("lr", opt.lr);
  opt.lr_final = r.get("lr_final", opt.lr_final);
  opt.batch_size = r.get("batch_size", opt.batch_size);
  opt.epochs = r.get("epochs", opt.epochs);
  opt.max_steps = r.get("max_steps", opt.max_steps);
  opt.eval_every = r.get("eval_every", opt.eval_every);
  opt.seed = r.get("seed", opt.seed);
  const int time_stride = r.get("time_stride", 1);

  ConfigReader mr = r.child("model");
  ModelSpec spec;
  spec.kind = model_kind_from_string(mr.require<std::string>("kernel_type"));
  spec.width = mr.get("width", spec.width);
  spec.depth = mr.get("depth", spec.depth);
  spec.omega0 = mr.get("omega0", spec.omega0);
  spec.conv_size = mr.get("conv_size", spec.conv_size);
  spec.seed = mr.get("seed", opt.seed);
  mr.finish();
  r.finish();
  if (spec.width < 1 || spec.depth < 1) throw ConfigError("model: width and depth must be >= 1");

  if (!fs::exists(dataset_path / "manifest.json")) throw IoError("dataset not found: " + dataset_path.string());
  if (val_path && !fs::exists(*val_path / "manifest.json")) throw IoError("dataset not found: " + val_path->string());

  const Dataset data = read_dataset(dataset_path);
  const bool toy = data.manifest.pde == "toy";
  const PdeSystem system = toy ? PdeSystem::advection() : system_for(data.manifest, pde_name);
  const PdeSystem* sys = toy ? nullptr : &system;
  const TrainingSet train_set = training_set(data, system, opt.loss, time_stride);
  std::optional<TrainingSet> val_set;
  if (val_path) val_set = training_set(read_dataset(*val_path), system, opt.loss, time_stride);

  spec.dims = train_set.grid.dims();
  spec.channels = toy ? 1 : data.manifest.channels;
  spec.input_points = train_set.grid.points();
  spec.normalize_to(train_set.grid);
  opt.checkpoint = checkpoint;

  TrainResult result = train(FunctionalModel::create(spec), train_set, val_set ? &*val_set : nullptr, opt, sys);

  json meta = {{"config", r.raw()},
               {"seed", opt.seed},
               {"steps", result.steps},
               {"final_train_loss", result.final_train_loss},
               {"dataset", dataset_path.string()}};
  if (result.final_val_loss) meta["final_val_loss"] = *result.final_val_loss;
  save_checkpoint(result.model, checkpoint, meta);
  if (history.has_parent_path()) ensure_dir(history.parent_path());
  write_history_csv(result.history, history);

  os << std::setprecision(6) << "trained " << to_string(spec.kind) << " (" << result.model.parameters().scalar_count()
     << " parameters) for " << result.steps << " steps in " << result.seconds << " s; train loss "
     << result.final_train_loss;
  if (result.final_val_loss) os << ", val loss " << *result.final_val_loss;
  os << "\ncheckpoint: " << checkpoint.string() << "\nhistory: " << history.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

void check_compatible(const FunctionalModel& model, const DatasetManifest& m) {
  const ModelSpec& s = model.spec();
  if (s.channels != m.channels || s.dims != m.dims()) {
    throw ShapeError("checkpoint expects channels=" + std::to_string(s.channels) + " dims=" + std::to_string(s.dims) +
                     "; dataset has channels=" + std::to_string(m.channels) + " dims=" + std::to_string(m.dims()));
  }
}

std::string sample_name(std::size_t i) {
  std::ostringstream s;
  s << "sample_" << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

struct EvalOptions {
  bool oracle = false;
  bool self_check = false;
  int samples = 0;  // 0: all
  int steps = 0;    // 0: dataset nt
  double threshold = 0.8;
};

int cmd_eval_toy(const fs::path& checkpoint, const Dataset& data, const fs::path& out, std::ostream& os) {
  const FunctionalModel model = load_checkpoint(checkpoint);
  const ToyMetrics m = evaluate_toy(model, to_toy(data));
  ensure_dir(out);
  write_json({{"functional_mse", m.functional_mse}, {"derivative_mse", m.derivative_mse},
              {"n_samples", data.manifest.n_samples}},
             out / "metrics.json");
  os << std::setprecision(6) << "functional MSE " << m.functional_mse << ", derivative MSE " << m.derivative_mse << "\n";
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out, const EvalOptions& opt,
             std::ostream& os) {
  if (!fs::exists(dataset / "manifest.json")) throw IoError("dataset not found: " + dataset.string());
  const Dataset data = read_dataset(dataset);
  if (data.manifest.pde == "toy") {
    if (opt.oracle || opt.self_check) throw ConfigError("--oracle/--self-check apply to PDE datasets only");
    return cmd_eval_toy(checkpoint, data, out, os);
  }
  const PdeSystem system = system_for(data.manifest);
  const Grid grid = data.manifest.grid();
  std::optional<FunctionalModel> model;
  if (!opt.oracle && !opt.self_check) {
    model = load_checkpoint(checkpoint);
    check_compatible(*model, data.manifest);
  }
  const std::size_t n = opt.samples > 0 ? std::min<std::size_t>(opt.samples, data.samples.size()) : data.samples.size();
  const int nt = opt.steps > 0 ? std::min(opt.steps, data.manifest.nt) : data.manifest.nt;
  ensure_dir(out);

  json per_sample = json::array();
  double err = 0.0, ct = 0.0, herr = 0.0;
  int diverged = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& truth = data.samples[i];
    const std::span<const Field> ref(truth.states.data(), static_cast<std::size_t>(nt));
    RolloutReport report;
    if (opt.self_check) {
      report.dt = truth.dt;
      for (const Field& s : ref) {
        report.states.push_back(s);
        report.h_pred.push_back(hamiltonian_value(system, s, grid));
        report.step_seconds.push_back(0.0);
      }
    } else if (opt.oracle) {
      report = rollout_oracle(system, truth.states[0], nt, truth.dt, grid);
    } else {
      report = rollout(*model, system, truth.states[0], nt, truth.dt, grid);
    }
    compare(report, ref, system, grid, opt.threshold);
    write_series_csv(report, out / (sample_name(i) + ".csv"));
    json s = report_summary(report);
    s["sample"] = i;
    per_sample.push_back(s);
    const auto& c = *report.comparison;
    err += c.rollout_error;
    ct += c.correlation_time;
    herr += c.hamiltonian_error;
    diverged += report.diverged ? 1 : 0;
  }
  const double dn = static_cast<double>(std::max<std::size_t>(n, 1));
  json metrics = {{"mode", opt.self_check ? "self_check" : opt.oracle ? "oracle" : "model"},
                  {"pde", data.manifest.pde},
                  {"n_samples", n},
                  {"nt", nt},
                  {"dt", data.manifest.dt},
                  {"rollout_error", err / dn},
                  {"correlation_time", ct / dn},
                  {"hamiltonian_error", herr / dn},
                  {"diverged_samples", diverged},
                  {"samples", per_sample}};
  write_json(metrics, out / "metrics.json");
  os << std::setprecision(6) << "evaluated " << n << " sample(s): rollout_error " << err / dn << ", correlation_time "
     << ct / dn << ", hamiltonian_error " << herr / dn << "\n";
  return kOk;
}

int cmd_rollout(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out, int sample, int steps,
                bool oracle, std::ostream& os) {
  if (!fs::exists(dataset / "manifest.json")) throw IoError("dataset not found: " + dataset.string());
  const Dataset data = read_dataset(dataset);
  if (data.manifest.pde == "toy") throw ConfigError("rollout needs a PDE dataset");
  if (sample < 0 || sample >= data.manifest.n_samples) {
    throw ConfigError("sample: index " + std::to_string(sample) + " out of range [0, " +
                      std::to_string(data.manifest.n_samples) + ")");
  }
  const PdeSystem system = system_for(data.manifest);
  const Grid grid = data.manifest.grid();
  const Trajectory& truth = data.samples[static_cast<std::size_t>(sample)];
  const int nt = steps > 0 ? steps : data.manifest.nt;
  RolloutReport report;
  if (oracle) {
    report = rollout_oracle(system, truth.states[0], nt, truth.dt, grid);
  } else {
    const FunctionalModel model = load_checkpoint(checkpoint);
    check_compatible(model, data.manifest);
    report = rollout(model, system, truth.states[0], nt, truth.dt, grid);
  }
  const std::size_t common = std::min<std::size_t>(report.states.size(), truth.states.size());
  compare(report, std::span<const Field>(truth.states.data(), common), system, grid);

  Dataset pred;
  pred.manifest = data.manifest;
  pred.manifest.n_samples = 1;
  pred.manifest.nt = static_cast<int>(report.states.size());
  pred.manifest.extra = {{"source_dataset", dataset.string()}, {"source_sample", sample}, {"oracle", oracle}};
  Trajectory traj;
  traj.dt = truth.dt;
  traj.grid = grid;
  traj.states = report.states;
  pred.samples.push_back(std::move(traj));
  write_dataset(pred, out);
  write_series_csv(report, out / "series.csv");
  write_json(report_summary(report), out / "summary.json");
  os << "rolled out " << report.states.size() << " steps" << (report.diverged ? " (diverged)" : "") << " to "
     << out.string() << "\n";
  return report.diverged ? kDivergence : kOk;
}

int cmd_inspect(const fs::path& path, std::ostream& os) {
  if (fs::exists(path / "model.json")) {
    os << read_checkpoint_descriptor(path).dump(2) << "\n";
    return kOk;
  }
  os << read_manifest(path).to_json().dump(2) << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural functional training, rollout and evaluation"};
  app.require_subcommand(1);

  std::string gen_kind, config, out_dir, checkpoint, dataset, inspect_path;
  auto* gen = app.add_subcommand("gen", "generate a dataset (toy | advection)");
  gen->add_option("kind", gen_kind, "dataset kind")->required()->check(CLI::IsMember({"toy", "advection"}));
  gen->add_option("--config", config, "JSON config")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
  train_cmd->add_option("--config", config, "JSON config")->required();

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "roll out every sample and write metrics");
  eval->add_option("checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("dataset", dataset, "dataset directory")->required();
  eval->add_option("out", out_dir, "output directory")->required();
  eval->add_flag("--oracle", eval_opt.oracle, "use the analytic functional derivative");
  eval->add_flag("--self-check", eval_opt.self_check, "use the reference trajectory as the prediction");
  eval->add_option("--samples", eval_opt.samples, "limit the number of samples");
  eval->add_option("--steps", eval_opt.steps, "limit the horizon");
  eval->add_option("--threshold", eval_opt.threshold, "correlation threshold");

  int sample = 0, steps = 0;
  bool oracle = false;
  auto* roll = app.add_subcommand("rollout", "roll out one sample and write the predicted trajectory");
  roll->add_option("checkpoint", checkpoint, "checkpoint directory")->required();
  roll->add_option("dataset", dataset, "dataset directory")->required();
  roll->add_option("out", out_dir, "output directory")->required();
  roll->add_option("--sample", sample, "sample index");
  roll->add_option("--steps", steps, "number of states including the initial one");
  roll->add_flag("--oracle", oracle, "use the analytic functional derivative");

  auto* inspect = app.add_subcommand("inspect", "print a dataset manifest or checkpoint descriptor");
  inspect->add_option("path", inspect_path, "dataset or checkpoint directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_kind, resolve(config), resolve(out_dir), out);
    if (*train_cmd) return cmd_train(resolve(config), out);
    if (*eval) return cmd_eval(resolve(checkpoint), resolve(dataset), resolve(out_dir), eval_opt, out);
    if (*roll) return cmd_rollout(resolve(checkpoint), resolve(dataset), resolve(out_dir), sample, steps, oracle, out);
    if (*inspect) return cmd_inspect(resolve(inspect_path), out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    err << "incompatible inputs: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kDivergence;
  }
  return kUsage;
}

}  // namespace nf::cli
