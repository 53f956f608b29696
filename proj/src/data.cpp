#include "nf/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "nf/checkpoint.hpp"
#include "nf/errors.hpp"

namespace nf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ToyFunctional f) { return f == ToyFunctional::Linear ? "linear" : "nonlinear"; }

ToyFunctional toy_functional_from_string(const std::string& name) {
  if (name == "linear" || name == "Fl") return ToyFunctional::Linear;
  if (name == "nonlinear" || name == "Fnl") return ToyFunctional::Nonlinear;
  throw ConfigError("unknown toy functional '" + name + "' (expected linear or nonlinear)");
}

void ToyConfig::validate() const {
  if (degree < 0) throw ConfigError("degree: must be >= 0, got " + std::to_string(degree));
  if (points < 2) throw ConfigError("points: must be >= 2, got " + std::to_string(points));
  if (!(coeff_hi >= coeff_lo)) throw ConfigError("coeff_range: upper bound below lower bound");
  if (!(x_hi > x_lo)) throw ConfigError("domain: upper bound must exceed lower bound");
  if (samples < 0) throw ConfigError("samples: must be >= 0");
}

double polynomial_value(const std::vector<double>& coeffs, double x) {
  double v = 0.0;
  for (double c : coeffs) v = v * x + c;
  return v;
}

namespace {

// Ascending-power coefficients of c_0 x^p + ... + c_p.
std::vector<double> ascending(const std::vector<double>& coeffs) { return {coeffs.rbegin(), coeffs.rend()}; }

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

double integrate_ascending(const std::vector<double>& a, double lo, double hi) {
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = static_cast<double>(k + 1);
    total += a[k] * (std::pow(hi, e) - std::pow(lo, e)) / e;
  }
  return total;
}

}  // namespace

double toy_functional_value(const std::vector<double>& coeffs, ToyFunctional functional, double x_lo, double x_hi) {
  const std::vector<double> u = ascending(coeffs);
  if (functional == ToyFunctional::Linear) return integrate_ascending(poly_mul(u, {0.0, 0.0, 1.0}), x_lo, x_hi);
  return integrate_ascending(poly_mul(poly_mul(u, u), u), x_lo, x_hi);
}

ToySample make_toy_sample(std::vector<double> coeffs, ToyFunctional functional, const Grid& grid) {
  ToySample s;
  s.u.resize(grid.points(), 1);
  s.derivative.resize(grid.points(), 1);
  for (int i = 0; i < grid.points(); ++i) {
    const double x = grid.x(i);
    const double u = polynomial_value(coeffs, x);
    s.u(i, 0) = u;
    s.derivative(i, 0) = functional == ToyFunctional::Linear ? x * x : 3.0 * u * u;
  }
  s.label = toy_functional_value(coeffs, functional, grid.x_lo(), grid.x_hi());
  s.coeffs = std::move(coeffs);
  return s;
}

ToyDataset gen_toy_dataset(const ToyConfig& config) {
  config.validate();
  ToyDataset ds;
  ds.config = config;
  ds.grid = config.grid();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coeff(config.coeff_lo, config.coeff_hi);
  ds.samples.reserve(static_cast<std::size_t>(config.samples));
  for (int n = 0; n < config.samples; ++n) {
    std::vector<double> c(static_cast<std::size_t>(config.degree) + 1);
    for (double& ci : c) ci = coeff(rng);
    ds.samples.push_back(make_toy_sample(std::move(c), config.functional, ds.grid));
  }
  return ds;
}

ToyVariants gen_ood_variants(const ToyConfig& base, int samples, std::uint64_t seed) {
  ToyConfig ood = base;
  ood.coeff_lo = 1.0;
  ood.coeff_hi = 3.0;
  ood.samples = samples;
  ood.seed = seed;
  ToyConfig disc = base;
  disc.x_lo = -2.0;
  disc.x_hi = 2.0;
  disc.samples = samples;
  disc.seed = seed + 1;
  return {gen_toy_dataset(ood), gen_toy_dataset(disc)};
}

// ---------------------------------------------------------------------------

double SineSeries::operator()(double x) const {
  double v = 0.0;
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    v += amplitude[i] * std::sin(2.0 * std::numbers::pi * wavenumber[i] * x / length + phase[i]);
  }
  return v;
}

double SineSeries::derivative(double x) const {
  double v = 0.0;
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    const double k = 2.0 * std::numbers::pi * wavenumber[i] / length;
    v += amplitude[i] * k * std::cos(k * x + phase[i]);
  }
  return v;
}

void AdvectionConfig::validate() const {
  if (!(length > 0.0)) throw ConfigError("length: must be positive");
  if (nx < 2) throw ConfigError("nx: must be >= 2");
  if (modes < 1) throw ConfigError("modes: must be >= 1");
  if (max_wavenumber < 1) throw ConfigError("max_wavenumber: must be >= 1");
  if (nt < 2) throw ConfigError("nt: must be >= 2");
  if (!(t_end > 0.0)) throw ConfigError("t_end: must be positive");
  if (samples < 0) throw ConfigError("samples: must be >= 0");
}

SineSeries sample_sine_series(std::mt19937_64& rng, int modes, double amplitude, int max_wavenumber, double length) {
  std::uniform_real_distribution<double> amp(-amplitude, amplitude);
  std::uniform_int_distribution<int> wave(1, max_wavenumber);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  SineSeries s;
  s.length = length;
  for (int i = 0; i < modes; ++i) {
    s.amplitude.push_back(amp(rng));
    s.wavenumber.push_back(wave(rng));
    s.phase.push_back(phase(rng));
  }
  return s;
}

Field advect_exact(const SineSeries& ic, const Grid& grid, double t) {
  Field u(grid.points(), 1);
  const double length = grid.length_x();
  for (int i = 0; i < grid.points(); ++i) {
    double xs = std::fmod(grid.x(i) - grid.x_lo() - t, length);
    if (xs < 0.0) xs += length;
    u(i, 0) = ic(xs + grid.x_lo());
  }
  return u;
}

AdvectionDataset gen_advection_dataset(const AdvectionConfig& config) {
  config.validate();
  AdvectionDataset ds;
  ds.config = config;
  const Grid grid = config.grid();
  const double dt = config.dt();
  std::mt19937_64 rng(config.seed);
  for (int n = 0; n < config.samples; ++n) {
    SineSeries ic = sample_sine_series(rng, config.modes, config.amplitude, config.max_wavenumber, config.length);
    Trajectory traj;
    traj.dt = dt;
    traj.grid = grid;
    traj.states.reserve(static_cast<std::size_t>(config.nt));
    for (int t = 0; t < config.nt; ++t) traj.states.push_back(advect_exact(ic, grid, t * dt));
    ds.initial_conditions.push_back(std::move(ic));
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::string to_string(LabelMode mode) { return mode == LabelMode::Functional ? "functional" : "temporal"; }

LabelMode label_mode_from_string(const std::string& name) {
  if (name == "functional") return LabelMode::Functional;
  if (name == "temporal") return LabelMode::Temporal;
  throw ConfigError("unknown label mode '" + name + "' (expected functional or temporal)");
}

void make_labels(Trajectory& traj, const PdeSystem& system, LabelMode mode) {
  if (traj.channels() != system.channels()) {
    throw ConfigError("trajectory has " + std::to_string(traj.channels()) + " channel(s), " + system.name() + " needs " +
                      std::to_string(system.channels()));
  }
  traj.labels.clear();
  if (mode == LabelMode::Functional) {
    traj.labels.reserve(traj.states.size());
    for (const Field& s : traj.states) traj.labels.push_back(analytic_functional_derivative(system, s, traj.grid));
  } else {
    traj.labels = richardson_time_derivative(traj.states, traj.dt);
  }
}

// ---------------------------------------------------------------------------

std::uint64_t DatasetManifest::payload_values() const {
  return static_cast<std::uint64_t>(n_samples) * static_cast<std::uint64_t>(nt) * static_cast<std::uint64_t>(channels) *
         static_cast<std::uint64_t>(ny) * static_cast<std::uint64_t>(nx);
}

Grid DatasetManifest::grid() const {
  if (ny > 1) return Grid::plane(nx, ny, x_min, x_max, y_min, y_max, periodic_x, periodic_y);
  return Grid::line(nx, x_min, x_max, periodic_x);
}

void DatasetManifest::validate() const {
  if (format_version != 1) throw IoError("unsupported dataset format_version " + std::to_string(format_version));
  if (n_samples < 0 || nt < 1 || nx < 2 || ny < 1 || channels < 1) throw IoError("manifest has invalid dimensions");
  if (!channel_names.empty() && static_cast<int>(channel_names.size()) != channels) {
    throw IoError("manifest channel_names has " + std::to_string(channel_names.size()) + " entries for " +
                  std::to_string(channels) + " channels");
  }
  const Grid g = grid();
  if (std::abs(g.dx() - dx) > 1e-9 * std::abs(g.dx())) {
    throw IoError("manifest dx=" + std::to_string(dx) + " inconsistent with bounds and nx (expected " +
                  std::to_string(g.dx()) + ")");
  }
  if (ny > 1 && std::abs(g.dy() - dy) > 1e-9 * std::abs(g.dy())) throw IoError("manifest dy inconsistent with bounds and ny");
}

json DatasetManifest::to_json() const {
  json j;
  j["format_version"] = format_version;
  j["pde"] = pde;
  j["n_samples"] = n_samples;
  j["nt"] = nt;
  j["nx"] = nx;
  j["ny"] = ny;
  j["channels"] = channels;
  j["channel_names"] = channel_names;
  j["dt"] = dt;
  j["dx"] = dx;
  j["dy"] = dy;
  j["x_min"] = x_min;
  j["x_max"] = x_max;
  j["y_min"] = y_min;
  j["y_max"] = y_max;
  j["periodic_x"] = periodic_x;
  j["periodic_y"] = periodic_y;
  j["constants"] = {{"g", gravity}};
  j["seed"] = seed;
  j["layout"] = "sample,time,channel,y,x";
  j["dtype"] = "float64-le";
  j["payload_bytes"] = payload_bytes();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  static const char* known[] = {"format_version", "pde",   "n_samples", "nt",         "nx",         "ny",
                                "channels",       "channel_names", "dt", "dx",        "dy",         "x_min",
                                "x_max",          "y_min", "y_max",     "periodic_x", "periodic_y", "constants",
                                "seed",           "layout", "dtype",    "payload_bytes"};
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.pde = j.at("pde").get<std::string>();
    m.n_samples = j.at("n_samples").get<int>();
    m.nt = j.at("nt").get<int>();
    m.nx = j.at("nx").get<int>();
    m.ny = j.value("ny", 1);
    m.channels = j.at("channels").get<int>();
    m.channel_names = j.value("channel_names", std::vector<std::string>{});
    m.dt = j.at("dt").get<double>();
    m.dx = j.at("dx").get<double>();
    m.dy = j.value("dy", 0.0);
    m.x_min = j.at("x_min").get<double>();
    m.x_max = j.at("x_max").get<double>();
    m.y_min = j.value("y_min", 0.0);
    m.y_max = j.value("y_max", 0.0);
    m.periodic_x = j.at("periodic_x").get<bool>();
    m.periodic_y = j.value("periodic_y", false);
    if (j.contains("constants")) m.gravity = j["constants"].value("g", 1.0);
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("layout") && j["layout"].get<std::string>() != "sample,time,channel,y,x") {
      throw IoError("unsupported layout '" + j["layout"].get<std::string>() + "'");
    }
    if (j.contains("dtype") && j["dtype"].get<std::string>() != "float64-le") {
      throw IoError("unsupported dtype '" + j["dtype"].get<std::string>() + "'");
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) m.extra[k] = v;
  }
  if (j.contains("payload_bytes") && j["payload_bytes"].get<std::uint64_t>() != m.payload_bytes()) {
    throw IoError("manifest payload_bytes " + std::to_string(j["payload_bytes"].get<std::uint64_t>()) +
                  " does not match dimensions (" + std::to_string(m.payload_bytes()) + ")");
  }
  return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("manifest not found: " + (dir / "manifest.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  }
  DatasetManifest m = DatasetManifest::from_json(j);
  m.validate();
  return m;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  const DatasetManifest& m = dataset.manifest;
  m.validate();
  if (static_cast<int>(dataset.samples.size()) != m.n_samples) throw ShapeError("dataset sample count differs from manifest");
  const int points = m.nx * m.ny;
  std::vector<double> payload;
  payload.reserve(m.payload_values());
  for (const Trajectory& traj : dataset.samples) {
    if (traj.steps() != m.nt) throw ShapeError("trajectory length differs from manifest nt");
    for (const Field& s : traj.states) {
      if (s.rows() != points || s.cols() != m.channels) throw ShapeError("state shape differs from manifest");
      for (int c = 0; c < m.channels; ++c) {
        for (int p = 0; p < points; ++p) payload.push_back(s(p, c));
      }
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_f64_le(dir / "data.bin", payload);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.to_json().dump(2) << "\n";
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const DatasetManifest& m = ds.manifest;
  const std::vector<double> payload = read_f64_le(dir / "data.bin", m.payload_values());
  const Grid grid = m.grid();
  const int points = m.nx * m.ny;
  std::size_t k = 0;
  ds.samples.resize(static_cast<std::size_t>(m.n_samples));
  for (Trajectory& traj : ds.samples) {
    traj.dt = m.dt;
    traj.grid = grid;
    traj.states.resize(static_cast<std::size_t>(m.nt));
    for (Field& s : traj.states) {
      s.resize(points, m.channels);
      for (int c = 0; c < m.channels; ++c) {
        for (int p = 0; p < points; ++p) s(p, c) = payload[k++];
      }
      if (!s.allFinite()) throw IoError("dataset contains non-finite values");
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

DatasetManifest manifest_for_grid(const Grid& grid) {
  DatasetManifest m;
  m.nx = grid.nx();
  m.ny = grid.dims() == 2 ? grid.ny() : 1;
  m.dx = grid.dx();
  m.dy = grid.dims() == 2 ? grid.dy() : 0.0;
  m.x_min = grid.x_lo();
  m.x_max = grid.x_hi();
  m.y_min = grid.dims() == 2 ? grid.y_lo() : 0.0;
  m.y_max = grid.dims() == 2 ? grid.y_hi() : 0.0;
  m.periodic_x = grid.periodic_x();
  m.periodic_y = grid.periodic_y();
  return m;
}

}  // namespace

Dataset to_dataset(const ToyDataset& toy) {
  Dataset ds;
  DatasetManifest m = manifest_for_grid(toy.grid);
  m.pde = "toy";
  m.n_samples = static_cast<int>(toy.samples.size());
  m.nt = 1;
  m.channels = 2;
  m.channel_names = {"u", "dF_du"};
  m.seed = toy.config.seed;
  json coeffs = json::array();
  json labels = json::array();
  for (const ToySample& s : toy.samples) {
    coeffs.push_back(s.coeffs);
    labels.push_back(s.label);
    Trajectory traj;
    traj.grid = toy.grid;
    Field state(toy.grid.points(), 2);
    state.col(0) = s.u;
    state.col(1) = s.derivative;
    traj.states.push_back(std::move(state));
    ds.samples.push_back(std::move(traj));
  }
  m.extra = {{"functional", to_string(toy.config.functional)},
             {"degree", toy.config.degree},
             {"coeff_range", {toy.config.coeff_lo, toy.config.coeff_hi}},
             {"coefficients", coeffs},
             {"labels", labels}};
  ds.manifest = std::move(m);
  return ds;
}

ToyDataset to_toy(const Dataset& dataset) {
  const DatasetManifest& m = dataset.manifest;
  if (m.pde != "toy" || m.channels != 2 || m.nt != 1) throw ConfigError("dataset is not a toy functional dataset");
  ToyDataset toy;
  try {
    toy.config.functional = toy_functional_from_string(m.extra.at("functional").get<std::string>());
    toy.config.degree = m.extra.at("degree").get<int>();
    const auto range = m.extra.at("coeff_range").get<std::vector<double>>();
    toy.config.coeff_lo = range.at(0);
    toy.config.coeff_hi = range.at(1);
    const auto coeffs = m.extra.at("coefficients").get<std::vector<std::vector<double>>>();
    const auto labels = m.extra.at("labels").get<std::vector<double>>();
    if (coeffs.size() != dataset.samples.size() || labels.size() != dataset.samples.size()) {
      throw IoError("toy manifest label count does not match samples");
    }
    toy.grid = m.grid();
    toy.config.points = m.nx;
    toy.config.x_lo = m.x_min;
    toy.config.x_hi = m.x_max;
    toy.config.samples = m.n_samples;
    toy.config.seed = m.seed;
    for (std::size_t n = 0; n < dataset.samples.size(); ++n) {
      ToySample s;
      s.coeffs = coeffs[n];
      s.label = labels[n];
      s.u = dataset.samples[n].states[0].col(0);
      s.derivative = dataset.samples[n].states[0].col(1);
      toy.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("toy manifest is missing fields: ") + e.what());
  }
  return toy;
}

Dataset to_dataset(const AdvectionDataset& adv) {
  Dataset ds;
  const AdvectionConfig& c = adv.config;
  DatasetManifest m = manifest_for_grid(c.grid());
  m.pde = "advection";
  m.n_samples = static_cast<int>(adv.trajectories.size());
  m.nt = c.nt;
  m.channels = 1;
  m.channel_names = {"u"};
  m.dt = c.dt();
  m.seed = c.seed;
  json ics = json::array();
  for (const SineSeries& s : adv.initial_conditions) {
    ics.push_back({{"amplitude", s.amplitude}, {"wavenumber", s.wavenumber}, {"phase", s.phase}});
  }
  m.extra = {{"generator", "analytic_translation"},
             {"t_end", c.t_end},
             {"modes", c.modes},
             {"amplitude", c.amplitude},
             {"max_wavenumber", c.max_wavenumber},
             {"initial_conditions", ics}};
  ds.manifest = std::move(m);
  ds.samples = adv.trajectories;
  return ds;
}

}  // namespace nf
