#pragma once

// Dataset generation and the on-disk format shared with external solvers:
//
//   manifest.json  metadata, snake_case keys (see DatasetManifest)
//   data.bin       little-endian float64, layout [sample][time][channel][y][x]
//
// Toy functional datasets use the same pair with nt = 1 and two channels
// (u, dF/du); coefficients and scalar labels live in the manifest.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "nf/array.hpp"
#include "nf/grid.hpp"
#include "nf/pde.hpp"
#include "nf/trajectory.hpp"

namespace nf {

// ---------------------------------------------------------------------------
// Toy functionals: F_l[u] = int u x^2 dx, F_nl[u] = int u^3 dx over [x_1, x_M]
// for random polynomials u(x) = c_0 x^p + ... + c_p.

enum class ToyFunctional { Linear, Nonlinear };

std::string to_string(ToyFunctional f);
ToyFunctional toy_functional_from_string(const std::string& name);

struct ToyConfig {
  int degree = 2;
  double coeff_lo = -1.0;
  double coeff_hi = 1.0;
  int points = 100;
  double x_lo = -1.0;
  double x_hi = 1.0;
  int samples = 100;
  ToyFunctional functional = ToyFunctional::Linear;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] Grid grid() const { return Grid::line(points, x_lo, x_hi, false); }
};

struct ToySample {
  std::vector<double> coeffs;  // c_0 (highest power) ... c_p
  Field u;                     // points x 1
  double label = 0.0;          // F[u], closed form
  Field derivative;            // dF/du at the grid points
};

struct ToyDataset {
  ToyConfig config;
  Grid grid;
  std::vector<ToySample> samples;
};

/// Evaluates c_0 x^p + ... + c_p.
double polynomial_value(const std::vector<double>& coeffs, double x);
/// Closed-form F[u] over [x_lo, x_hi].
double toy_functional_value(const std::vector<double>& coeffs, ToyFunctional functional, double x_lo, double x_hi);
ToySample make_toy_sample(std::vector<double> coeffs, ToyFunctional functional, const Grid& grid);

ToyDataset gen_toy_dataset(const ToyConfig& config);

/// Validation sets for generalization: OOD coefficients in [1, 3] on the base
/// grid, and the base coefficient range on [-2, 2] with the same point count.
struct ToyVariants {
  ToyDataset ood;
  ToyDataset disc;
};
ToyVariants gen_ood_variants(const ToyConfig& base, int samples = 10, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Advection: u(x, t) = u0((x - t) mod L) with
// u0(x) = sum_i A_i sin(2 pi l_i x / L + phi_i).

struct SineSeries {
  std::vector<double> amplitude;
  std::vector<int> wavenumber;
  std::vector<double> phase;
  double length = 1.0;

  [[nodiscard]] double operator()(double x) const;
  [[nodiscard]] double derivative(double x) const;
};

struct AdvectionConfig {
  double length = 16.0;
  int nx = 128;
  int modes = 5;
  double amplitude = 0.5;
  int max_wavenumber = 3;
  int nt = 200;
  double t_end = 4.0;
  int samples = 64;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] Grid grid() const { return Grid::line(nx, 0.0, length, true); }
  /// Stored time step t_end / (nt - 1).
  [[nodiscard]] double dt() const { return t_end / (nt - 1); }
};

SineSeries sample_sine_series(std::mt19937_64& rng, int modes, double amplitude, int max_wavenumber, double length);
/// Exact translated solution at time t on the grid.
Field advect_exact(const SineSeries& ic, const Grid& grid, double t);

struct AdvectionDataset {
  AdvectionConfig config;
  std::vector<SineSeries> initial_conditions;
  std::vector<Trajectory> trajectories;
};

AdvectionDataset gen_advection_dataset(const AdvectionConfig& config);

// ---------------------------------------------------------------------------

enum class LabelMode { Functional, Temporal };

std::string to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& name);

/// Fills traj.labels: analytic dH/du per step (functional form) or
/// Richardson du/dt (temporal form).
void make_labels(Trajectory& traj, const PdeSystem& system, LabelMode mode);

// ---------------------------------------------------------------------------

struct DatasetManifest {
  int format_version = 1;
  std::string pde;  // advection | kdv | swe | toy
  int n_samples = 0;
  int nt = 0;
  int nx = 0;
  int ny = 1;
  int channels = 1;
  std::vector<std::string> channel_names;
  double dt = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 0.0;
  bool periodic_x = true;
  bool periodic_y = false;
  double gravity = 1.0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();

  [[nodiscard]] std::uint64_t payload_values() const;
  [[nodiscard]] std::uint64_t payload_bytes() const { return payload_values() * 8u; }
  [[nodiscard]] Grid grid() const;
  [[nodiscard]] int dims() const { return ny > 1 ? 2 : 1; }
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> samples;
};

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);

Dataset to_dataset(const ToyDataset& toy);
ToyDataset to_toy(const Dataset& dataset);
Dataset to_dataset(const AdvectionDataset& adv);

}  // namespace nf
