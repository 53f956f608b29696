#pragma once

// Kernel parameterizations kappa_theta(x, u) for integral kernel functionals.
//
//  * MlpKernel          plain dense network; linear mode reads x only,
//                       nonlinear mode reads [x, u].
//  * SirenFilmKernel    sine layers modulated per layer by FiLM scale/shift,
//                       conditioned locally on u_i or globally on the field.
//  * GlobalConditioner  periodic convolution stack producing per-point FiLM
//                       parameters for every sine layer.
//  * BaselineScalarMlp  dense network on the concatenated [x, u] vector; not
//                       an integral kernel, its input size is tied to one grid.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nf/array.hpp"
#include "nf/autodiff.hpp"
#include "nf/grid.hpp"

namespace nf {

struct Parameter {
  std::string name;
  Array value;
};

/// Ordered, named parameter arrays. Order defines the checkpoint layout.
class ParameterSet {
 public:
  std::size_t add(std::string name, Array value);

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] const Parameter& operator[](std::size_t i) const { return params_[i]; }
  [[nodiscard]] Parameter& operator[](std::size_t i) { return params_[i]; }
  [[nodiscard]] std::size_t scalar_count() const;
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  [[nodiscard]] std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

 private:
  std::vector<Parameter> params_;
};

/// A parameter set placed on a tape as leaf variables.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const ParameterSet& set, bool requires_grad);

  [[nodiscard]] ad::Var operator[](std::size_t i) const { return vars_[i]; }
  [[nodiscard]] std::span<const ad::Var> vars() const { return vars_; }
  [[nodiscard]] ad::Tape& tape() const { return *tape_; }
  [[nodiscard]] bool requires_grad() const { return requires_grad_; }

 private:
  ad::Tape* tape_;
  std::vector<ad::Var> vars_;
  bool requires_grad_;
};

/// Uniform initializer shared by every layer builder.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Array uniform(Eigen::Index rows, Eigen::Index cols, double bound);
  Array constant(Eigen::Index rows, Eigen::Index cols, double value) {
    return Array::Constant(rows, cols, value);
  }

 private:
  std::mt19937_64 rng_;
};

/// y = x W + b with W stored in x out.
struct DenseLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;

  static DenseLayer create(ParameterSet& params, const std::string& name, int in, int out, Initializer& init,
                           double weight_bound, double bias_value);
  [[nodiscard]] ad::Var apply(const BoundParameters& p, ad::Var x) const;
};

/// Convolution over a periodic grid, realized as shifted copies + matmul.
/// 1D kernels span `size` points along x; 2D kernels span size x size.
struct PeriodicConv {
  DenseLayer mix;  // (in * taps) -> out
  int size = 5;
  int dims = 1;

  static PeriodicConv create(ParameterSet& params, const std::string& name, int dims, int in, int out, int size,
                             Initializer& init, double bias_value, double weight_scale = 1.0);
  /// x has rows = batch * grid.points(), one block per sample.
  [[nodiscard]] ad::Var apply(const BoundParameters& p, ad::Var x, int batch, const Grid& grid) const;
};

/// gamma * sin(omega0 * (x W + b)) + beta.
ad::Var siren_film_layer(ad::Var x, ad::Var gamma, ad::Var beta, ad::Var weight, ad::Var bias, double omega0);

/// Per-layer FiLM modulation.
struct Film {
  ad::Var gamma;
  ad::Var beta;
};

struct LocalConditioning {
  ad::Var u;  // rows x channels
};

struct GlobalConditioning {
  std::vector<Film> layers;
};

using KernelConditioning = std::variant<std::monostate, LocalConditioning, GlobalConditioning>;

// ---------------------------------------------------------------------------

struct MlpKernel {
  enum class Mode { Linear, Nonlinear };

  Mode mode = Mode::Nonlinear;
  int dims = 1;
  int channels = 1;
  std::vector<DenseLayer> layers;  // last layer is the linear output

  static MlpKernel create(ParameterSet& params, Mode mode, int dims, int channels, int width, int depth,
                          Initializer& init);
  /// coords: rows x dims (normalized). Linear mode requires monostate
  /// conditioning; nonlinear requires local.
  [[nodiscard]] ad::Var eval(const BoundParameters& p, ad::Var coords, const KernelConditioning& cond) const;
};

struct FilmNetwork {
  DenseLayer hidden;
  DenseLayer gamma;
  DenseLayer beta;

  [[nodiscard]] Film apply(const BoundParameters& p, ad::Var u) const;
};

struct GlobalConditioner {
  PeriodicConv first;
  std::vector<PeriodicConv> gamma;  // one head per sine layer
  std::vector<PeriodicConv> beta;
  int width = 0;

  static GlobalConditioner create(ParameterSet& params, int dims, int channels, int width, int layers, int conv_size,
                                  Initializer& init);
  /// u: rows = batch * points. Requires a periodic grid.
  [[nodiscard]] GlobalConditioning condition(const BoundParameters& p, ad::Var u, int batch, const Grid& grid) const;
};

struct SirenFilmKernel {
  enum class Conditioning { Local, Global };

  Conditioning conditioning = Conditioning::Local;
  int dims = 1;
  int channels = 1;
  int width = 0;
  double omega0 = 30.0;
  std::vector<DenseLayer> sine_layers;
  std::vector<FilmNetwork> film;  // local conditioning: one per sine layer
  DenseLayer projection;

  static SirenFilmKernel create(ParameterSet& params, Conditioning conditioning, int dims, int channels, int width,
                                int depth, double omega0, Initializer& init);
  [[nodiscard]] ad::Var eval(const BoundParameters& p, ad::Var coords, const KernelConditioning& cond) const;
};

struct BaselineScalarMlp {
  int input_points = 0;
  std::vector<DenseLayer> layers;

  static BaselineScalarMlp create(ParameterSet& params, int input_points, int width, int depth, Initializer& init);
  /// x, u: batch x input_points. Returns batch x 1.
  [[nodiscard]] ad::Var eval(const BoundParameters& p, ad::Var x, ad::Var u) const;
};

/// Row permutation shifting every sample block by (ox, oy) grid cells with
/// periodic wraparound: out(i, j) = in(i + ox, j + oy). Cached per thread.
ad::PermutationPtr shift_permutation(const Grid& grid, int batch, int ox, int oy);

}  // namespace nf
