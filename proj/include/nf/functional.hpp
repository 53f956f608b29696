#pragma once

// Integral kernel functionals:  H[u] ~ sum_i kappa(x_i, u_i) . u_i mu_i dx
// and their functional derivative obtained by reverse-mode differentiation
// of that sum, divided by mu_i dx so it samples dH/du pointwise.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nf/array.hpp"
#include "nf/autodiff.hpp"
#include "nf/grid.hpp"
#include "nf/kernels.hpp"

namespace nf {

enum class ModelKind { MlpLinear, MlpNonlinear, SirenFilmLocal, SirenFilmGlobal, BaselineMlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Architecture description; everything needed to rebuild a model from a
/// flat parameter vector.
struct ModelSpec {
  ModelKind kind = ModelKind::MlpNonlinear;
  int dims = 1;
  int channels = 1;
  int width = 32;
  int depth = 2;
  double omega0 = 30.0;
  int conv_size = 5;
  int input_points = 0;  // baseline only
  std::uint64_t seed = 0;
  /// Coordinates enter the kernel as (x - center) / scale, per axis.
  std::vector<double> coord_center{0.0};
  std::vector<double> coord_scale{1.0};

  /// Sets center/scale so the grid's bounds map to [-1, 1].
  void normalize_to(const Grid& grid);
  [[nodiscard]] bool is_integral_kernel() const { return kind != ModelKind::BaselineMlp; }
};

class FunctionalModel {
 public:
  /// Random initialization from spec.seed.
  static FunctionalModel create(const ModelSpec& spec);
  /// Rebuilds the architecture and takes `flat` as parameter values.
  static FunctionalModel from_flat(const ModelSpec& spec, std::span<const double> flat);

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] const ParameterSet& parameters() const { return params_; }
  [[nodiscard]] ParameterSet& parameters() { return params_; }

  /// Packs samples into this model's input layout: (batch * points) x channels
  /// for integral kernels, batch x points for the baseline.
  [[nodiscard]] Array pack(std::span<const Field> fields, const Grid& grid) const;
  [[nodiscard]] std::vector<Field> unpack(const Array& packed, int batch, const Grid& grid) const;
  /// 1 / (mu_i * cell) in a shape that broadcasts against the packed layout.
  [[nodiscard]] Array deweighting(int batch, const Grid& grid) const;

  /// Per-sample functional values, batch x 1.
  [[nodiscard]] ad::Var evaluate(const BoundParameters& p, ad::Var u, int batch, const Grid& grid) const;
  /// Kernel samples in the packed layout (integral kernels only).
  [[nodiscard]] ad::Var kernel(const BoundParameters& p, ad::Var u, int batch, const Grid& grid) const;

 private:
  FunctionalModel(ModelSpec spec, ParameterSet params);
  void build(Initializer& init);
  [[nodiscard]] Array normalized_coordinates(const Grid& grid) const;
  void check_grid(const Grid& grid) const;

  ModelSpec spec_;
  ParameterSet params_;
  std::variant<MlpKernel, SirenFilmKernel, BaselineScalarMlp> net_;
  std::optional<GlobalConditioner> conditioner_;
};

/// sum over rows/channels of kappa . u . w, reduced per sample block
/// (batch x 1). `weights` is (batch*points) x 1 of mu_i * cell.
ad::Var ikf_sum(ad::Var kappa, ad::Var u, const Array& weights, int batch);

/// Result of one tape pass over a batch.
struct FunctionalPass {
  ad::Var value;       // batch x 1
  ad::Var u;           // packed input leaf
  ad::Var derivative;  // packed, de-weighted dH/du
};

/// Evaluates H and dH/du for a batch on `tape`. With create_graph the
/// derivative stays differentiable with respect to the bound parameters.
FunctionalPass functional_pass(const FunctionalModel& model, const BoundParameters& params,
                               std::span<const Field> fields, const Grid& grid, bool create_graph);

double evaluate_functional(const FunctionalModel& model, const Field& u, const Grid& grid);
Field functional_derivative(const FunctionalModel& model, const Field& u, const Grid& grid);

struct BatchEvaluation {
  std::vector<double> values;
  std::vector<Field> derivatives;
};

BatchEvaluation evaluate_batch(const FunctionalModel& model, std::span<const Field> fields, const Grid& grid);

}  // namespace nf
