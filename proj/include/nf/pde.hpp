#pragma once

// Hamiltonian PDE systems on periodic grids: analytic Hamiltonians and
// functional derivatives, the symplectic operator J realized with central
// finite differences, Savitzky-Golay smoothing, and Richardson time
// derivatives for temporal-form labels.
//
// Channel layouts: advection and KdV carry u; shallow water carries
// (vx, vy, h).

#include <span>
#include <string>
#include <vector>

#include "nf/array.hpp"
#include "nf/autodiff.hpp"
#include "nf/grid.hpp"

namespace nf {

/// sum_k coeffs[k] * f(i + offsets[k]), for unit spacing.
struct Stencil {
  std::vector<int> offsets;
  std::vector<double> coeffs;

  [[nodiscard]] int reach() const;
};

/// Antisymmetric first-derivative stencil of order 2, 4, 6 or 8.
Stencil central_difference(int order);

/// Center-point least-squares smoothing weights for an odd window.
Stencil savitzky_golay_stencil(int window, int degree);

enum class GridAxis { X, Y };

/// Applies a stencil along one periodic axis of every channel, scaled by 1/h.
Field apply_stencil(const Field& field, const Stencil& stencil, GridAxis axis, double h, const Grid& grid);

Field fd_derivative(const Field& field, GridAxis axis, int order, const Grid& grid);

/// Periodic Savitzky-Golay smoothing along x (and y on 2D grids).
Field savitzky_golay_smooth(const Field& field, int window, int degree, const Grid& grid);

/// 4th-order time derivative of a sampled trajectory: centered five-point
/// Richardson formula inside, one-sided fourth-order formulas at the two
/// points nearest each end. Needs at least 5 samples.
std::vector<Field> richardson_time_derivative(std::span<const Field> states, double dt);

enum class PdeKind { Advection, Kdv, Swe };

/// Sign/normalization convention for the shallow-water operator
///   J = [[0, -r*q', s*dx], [r*q', 0, s*dy], [s*dx, s*dy, 0]],
/// q' = q/h when potential_vorticity, else q; q = d(vx)/dy - d(vy)/dx.
/// The printed matrix is s = +1, r = +1, q' = q. The default is the
/// convention under which J applied to the analytic derivative reproduces
/// the shallow-water equations (calibrated in tests).
struct SweConvention {
  double derivative_sign = -1.0;
  double rotation_sign = 1.0;
  bool potential_vorticity = true;

  static SweConvention printed() { return {1.0, 1.0, false}; }
};

struct JOperator {
  int order = 2;
  bool smooth = false;
  int sg_window = 7;
  int sg_degree = 3;
  int vorticity_order = 2;
  SweConvention swe;
};

struct PdeSystem {
  PdeKind kind = PdeKind::Advection;
  double gravity = 1.0;
  JOperator j;

  static PdeSystem advection();
  static PdeSystem kdv();
  static PdeSystem swe(double gravity = 1.0);
  static PdeSystem from_name(const std::string& name);

  [[nodiscard]] int channels() const { return kind == PdeKind::Swe ? 3 : 1; }
  [[nodiscard]] int dims() const { return kind == PdeKind::Swe ? 2 : 1; }
  [[nodiscard]] std::string name() const;
};

double hamiltonian_value(const PdeSystem& system, const Field& state, const Grid& grid);

Field analytic_functional_derivative(const PdeSystem& system, const Field& state, const Grid& grid);

/// Tendency J(derivative). `state` supplies the vorticity and depth for the
/// shallow-water operator and is ignored in 1D.
Field apply_J(const PdeSystem& system, const Field& derivative, const Field& state, const Grid& grid);

/// Same operator on a packed (batch * points) x channels tape variable, for
/// temporal-form losses. `states` holds one state per batch entry.
ad::Var apply_J(const PdeSystem& system, ad::Var derivative, std::span<const Field> states, const Grid& grid);

}  // namespace nf
