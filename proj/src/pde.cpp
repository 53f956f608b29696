#include "nf/pde.hpp"

#include <algorithm>
#include <cmath>

#include "nf/errors.hpp"
#include "nf/kernels.hpp"

namespace nf {

using ad::Var;

int Stencil::reach() const {
  int r = 0;
  for (int o : offsets) r = std::max(r, std::abs(o));
  return r;
}

Stencil central_difference(int order) {
  std::vector<double> half;
  switch (order) {
    case 2: half = {1.0 / 2.0}; break;
    case 4: half = {2.0 / 3.0, -1.0 / 12.0}; break;
    case 6: half = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0}; break;
    case 8: half = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0}; break;
    default: throw ConfigError("central difference order must be 2, 4, 6 or 8, got " + std::to_string(order));
  }
  Stencil s;
  for (int k = static_cast<int>(half.size()); k >= 1; --k) {
    s.offsets.push_back(-k);
    s.coeffs.push_back(-half[static_cast<std::size_t>(k - 1)]);
  }
  for (int k = 1; k <= static_cast<int>(half.size()); ++k) {
    s.offsets.push_back(k);
    s.coeffs.push_back(half[static_cast<std::size_t>(k - 1)]);
  }
  return s;
}

Stencil savitzky_golay_stencil(int window, int degree) {
  if (window < 1 || window % 2 == 0) throw ConfigError("Savitzky-Golay window must be odd and positive");
  if (degree < 0 || degree >= window) throw ConfigError("Savitzky-Golay degree must satisfy 0 <= degree < window");
  const int m = window / 2;
  Eigen::MatrixXd a(window, degree + 1);
  for (int k = 0; k < window; ++k) {
    for (int p = 0; p <= degree; ++p) a(k, p) = std::pow(static_cast<double>(k - m), p);
  }
  // Fitted value at the center = first coefficient of the least-squares fit.
  const Eigen::MatrixXd normal = a.transpose() * a;
  const Eigen::VectorXd e0 = Eigen::VectorXd::Unit(degree + 1, 0);
  const Eigen::VectorXd row = normal.ldlt().solve(e0);
  const Eigen::VectorXd c = a * row;
  Stencil s;
  for (int k = 0; k < window; ++k) {
    s.offsets.push_back(k - m);
    s.coeffs.push_back(c(k));
  }
  return s;
}

namespace {

void require_periodic_axis(const Grid& grid, GridAxis axis) {
  const bool periodic = axis == GridAxis::X ? grid.periodic_x() : grid.periodic_y();
  if (!periodic) throw ConfigError("unsupported boundary: finite-difference operators require a periodic axis");
  if (axis == GridAxis::Y && grid.dims() != 2) throw ConfigError("y-derivative requested on a 1D grid");
}

}  // namespace

Field apply_stencil(const Field& field, const Stencil& stencil, GridAxis axis, double h, const Grid& grid) {
  require_periodic_axis(grid, axis);
  if (field.rows() != grid.points()) throw ShapeError("field does not match grid");
  const int n = axis == GridAxis::X ? grid.nx() : grid.ny();
  if (2 * stencil.reach() + 1 > n) {
    throw DomainError("grid too small for stencil: axis has " + std::to_string(n) + " points, stencil spans " +
                      std::to_string(2 * stencil.reach() + 1));
  }
  auto shifted = [&](int o) {
    Field s(field.rows(), field.cols());
    for (int j = 0; j < grid.ny(); ++j) {
      for (int i = 0; i < grid.nx(); ++i) {
        const int src = axis == GridAxis::X ? grid.index(((i + o) % n + n) % n, j)
                                            : grid.index(i, ((j + o) % n + n) % n);
        s.row(grid.index(i, j)) = field.row(src);
      }
    }
    return s;
  };
  // Antisymmetric pairs are accumulated as c * (f[i+o] - f[i-o]) so that
  // constants cancel exactly.
  Field out = Field::Zero(field.rows(), field.cols());
  std::vector<bool> used(stencil.offsets.size(), false);
  for (std::size_t k = 0; k < stencil.offsets.size(); ++k) {
    if (used[k]) continue;
    used[k] = true;
    const int o = stencil.offsets[k];
    const double c = stencil.coeffs[k];
    std::size_t partner = stencil.offsets.size();
    for (std::size_t q = k + 1; q < stencil.offsets.size(); ++q) {
      if (!used[q] && o != 0 && stencil.offsets[q] == -o && stencil.coeffs[q] == -c) partner = q;
    }
    if (partner < stencil.offsets.size()) {
      used[partner] = true;
      out += c * (shifted(o) - shifted(-o));
    } else {
      out += c * shifted(o);
    }
  }
  if (h != 1.0) out /= h;
  return out;
}

Field fd_derivative(const Field& field, GridAxis axis, int order, const Grid& grid) {
  const double h = axis == GridAxis::X ? grid.dx() : grid.dy();
  return apply_stencil(field, central_difference(order), axis, h, grid);
}

Field savitzky_golay_smooth(const Field& field, int window, int degree, const Grid& grid) {
  const Stencil s = savitzky_golay_stencil(window, degree);
  Field out = apply_stencil(field, s, GridAxis::X, 1.0, grid);
  if (grid.dims() == 2) out = apply_stencil(out, s, GridAxis::Y, 1.0, grid);
  return out;
}

std::vector<Field> richardson_time_derivative(std::span<const Field> states, double dt) {
  const std::size_t nt = states.size();
  if (nt < 5) throw DomainError("Richardson time derivative needs at least 5 time samples, got " + std::to_string(nt));
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const double scale = 1.0 / (12.0 * dt);
  auto u = [&](std::size_t t) -> const Field& { return states[t]; };
  std::vector<Field> out(nt);
  out[0] = scale * (-25.0 * u(0) + 48.0 * u(1) - 36.0 * u(2) + 16.0 * u(3) - 3.0 * u(4));
  out[1] = scale * (-3.0 * u(0) - 10.0 * u(1) + 18.0 * u(2) - 6.0 * u(3) + u(4));
  for (std::size_t t = 2; t + 2 < nt; ++t) out[t] = scale * (u(t - 2) - 8.0 * u(t - 1) + 8.0 * u(t + 1) - u(t + 2));
  const std::size_t e = nt - 1;
  out[e - 1] = scale * (3.0 * u(e) + 10.0 * u(e - 1) - 18.0 * u(e - 2) + 6.0 * u(e - 3) - u(e - 4));
  out[e] = scale * (25.0 * u(e) - 48.0 * u(e - 1) + 36.0 * u(e - 2) - 16.0 * u(e - 3) + 3.0 * u(e - 4));
  return out;
}

// ---------------------------------------------------------------------------

PdeSystem PdeSystem::advection() {
  PdeSystem s;
  s.kind = PdeKind::Advection;
  s.j.order = 2;
  s.j.smooth = false;
  return s;
}

PdeSystem PdeSystem::kdv() {
  PdeSystem s;
  s.kind = PdeKind::Kdv;
  s.j.order = 8;
  s.j.smooth = true;
  return s;
}

PdeSystem PdeSystem::swe(double gravity) {
  PdeSystem s;
  s.kind = PdeKind::Swe;
  s.gravity = gravity;
  s.j.order = 8;
  s.j.smooth = true;
  return s;
}

PdeSystem PdeSystem::from_name(const std::string& name) {
  if (name == "advection") return advection();
  if (name == "kdv") return kdv();
  if (name == "swe") return swe();
  throw ConfigError("unknown pde '" + name + "' (expected advection, kdv or swe)");
}

std::string PdeSystem::name() const {
  switch (kind) {
    case PdeKind::Advection: return "advection";
    case PdeKind::Kdv: return "kdv";
    case PdeKind::Swe: return "swe";
  }
  return "?";
}

namespace {

void check_state(const PdeSystem& system, const Field& state, const Grid& grid) {
  if (state.cols() != system.channels()) {
    throw ShapeError(system.name() + " expects " + std::to_string(system.channels()) + " channel(s), got " +
                     std::to_string(state.cols()));
  }
  if (state.rows() != grid.points()) throw ShapeError("state does not match grid");
  if (grid.dims() != system.dims()) throw ShapeError(system.name() + " expects a " + std::to_string(system.dims()) + "D grid");
}

void check_depth(const Field& state) {
  if ((state.col(2).array() <= 0.0).any()) throw DomainError("shallow water depth h must be positive everywhere");
}

}  // namespace

double hamiltonian_value(const PdeSystem& system, const Field& state, const Grid& grid) {
  check_state(system, state, grid);
  const Quadrature quad = grid_quadrature(grid);
  switch (system.kind) {
    case PdeKind::Advection:
      return integrate(-0.5 * state.array().square().matrix(), quad, grid);
    case PdeKind::Kdv: {
      // -(1/6) u^3 + (1/2) u_x^2: integrated-by-parts form of -(1/6)u^3 - u u_xx.
      const Field ux = fd_derivative(state, GridAxis::X, system.j.order, grid);
      const Field density = (-state.array().cube() / 6.0 + 0.5 * ux.array().square()).matrix();
      return integrate(density, quad, grid);
    }
    case PdeKind::Swe: {
      check_depth(state);
      const auto vx = state.col(0).array();
      const auto vy = state.col(1).array();
      const auto h = state.col(2).array();
      const Field density = (0.5 * h * (vx.square() + vy.square()) + 0.5 * system.gravity * h.square()).matrix();
      return integrate(density, quad, grid);
    }
  }
  return 0.0;
}

Field analytic_functional_derivative(const PdeSystem& system, const Field& state, const Grid& grid) {
  check_state(system, state, grid);
  switch (system.kind) {
    case PdeKind::Advection:
      return -state;
    case PdeKind::Kdv: {
      const Field ux = fd_derivative(state, GridAxis::X, system.j.order, grid);
      const Field uxx = fd_derivative(ux, GridAxis::X, system.j.order, grid);
      return (-0.5 * state.array().square()).matrix() - uxx;
    }
    case PdeKind::Swe: {
      const auto vx = state.col(0).array();
      const auto vy = state.col(1).array();
      const auto h = state.col(2).array();
      Field d(state.rows(), 3);
      d.col(0) = (h * vx).matrix();
      d.col(1) = (h * vy).matrix();
      d.col(2) = (0.5 * (vx.square() + vy.square()) + system.gravity * h).matrix();
      return d;
    }
  }
  return state;
}

namespace {

Field vorticity_factor(const PdeSystem& system, const Field& state, const Grid& grid) {
  const Field vx = state.col(0);
  const Field vy = state.col(1);
  const int order = system.j.vorticity_order;
  Field q = fd_derivative(vx, GridAxis::Y, order, grid) - fd_derivative(vy, GridAxis::X, order, grid);
  if (system.j.swe.potential_vorticity) {
    check_depth(state);
    q = q.cwiseQuotient(state.col(2));
  }
  return system.j.swe.rotation_sign * q;
}

Field smooth_if_enabled(const PdeSystem& system, Field f, const Grid& grid) {
  if (!system.j.smooth) return f;
  return savitzky_golay_smooth(f, system.j.sg_window, system.j.sg_degree, grid);
}

}  // namespace

Field apply_J(const PdeSystem& system, const Field& derivative, const Field& state, const Grid& grid) {
  if (!grid.periodic()) throw ConfigError("unsupported boundary: the J operator is implemented for periodic grids only");
  check_state(system, derivative, grid);
  const int order = system.j.order;
  if (system.kind != PdeKind::Swe) {
    return smooth_if_enabled(system, fd_derivative(derivative, GridAxis::X, order, grid), grid);
  }
  check_state(system, state, grid);
  const Field q = vorticity_factor(system, state, grid);
  const double s = system.j.swe.derivative_sign;
  const Field d0 = derivative.col(0);
  const Field d1 = derivative.col(1);
  const Field d2 = derivative.col(2);
  Field out(derivative.rows(), 3);
  out.col(0) = -q.cwiseProduct(d1) + s * fd_derivative(d2, GridAxis::X, order, grid);
  out.col(1) = q.cwiseProduct(d0) + s * fd_derivative(d2, GridAxis::Y, order, grid);
  out.col(2) = s * (fd_derivative(d0, GridAxis::X, order, grid) + fd_derivative(d1, GridAxis::Y, order, grid));
  return smooth_if_enabled(system, std::move(out), grid);
}

// ---------------------------------------------------------------------------

namespace {

Var stencil_var(Var g, const Stencil& stencil, GridAxis axis, double h, const Grid& grid, int batch) {
  require_periodic_axis(grid, axis);
  Var acc;
  for (std::size_t k = 0; k < stencil.offsets.size(); ++k) {
    const int o = stencil.offsets[k];
    Var shifted = o == 0 ? g
                         : ad::permute_rows(g, shift_permutation(grid, batch, axis == GridAxis::X ? o : 0,
                                                                 axis == GridAxis::Y ? o : 0));
    Var term = ad::affine(shifted, stencil.coeffs[k] / h, 0.0);
    acc = acc.valid() ? ad::add(acc, term) : term;
  }
  return acc;
}

Var fd_var(Var g, GridAxis axis, int order, const Grid& grid, int batch) {
  const double h = axis == GridAxis::X ? grid.dx() : grid.dy();
  return stencil_var(g, central_difference(order), axis, h, grid, batch);
}

Var smooth_var(const PdeSystem& system, Var g, const Grid& grid, int batch) {
  if (!system.j.smooth) return g;
  const Stencil s = savitzky_golay_stencil(system.j.sg_window, system.j.sg_degree);
  Var out = stencil_var(g, s, GridAxis::X, 1.0, grid, batch);
  if (grid.dims() == 2) out = stencil_var(out, s, GridAxis::Y, 1.0, grid, batch);
  return out;
}

}  // namespace

Var apply_J(const PdeSystem& system, Var derivative, std::span<const Field> states, const Grid& grid) {
  if (!grid.periodic()) throw ConfigError("unsupported boundary: the J operator is implemented for periodic grids only");
  const int batch = static_cast<int>(states.size());
  if (derivative.rows() != static_cast<Eigen::Index>(batch) * grid.points() || derivative.cols() != system.channels()) {
    throw ShapeError("packed derivative does not match batch, grid and channels");
  }
  const int order = system.j.order;
  if (system.kind != PdeKind::Swe) return smooth_var(system, fd_var(derivative, GridAxis::X, order, grid, batch), grid, batch);

  ad::Tape& tape = *derivative.tape();
  const int n = grid.points();
  Array q(static_cast<Eigen::Index>(batch) * n, 1);
  for (int b = 0; b < batch; ++b) {
    check_state(system, states[static_cast<std::size_t>(b)], grid);
    q.middleRows(static_cast<Eigen::Index>(b) * n, n) = vorticity_factor(system, states[static_cast<std::size_t>(b)], grid);
  }
  const Var qv = tape.constant(std::move(q));
  const double s = system.j.swe.derivative_sign;
  const Var d0 = ad::select_cols(derivative, 0, 1);
  const Var d1 = ad::select_cols(derivative, 1, 1);
  const Var d2 = ad::select_cols(derivative, 2, 1);
  const Var c0 = ad::add(ad::affine(ad::mul(qv, d1), -1.0, 0.0), ad::affine(fd_var(d2, GridAxis::X, order, grid, batch), s, 0.0));
  const Var c1 = ad::add(ad::mul(qv, d0), ad::affine(fd_var(d2, GridAxis::Y, order, grid, batch), s, 0.0));
  const Var c2 = ad::affine(ad::add(fd_var(d0, GridAxis::X, order, grid, batch), fd_var(d1, GridAxis::Y, order, grid, batch)), s, 0.0);
  return smooth_var(system, ad::concat_cols({c0, c1, c2}), grid, batch);
}

}  // namespace nf
