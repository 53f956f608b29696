#include "nf/grid.hpp"

#include <string>

#include "nf/errors.hpp"

namespace nf {

namespace {

double spacing(int n, double lo, double hi, bool periodic) {
  if (n < 2) throw DomainError("grid needs at least 2 points per axis, got " + std::to_string(n));
  if (!(hi > lo)) throw DomainError("grid bounds must satisfy lo < hi");
  return periodic ? (hi - lo) / n : (hi - lo) / (n - 1);
}

}  // namespace

Grid Grid::line(int nx, double x_lo, double x_hi, bool periodic) {
  Grid g;
  g.dx_ = spacing(nx, x_lo, x_hi, periodic);
  g.nx_ = nx;
  g.ny_ = 1;
  g.x_lo_ = x_lo;
  g.x_hi_ = x_hi;
  g.dy_ = 1.0;
  g.periodic_x_ = periodic;
  return g;
}

Grid Grid::plane(int nx, int ny, double x_lo, double x_hi, double y_lo, double y_hi, bool periodic_x,
                 bool periodic_y) {
  Grid g;
  g.dx_ = spacing(nx, x_lo, x_hi, periodic_x);
  g.dy_ = spacing(ny, y_lo, y_hi, periodic_y);
  g.two_d_ = true;
  g.nx_ = nx;
  g.ny_ = ny;
  g.x_lo_ = x_lo;
  g.x_hi_ = x_hi;
  g.y_lo_ = y_lo;
  g.y_hi_ = y_hi;
  g.periodic_x_ = periodic_x;
  g.periodic_y_ = periodic_y;
  return g;
}

Array Grid::coordinates() const {
  Array c(points(), dims());
  for (int j = 0; j < ny_; ++j) {
    for (int i = 0; i < nx_; ++i) {
      c(index(i, j), 0) = x(i);
      if (dims() == 2) c(index(i, j), 1) = y(j);
    }
  }
  return c;
}

Quadrature trapezoid_weights(int n, bool periodic) {
  if (n < 2) throw DomainError("trapezoid_weights: n must be >= 2, got " + std::to_string(n));
  Quadrature q;
  q.weights.assign(static_cast<std::size_t>(n), 1.0);
  if (!periodic) {
    q.weights.front() = 0.5;
    q.weights.back() = 0.5;
  }
  return q;
}

Quadrature grid_quadrature(const Grid& grid) {
  Quadrature qx = trapezoid_weights(grid.nx(), grid.periodic_x());
  if (grid.dims() == 1) return qx;
  Quadrature qy = trapezoid_weights(grid.ny(), grid.periodic_y());
  Quadrature q;
  q.weights.resize(static_cast<std::size_t>(grid.points()));
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      q.weights[static_cast<std::size_t>(grid.index(i, j))] =
          qx.weights[static_cast<std::size_t>(i)] * qy.weights[static_cast<std::size_t>(j)];
    }
  }
  return q;
}

double integrate(const Field& values, const Quadrature& quad, const Grid& grid) {
  if (values.rows() != grid.points() || static_cast<Eigen::Index>(quad.weights.size()) != values.rows()) {
    throw ShapeError("integrate: field has " + std::to_string(values.rows()) + " points, grid has " +
                     std::to_string(grid.points()) + ", quadrature has " + std::to_string(quad.weights.size()));
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < values.rows(); ++r) total += values.row(r).sum() * quad.weights[static_cast<std::size_t>(r)];
  return total * grid.cell();
}

double inner_product(const Field& a, const Field& b, const Quadrature& quad, const Grid& grid) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("inner_product: shape mismatch");
  return integrate(a.cwiseProduct(b), quad, grid);
}

Array cell_weights(const Grid& grid) {
  const Quadrature q = grid_quadrature(grid);
  Array w(grid.points(), 1);
  for (int r = 0; r < grid.points(); ++r) w(r, 0) = q.weights[static_cast<std::size_t>(r)] * grid.cell();
  return w;
}

}  // namespace nf
