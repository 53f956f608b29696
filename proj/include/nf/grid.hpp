#pragma once

#include <array>
#include <vector>

#include "nf/array.hpp"

namespace nf {

/// Uniform 1D or 2D grid. Periodic axes exclude the duplicate endpoint
/// (x_i = lo + i*dx with dx = (hi - lo)/n); non-periodic axes include both
/// endpoints (dx = (hi - lo)/(n - 1)). Points are flattened y-major, x fastest.
class Grid {
 public:
  static Grid line(int nx, double x_lo, double x_hi, bool periodic);
  static Grid plane(int nx, int ny, double x_lo, double x_hi, double y_lo, double y_hi, bool periodic_x,
                    bool periodic_y);

  [[nodiscard]] int dims() const { return ny_ > 1 || two_d_ ? 2 : 1; }
  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] int points() const { return nx_ * ny_; }
  [[nodiscard]] double dx() const { return dx_; }
  [[nodiscard]] double dy() const { return dy_; }
  /// Area element of one cell: dx in 1D, dx*dy in 2D.
  [[nodiscard]] double cell() const { return dims() == 2 ? dx_ * dy_ : dx_; }
  [[nodiscard]] bool periodic_x() const { return periodic_x_; }
  [[nodiscard]] bool periodic_y() const { return periodic_y_; }
  [[nodiscard]] bool periodic() const { return periodic_x_ && (dims() == 1 || periodic_y_); }
  [[nodiscard]] double x_lo() const { return x_lo_; }
  [[nodiscard]] double x_hi() const { return x_hi_; }
  [[nodiscard]] double y_lo() const { return y_lo_; }
  [[nodiscard]] double y_hi() const { return y_hi_; }
  [[nodiscard]] double length_x() const { return x_hi_ - x_lo_; }
  [[nodiscard]] double length_y() const { return y_hi_ - y_lo_; }

  [[nodiscard]] double x(int i) const { return x_lo_ + i * dx_; }
  [[nodiscard]] double y(int j) const { return y_lo_ + j * dy_; }
  [[nodiscard]] int index(int i, int j = 0) const { return j * nx_ + i; }

  /// points x dims matrix of raw coordinates.
  [[nodiscard]] Array coordinates() const;

  bool operator==(const Grid&) const = default;

 private:
  int nx_ = 0;
  int ny_ = 1;
  bool two_d_ = false;
  double x_lo_ = 0.0, x_hi_ = 1.0, y_lo_ = 0.0, y_hi_ = 0.0;
  double dx_ = 1.0, dy_ = 1.0;
  bool periodic_x_ = false, periodic_y_ = false;
};

/// Per-point quadrature multipliers mu_i; the integral is sum v_i mu_i * cell.
struct Quadrature {
  std::vector<double> weights;
  const char* rule = "trapezoid";
};

/// Trapezoid weights on n points: endpoints 1/2 and interior 1, or all 1 when periodic.
Quadrature trapezoid_weights(int n, bool periodic);

/// Tensor-product trapezoid rule for a grid (1D or 2D).
Quadrature grid_quadrature(const Grid& grid);

/// sum_i values_i mu_i * cell, summed over all channels.
double integrate(const Field& values, const Quadrature& quad, const Grid& grid);

/// Quadrature inner product <a, b> over all channels.
double inner_product(const Field& a, const Field& b, const Quadrature& quad, const Grid& grid);

/// mu_i * cell as a points x 1 column.
Array cell_weights(const Grid& grid);

}  // namespace nf
