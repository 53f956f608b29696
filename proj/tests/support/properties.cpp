#include "properties.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "nf/autodiff.hpp"
#include "nf/data.hpp"
#include "nf/functional.hpp"
#include "nf/grid.hpp"
#include "nf/pde.hpp"
#include "nf/simulate.hpp"
#include "oracles.hpp"

namespace props {

namespace ad = nf::ad;
using nf::Array;
using nf::Field;
using nf::Grid;

namespace {

Array random_array(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Array a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = d(rng);
  return a;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// Composite of every primitive; leaves[0..3] = X, W1, b1, W2.
ad::Var composite(ad::Tape& tape, const std::vector<Array>& leaves, const Array& c, std::vector<ad::Var>* vars) {
  std::vector<ad::Var> v;
  for (const Array& a : leaves) v.push_back(tape.variable(a, true));
  if (vars) *vars = v;
  ad::Var h = ad::sin(ad::matmul(v[0], v[1]) + v[2]);
  ad::Var hh = h * h;
  ad::Var g = ad::tanh(ad::affine(hh, 0.7, 0.1));
  ad::Var q = ad::pow(ad::affine(hh, 1.0, 1.0), 1.5);
  ad::Var y = ad::matmul(ad::concat_cols({g, q}), v[3]);
  auto perm = std::make_shared<const ad::Permutation>(std::vector<int>{3, 0, 2, 1});
  ad::Var z = ad::permute_rows(y, perm) * tape.constant(c);
  ad::Var col = ad::sum(y, ad::Axis::Rows);
  ad::Var row = ad::sum(y, ad::Axis::Cols);
  ad::Var gram = ad::matmul(h, h, true, false);
  ad::Var xt = ad::matmul(v[0], v[1], false, false);
  ad::Var xtt = ad::matmul(xt, v[1], false, true);
  return ad::sum(z) + ad::mean_square(y) + ad::sum(col * col) + ad::sum(ad::gelu(row)) + 0.1 * ad::sum(gram) +
         0.05 * ad::sum(ad::sin(xtt));
}

}  // namespace

Result autodiff_vs_fd(int seeds) {
  Result r;
  r.bound = 1e-6;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s));
    std::vector<Array> leaves = {random_array(rng, 4, 3), random_array(rng, 3, 5), random_array(rng, 1, 5),
                                 random_array(rng, 10, 2)};
    const Array c = random_array(rng, 4, 2);
    ad::Tape tape;
    std::vector<ad::Var> vars;
    ad::Var f = composite(tape, leaves, c, &vars);
    const ad::Gradients grads = tape.backward(f);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      auto fk = [&](const Array& x) {
        std::vector<Array> l = leaves;
        l[k] = x;
        ad::Tape t;
        return composite(t, l, c, nullptr).scalar();
      };
      const Array fd = oracle::fd_gradient(fk, leaves[k]);
      r.measured = std::max(r.measured, oracle::relative_error(grads[vars[k]], fd));
    }
  }
  r.pass = r.measured < r.bound;
  r.detail = "max relative error over " + std::to_string(seeds) + " seeds";
  return r;
}

Result trapezoid_order() {
  std::vector<double> errors;
  for (int n : {33, 65, 129}) {
    const Grid g = Grid::line(n, 0.0, 1.0, false);
    Field v(n, 1);
    for (int i = 0; i < n; ++i) v(i, 0) = std::sin(g.x(i));
    errors.push_back(std::abs(nf::integrate(v, nf::grid_quadrature(g), g) - (1.0 - std::cos(1.0))));
  }
  Result r;
  r.bound = 0.1;
  std::string orders;
  for (double p : oracle::observed_orders(errors)) {
    r.measured = std::max(r.measured, std::abs(p - 2.0));
    orders += fmt(p) + " ";
  }
  r.pass = r.measured <= r.bound;
  r.detail = "observed orders " + orders + "(|p - 2| <= 0.1)";
  return r;
}

Result ab2_order() {
  Result r;
  r.bound = 0.2;
  std::string orders;
  for (double lambda : {-1.0, -5.0}) {
    std::vector<double> errors;
    for (int steps : {40, 80, 160, 320}) {
      const double dt = 1.0 / steps;
      nf::IntegratorState state;
      Field u = Field::Constant(1, 1, 1.0);
      for (int k = 0; k < steps; ++k) u = nf::ab2_step(u, lambda * u, state, dt);
      errors.push_back(std::abs(u(0, 0) - std::exp(lambda)));
    }
    for (double p : oracle::observed_orders(errors)) {
      r.measured = std::max(r.measured, std::abs(p - 2.0));
      orders += fmt(p) + " ";
    }
  }
  r.pass = r.measured <= r.bound;
  r.detail = "observed orders " + orders + "for lambda -1, -5 (|p - 2| <= 0.2)";
  return r;
}

Result fd_stencils() {
  Result r;
  r.bound = 0.5;
  double coeff_err = 0.0;
  bool constants_exact = true;
  std::string orders;
  for (int m = 1; m <= 4; ++m) {
    const nf::Stencil s = nf::central_difference(2 * m);
    const std::vector<double> ref = oracle::taylor_first_derivative(m);
    for (std::size_t k = 0; k < s.offsets.size(); ++k) {
      coeff_err = std::max(coeff_err, std::abs(s.coeffs[k] - ref[static_cast<std::size_t>(s.offsets[k] + m)]));
    }
    const Grid g = Grid::line(64, 0.0, 3.0, true);
    const Field c = Field::Constant(64, 1, 3.7);
    constants_exact = constants_exact && (nf::fd_derivative(c, nf::GridAxis::X, 2 * m, g).array() == 0.0).all();

    std::vector<double> errors;
    for (int n : {32, 64}) {
      const Grid gn = Grid::line(n, 0.0, 1.0, true);
      Field u(n, 1), du(n, 1);
      for (int i = 0; i < n; ++i) {
        const double x = gn.x(i);
        u(i, 0) = std::exp(std::sin(2.0 * std::numbers::pi * x));
        du(i, 0) = 2.0 * std::numbers::pi * std::cos(2.0 * std::numbers::pi * x) * u(i, 0);
      }
      errors.push_back((nf::fd_derivative(u, nf::GridAxis::X, 2 * m, gn) - du).cwiseAbs().maxCoeff());
    }
    const double p = oracle::observed_orders(errors)[0];
    orders += fmt(p) + " ";
    r.measured = std::max(r.measured, std::max(0.0, 2.0 * m - p));
  }
  r.pass = coeff_err < 1e-14 && constants_exact && r.measured <= r.bound;
  r.detail = "orders " + orders + "coeff err " + fmt(coeff_err) + (constants_exact ? ", constants exact" : ", constants NOT exact");
  return r;
}

Result deweighted_identity() {
  Result r;
  r.bound = 1e-12;
  for (bool periodic : {false, true}) {
    nf::ModelSpec spec;
    spec.kind = nf::ModelKind::MlpLinear;
    spec.width = 8;
    spec.depth = 2;
    spec.seed = 7;
    const Grid g = Grid::line(40, -1.0, 1.0, periodic);
    spec.normalize_to(g);
    const nf::FunctionalModel model = nf::FunctionalModel::create(spec);
    std::mt19937_64 rng(3);
    const Field u = random_array(rng, 40, 1);
    const Field d = nf::functional_derivative(model, u, g);
    ad::Tape tape;
    nf::BoundParameters p(tape, model.parameters(), false);
    const Array kappa = model.kernel(p, tape.constant(u), 1, g).value();
    r.measured = std::max(r.measured, (d - kappa).cwiseAbs().maxCoeff() / std::max(1.0, kappa.cwiseAbs().maxCoeff()));
  }
  r.pass = r.measured <= r.bound;
  r.detail = "max |dH/du - kappa| relative, trapezoid and periodic grids";
  return r;
}

Result directional_derivative(int seeds) {
  Result r;
  r.bound = 1e-4;
  const Grid g = Grid::line(64, 0.0, 2.0 * std::numbers::pi, true);
  for (nf::ModelKind kind : {nf::ModelKind::MlpNonlinear, nf::ModelKind::SirenFilmLocal, nf::ModelKind::SirenFilmGlobal}) {
    for (int s = 0; s < seeds; ++s) {
      nf::ModelSpec spec;
      spec.kind = kind;
      spec.width = 12;
      spec.depth = 2;
      spec.seed = static_cast<std::uint64_t>(s);
      spec.normalize_to(g);
      const nf::FunctionalModel model = nf::FunctionalModel::create(spec);
      std::mt19937_64 rng(100 + static_cast<std::uint64_t>(s));
      std::uniform_real_distribution<double> a(-1.0, 1.0);
      Field u(64, 1), v(64, 1);
      const double a1 = a(rng), a2 = a(rng), b1 = a(rng), b2 = a(rng);
      for (int i = 0; i < 64; ++i) {
        const double x = g.x(i);
        u(i, 0) = a1 * std::sin(x) + a2 * std::cos(2.0 * x);
        v(i, 0) = b1 * std::cos(x) + b2 * std::sin(3.0 * x);
      }
      const double eps = 1e-6;
      const double fd = (nf::evaluate_functional(model, u + eps * v, g) - nf::evaluate_functional(model, u, g)) / eps;
      const double exact = nf::inner_product(nf::functional_derivative(model, u, g), v, nf::grid_quadrature(g), g);
      r.measured = std::max(r.measured, std::abs(fd - exact) / std::max(std::abs(exact), 1e-8));
    }
  }
  r.pass = r.measured < r.bound;
  r.detail = "max relative gap over MLP and FiLM-SIREN kernels";
  return r;
}

Result richardson_t2() {
  const double dt = 0.1;
  std::vector<Field> states;
  for (int k = 0; k < 12; ++k) states.push_back(Field::Constant(3, 1, (k * dt) * (k * dt)));
  const std::vector<Field> d = nf::richardson_time_derivative(states, dt);
  Result r;
  r.bound = 1e-12;
  for (int k = 0; k < 12; ++k) r.measured = std::max(r.measured, (d[static_cast<std::size_t>(k)].array() - 2.0 * k * dt).abs().maxCoeff());
  r.pass = r.measured <= r.bound;
  r.detail = "max |d/dt t^2 - 2t| over all 12 samples";
  return r;
}

Result savitzky_golay_polynomials() {
  const nf::Stencil s = nf::savitzky_golay_stencil(7, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  Result r;
  r.bound = 1e-12;
  for (int trial = 0; trial < 50; ++trial) {
    const double c0 = d(rng), c1 = d(rng), c2 = d(rng), c3 = d(rng), x0 = d(rng), h = 0.1 + std::abs(d(rng));
    auto p = [&](double x) { return c0 + c1 * x + c2 * x * x + c3 * x * x * x; };
    double smoothed = 0.0;
    for (std::size_t k = 0; k < s.offsets.size(); ++k) smoothed += s.coeffs[k] * p(x0 + s.offsets[k] * h);
    r.measured = std::max(r.measured, std::abs(smoothed - p(x0)) / std::max(1.0, std::abs(p(x0))));
  }
  r.pass = r.measured <= r.bound;
  r.detail = "window 7, degree 3, 50 random cubics";
  return r;
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Result dataset_round_trip() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("nf-roundtrip-" + std::to_string(::getpid()));
  nf::AdvectionConfig cfg;
  cfg.nx = 32;
  cfg.nt = 7;
  cfg.samples = 3;
  cfg.seed = 5;
  const nf::Dataset ds = nf::to_dataset(nf::gen_advection_dataset(cfg));
  nf::ToyConfig tc;
  tc.samples = 4;
  tc.points = 20;
  const nf::Dataset toy = nf::to_dataset(nf::gen_toy_dataset(tc));
  bool same = true;
  for (const nf::Dataset* src : {&ds, &toy}) {
    nf::write_dataset(*src, root / "a");
    const nf::Dataset back = nf::read_dataset(root / "a");
    same = same && back.manifest.to_json() == src->manifest.to_json() && back.samples.size() == src->samples.size();
    for (std::size_t n = 0; same && n < back.samples.size(); ++n) {
      for (std::size_t t = 0; t < back.samples[n].states.size(); ++t) {
        const Field& a = back.samples[n].states[t];
        const Field& b = src->samples[n].states[t];
        same = same && a.size() == b.size() &&
               std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
      }
    }
    nf::write_dataset(back, root / "b");
    same = same && slurp(root / "a" / "data.bin") == slurp(root / "b" / "data.bin") &&
           slurp(root / "a" / "manifest.json") == slurp(root / "b" / "manifest.json");
  }
  fs::remove_all(root);
  Result r;
  r.pass = same;
  r.measured = same ? 0.0 : 1.0;
  r.detail = same ? "bitwise identical (advection and toy)" : "round trip changed data";
  return r;
}

}  // namespace props
