#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nf/errors.hpp"
#include "nf/functional.hpp"

namespace ad = nf::ad;
using nf::Array;
using nf::Field;
using nf::Grid;

namespace {

nf::FunctionalModel make(nf::ModelKind kind, const Grid& g, int channels = 1, std::uint64_t seed = 0) {
  nf::ModelSpec spec;
  spec.kind = kind;
  spec.dims = g.dims();
  spec.channels = channels;
  spec.width = 8;
  spec.depth = 2;
  spec.seed = seed;
  if (kind == nf::ModelKind::BaselineMlp) spec.input_points = g.points();
  spec.normalize_to(g);
  return nf::FunctionalModel::create(spec);
}

Field random_field(int n, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Field f(n, c);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = d(rng);
  return f;
}

}  // namespace

TEST_SUITE("functional") {
  TEST_CASE("kernel forced to 1 integrates u = 1 on [0, 1] to 1") {
    const Grid g = Grid::line(33, 0.0, 1.0, false);
    nf::FunctionalModel m = make(nf::ModelKind::MlpLinear, g);
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      nf::Parameter& p = m.parameters()[i];
      p.value.setConstant(p.name == "mlp.out.bias" ? 1.0 : 0.0);
    }
    CHECK(nf::evaluate_functional(m, Field::Ones(33, 1), g) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((nf::functional_derivative(m, Field::Ones(33, 1), g).array() - 1.0).abs().maxCoeff() < 1e-14);
  }

  TEST_CASE("kernel x^2 with u = 1 on [-1, 1] gives 2/3") {
    const Grid g = Grid::line(201, -1.0, 1.0, false);
    ad::Tape t;
    Array kappa(201, 1);
    for (int i = 0; i < 201; ++i) kappa(i, 0) = g.x(i) * g.x(i);
    ad::Var u = t.variable(Array::Ones(201, 1));
    const double h = nf::ikf_sum(t.constant(kappa), u, nf::cell_weights(g), 1).scalar();
    CHECK(std::abs(h - 2.0 / 3.0) < 1e-4);
  }

  TEST_CASE("kernel c*u gives de-weighted derivative 2 c u") {
    const Grid g = Grid::line(40, -1.0, 1.0, false);
    const double c = 0.8;
    const Field u0 = random_field(40, 1, 3);
    ad::Tape t;
    ad::Var u = t.variable(u0);
    const Array w = nf::cell_weights(g);
    ad::Var h = nf::ikf_sum(c * u, u, w, 1);
    const Array g_raw = t.backward(h)[u];
    const Array deweighted = g_raw.cwiseQuotient(w);
    CHECK((deweighted - 2.0 * c * u0).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("linear kernel derivative equals the kernel samples for any u") {
    const Grid g = Grid::line(25, -1.0, 1.0, false);
    const nf::FunctionalModel m = make(nf::ModelKind::MlpLinear, g, 1, 4);
    const Field d1 = nf::functional_derivative(m, random_field(25, 1, 1), g);
    const Field d2 = nf::functional_derivative(m, random_field(25, 1, 2), g);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("batched evaluation agrees with single-sample evaluation") {
    const Grid g = Grid::line(32, 0.0, 4.0, true);
    for (nf::ModelKind kind : {nf::ModelKind::MlpNonlinear, nf::ModelKind::SirenFilmLocal,
                               nf::ModelKind::SirenFilmGlobal, nf::ModelKind::BaselineMlp}) {
      CAPTURE(nf::to_string(kind));
      const nf::FunctionalModel m = make(kind, g);
      const std::vector<Field> fields = {random_field(32, 1, 1), random_field(32, 1, 2), random_field(32, 1, 3)};
      const nf::BatchEvaluation be = nf::evaluate_batch(m, fields, g);
      for (std::size_t b = 0; b < fields.size(); ++b) {
        CHECK(be.values[b] == doctest::Approx(nf::evaluate_functional(m, fields[b], g)).epsilon(1e-12));
        CHECK((be.derivatives[b] - nf::functional_derivative(m, fields[b], g)).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }

  TEST_CASE("pack and unpack are inverse") {
    const Grid g = Grid::plane(6, 4, 0.0, 1.0, 0.0, 1.0, true, true);
    const nf::FunctionalModel m = make(nf::ModelKind::SirenFilmLocal, g, 3);
    const std::vector<Field> fields = {random_field(24, 3, 5), random_field(24, 3, 6)};
    const Array packed = m.pack(fields, g);
    CHECK(packed.rows() == 48);
    const std::vector<Field> back = m.unpack(packed, 2, g);
    CHECK(back[0] == fields[0]);
    CHECK(back[1] == fields[1]);
  }

  TEST_CASE("multi-channel 2D derivative passes the directional check") {
    const Grid g = Grid::plane(8, 8, 0.0, 1.0, 0.0, 1.0, true, true);
    const nf::FunctionalModel m = make(nf::ModelKind::SirenFilmGlobal, g, 3, 2);
    const Field u = random_field(64, 3, 7), v = random_field(64, 3, 8);
    const double eps = 1e-6;
    const double fd = (nf::evaluate_functional(m, u + eps * v, g) - nf::evaluate_functional(m, u - eps * v, g)) / (2 * eps);
    const double exact = nf::inner_product(nf::functional_derivative(m, u, g), v, nf::grid_quadrature(g), g);
    CHECK(std::abs(fd - exact) < 1e-6 * std::max(1.0, std::abs(exact)));
  }

  TEST_CASE("shape and grid errors") {
    const Grid g = Grid::line(16, 0.0, 1.0, false);
    const nf::FunctionalModel m = make(nf::ModelKind::MlpNonlinear, g);
    CHECK_THROWS_AS((void)nf::evaluate_functional(m, Field::Ones(15, 1), g), nf::ShapeError);
    const nf::FunctionalModel base = make(nf::ModelKind::BaselineMlp, g);
    CHECK_THROWS_AS((void)nf::evaluate_functional(base, Field::Ones(20, 1), Grid::line(20, 0.0, 1.0, false)),
                    nf::ShapeError);
    const Grid periodic = Grid::line(16, 0.0, 1.0, true);
    const nf::FunctionalModel global = make(nf::ModelKind::SirenFilmGlobal, periodic);
    CHECK_THROWS_AS((void)nf::evaluate_functional(global, Field::Ones(16, 1), g), nf::ConfigError);
  }

  TEST_CASE("model kind names round trip") {
    for (nf::ModelKind k : {nf::ModelKind::MlpLinear, nf::ModelKind::MlpNonlinear, nf::ModelKind::SirenFilmLocal,
                            nf::ModelKind::SirenFilmGlobal, nf::ModelKind::BaselineMlp}) {
      CHECK(nf::model_kind_from_string(nf::to_string(k)) == k);
    }
    CHECK_THROWS_AS((void)nf::model_kind_from_string("fno"), nf::ConfigError);
  }
}
