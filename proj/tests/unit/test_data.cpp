#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "nf/data.hpp"
#include "nf/errors.hpp"
#include "nf/simulate.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nf::Field;
using nf::Grid;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("nf-data-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nf::AdvectionConfig small_adv() {
  nf::AdvectionConfig c;
  c.nx = 32;
  c.nt = 9;
  c.t_end = 1.0;
  c.samples = 3;
  c.seed = 2;
  return c;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("closed-form toy values") {
    using nf::ToyFunctional;
    CHECK(nf::toy_functional_value({0, 0, 1}, ToyFunctional::Linear, -1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(nf::toy_functional_value({0, 0, 1}, ToyFunctional::Nonlinear, -1, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(std::abs(nf::toy_functional_value({0, 1, 0}, ToyFunctional::Linear, -1, 1)) < 1e-15);
    CHECK(std::abs(nf::toy_functional_value({0, 1, 0}, ToyFunctional::Nonlinear, -1, 1)) < 1e-15);
    CHECK(nf::toy_functional_value({1}, ToyFunctional::Linear, -2, 2) == doctest::Approx(16.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("closed-form labels agree with Simpson quadrature at M = 1000") {
    nf::ToyConfig c;
    c.samples = 20;
    for (nf::ToyFunctional f : {nf::ToyFunctional::Linear, nf::ToyFunctional::Nonlinear}) {
      c.functional = f;
      for (const nf::ToySample& s : nf::gen_toy_dataset(c).samples) {
        auto integrand = [&](double x) {
          const double u = nf::polynomial_value(s.coeffs, x);
          return f == nf::ToyFunctional::Linear ? u * x * x : u * u * u;
        };
        CHECK(std::abs(oracle::simpson(integrand, -1.0, 1.0, 1000) - s.label) < 1e-6);
      }
    }
  }

  TEST_CASE("toy defaults, fields and derivative labels") {
    const nf::ToyConfig c;
    CHECK(c.degree == 2);
    CHECK(c.coeff_lo == -1.0);
    CHECK(c.coeff_hi == 1.0);
    CHECK(c.points == 100);
    CHECK(c.samples == 100);
    nf::ToyConfig nl = c;
    nl.functional = nf::ToyFunctional::Nonlinear;
    const nf::ToyDataset lin = nf::gen_toy_dataset(c);
    const nf::ToyDataset non = nf::gen_toy_dataset(nl);
    CHECK(lin.samples.size() == 100);
    for (int i = 0; i < 100; i += 7) {
      const double x = lin.grid.x(i);
      CHECK(lin.samples[0].derivative(i, 0) == doctest::Approx(x * x));
      const double u = non.samples[3].u(i, 0);
      CHECK(u == doctest::Approx(nf::polynomial_value(non.samples[3].coeffs, x)));
      CHECK(non.samples[3].derivative(i, 0) == doctest::Approx(3.0 * u * u));
    }
    for (const auto& s : lin.samples)
      for (double a : s.coeffs) CHECK((a >= -1.0 && a <= 1.0));
  }

  TEST_CASE("OOD and Disc variants") {
    const nf::ToyConfig base;
    const nf::ToyVariants v = nf::gen_ood_variants(base, 10, 1);
    CHECK(v.ood.samples.size() == 10);
    for (const auto& s : v.ood.samples)
      for (double a : s.coeffs) CHECK((a >= 1.0 && a <= 3.0));
    CHECK(v.ood.grid == base.grid());
    CHECK(v.disc.grid.points() == 100);
    CHECK(v.disc.grid.x_lo() == -2.0);
    CHECK(v.disc.grid.x_hi() == 2.0);
    CHECK(v.disc.grid.dx() == doctest::Approx(2.0 * base.grid().dx()));
  }

  TEST_CASE("seeded generation is bitwise reproducible") {
    const nf::AdvectionDataset a = nf::gen_advection_dataset(small_adv());
    const nf::AdvectionDataset b = nf::gen_advection_dataset(small_adv());
    for (std::size_t n = 0; n < a.trajectories.size(); ++n) {
      for (std::size_t t = 0; t < a.trajectories[n].states.size(); ++t) {
        const Field& x = a.trajectories[n].states[t];
        CHECK(std::memcmp(x.data(), b.trajectories[n].states[t].data(), sizeof(double) * x.size()) == 0);
      }
    }
    nf::ToyConfig c;
    c.seed = 9;
    CHECK(nf::gen_toy_dataset(c).samples[5].coeffs == nf::gen_toy_dataset(c).samples[5].coeffs);
  }

  TEST_CASE("advection trajectories") {
    nf::AdvectionConfig c;
    c.samples = 6;
    c.nt = 5;
    c.t_end = 16.0;  // one full revolution at the last step
    const nf::AdvectionDataset ds = nf::gen_advection_dataset(c);
    const nf::PdeSystem adv = nf::PdeSystem::advection();
    const Grid g = c.grid();
    for (std::size_t n = 0; n < ds.trajectories.size(); ++n) {
      const nf::Trajectory& tr = ds.trajectories[n];
      double bound = 0.0;
      for (double a : ds.initial_conditions[n].amplitude) bound += std::abs(a);
      CHECK(bound <= 2.5);
      CHECK(tr.states[0].cwiseAbs().maxCoeff() <= bound + 1e-12);
      CHECK(tr.states.back() == tr.states.front());
      const double h0 = nf::hamiltonian_value(adv, tr.states[0], g);
      for (const Field& s : tr.states) CHECK(std::abs(nf::hamiltonian_value(adv, s, g) - h0) < 1e-10);
      for (int w : ds.initial_conditions[n].wavenumber) CHECK((w >= 1 && w <= 3));
    }
    // Grid-aligned translation: advancing by dx shifts the samples one cell.
    const nf::SineSeries& ic = ds.initial_conditions[0];
    const Field u0 = nf::advect_exact(ic, g, 0.3);
    const Field u1 = nf::advect_exact(ic, g, 0.3 + g.dx());
    for (int i = 0; i < g.points(); ++i) CHECK(std::abs(u1(i, 0) - u0((i + g.points() - 1) % g.points(), 0)) < 1e-12);
  }

  TEST_CASE("labels") {
    nf::AdvectionDataset ds = nf::gen_advection_dataset(small_adv());
    nf::Trajectory tr = ds.trajectories[0];
    nf::make_labels(tr, nf::PdeSystem::advection(), nf::LabelMode::Functional);
    for (std::size_t t = 0; t < tr.states.size(); ++t) CHECK(tr.labels[t] == -tr.states[t]);

    nf::make_labels(tr, nf::PdeSystem::advection(), nf::LabelMode::Temporal);
    const Grid g = tr.grid;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      Field ux(g.points(), 1);
      for (int i = 0; i < g.points(); ++i) ux(i, 0) = ds.initial_conditions[0].derivative(g.x(i) - t * tr.dt);
      CHECK((tr.labels[t] + ux).cwiseAbs().maxCoeff() < 1e-3);
    }

    nf::Trajectory kdv;
    kdv.grid = Grid::line(16, 0.0, 1.0, true);
    kdv.dt = 0.1;
    kdv.states.assign(5, Field::Constant(16, 1, 2.0));
    nf::make_labels(kdv, nf::PdeSystem::kdv(), nf::LabelMode::Functional);
    CHECK((kdv.labels[2].array() + 2.0).abs().maxCoeff() < 1e-14);
  }

  TEST_CASE("manifest payload arithmetic and validation") {
    nf::DatasetManifest m;
    m.pde = "advection";
    m.n_samples = 1024;
    m.nt = 200;
    m.nx = 128;
    m.channels = 1;
    m.channel_names = {"u"};
    m.x_min = 0.0;
    m.x_max = 16.0;
    m.dx = 0.125;
    m.dt = 4.0 / 199.0;
    CHECK(m.payload_bytes() == 1024ull * 200 * 128 * 8);
    CHECK_NOTHROW(m.validate());
    nf::DatasetManifest bad = m;
    bad.format_version = 2;
    CHECK_THROWS_AS(bad.validate(), nf::IoError);
    bad = m;
    bad.dx = 0.1;
    CHECK_THROWS_AS(bad.validate(), nf::IoError);

    nlohmann::json j = m.to_json();
    j["solver"] = "external";
    const nf::DatasetManifest back = nf::DatasetManifest::from_json(j);
    CHECK(back.extra["solver"] == "external");
    CHECK(back.to_json() == j);
    j["layout"] = "sample,channel,time,y,x";
    CHECK_THROWS_AS((void)nf::DatasetManifest::from_json(j), nf::IoError);
  }

  TEST_CASE("truncated payload names expected and actual bytes") {
    TempDir tmp("trunc");
    const nf::Dataset ds = nf::to_dataset(nf::gen_advection_dataset(small_adv()));
    nf::write_dataset(ds, tmp.path);
    const auto full = fs::file_size(tmp.path / "data.bin");
    fs::resize_file(tmp.path / "data.bin", full - 16);
    try {
      (void)nf::read_dataset(tmp.path);
      FAIL("expected an IoError");
    } catch (const nf::IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(full)) != std::string::npos);
      CHECK(msg.find(std::to_string(full - 16)) != std::string::npos);
    }
  }

  TEST_CASE("non-finite payload and missing files are I/O errors") {
    TempDir tmp("nan");
    nf::Dataset ds = nf::to_dataset(nf::gen_advection_dataset(small_adv()));
    ds.samples[1].states[2](3, 0) = NAN;
    nf::write_dataset(ds, tmp.path);
    CHECK_THROWS_AS((void)nf::read_dataset(tmp.path), nf::IoError);
    CHECK_THROWS_AS((void)nf::read_dataset(tmp.path / "missing"), nf::IoError);
  }

  TEST_CASE("toy datasets convert through the shared format") {
    TempDir tmp("toy");
    nf::ToyConfig c;
    c.samples = 5;
    c.functional = nf::ToyFunctional::Nonlinear;
    const nf::ToyDataset toy = nf::gen_toy_dataset(c);
    nf::write_dataset(nf::to_dataset(toy), tmp.path);
    const nf::ToyDataset back = nf::to_toy(nf::read_dataset(tmp.path));
    CHECK(back.config.functional == nf::ToyFunctional::Nonlinear);
    REQUIRE(back.samples.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(back.samples[i].label == toy.samples[i].label);
      CHECK(back.samples[i].coeffs == toy.samples[i].coeffs);
      CHECK(back.samples[i].u == toy.samples[i].u);
      CHECK(back.samples[i].derivative == toy.samples[i].derivative);
    }
  }

  TEST_CASE("rewriting a read dataset reproduces the files") {
    TempDir a("rw-a"), b("rw-b");
    nf::write_dataset(nf::to_dataset(nf::gen_advection_dataset(small_adv())), a.path);
    nf::write_dataset(nf::read_dataset(a.path), b.path);
    CHECK(slurp(a.path / "data.bin") == slurp(b.path / "data.bin"));
    CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
  }

  TEST_CASE("config validation") {
    nf::ToyConfig c;
    c.degree = -1;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("degree"), nf::ConfigError);
    nf::AdvectionConfig a;
    a.nt = 1;
    CHECK_THROWS_AS(a.validate(), nf::ConfigError);
  }
}
