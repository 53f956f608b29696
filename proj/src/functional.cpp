#include "nf/functional.hpp"

#include "nf/errors.hpp"

namespace nf {

using ad::Var;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::MlpLinear: return "mlp_linear";
    case ModelKind::MlpNonlinear: return "mlp_nonlinear";
    case ModelKind::SirenFilmLocal: return "siren_film_local";
    case ModelKind::SirenFilmGlobal: return "siren_film_global";
    case ModelKind::BaselineMlp: return "baseline_mlp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (ModelKind k : {ModelKind::MlpLinear, ModelKind::MlpNonlinear, ModelKind::SirenFilmLocal,
                      ModelKind::SirenFilmGlobal, ModelKind::BaselineMlp}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown model kind '" + name + "'");
}

void ModelSpec::normalize_to(const Grid& grid) {
  coord_center = {0.5 * (grid.x_lo() + grid.x_hi())};
  coord_scale = {0.5 * grid.length_x()};
  if (grid.dims() == 2) {
    coord_center.push_back(0.5 * (grid.y_lo() + grid.y_hi()));
    coord_scale.push_back(0.5 * grid.length_y());
  }
}

// ---------------------------------------------------------------------------

FunctionalModel::FunctionalModel(ModelSpec spec, ParameterSet params)
    : spec_(std::move(spec)), params_(std::move(params)) {}

FunctionalModel FunctionalModel::create(const ModelSpec& spec) {
  FunctionalModel m(spec, {});
  Initializer init(spec.seed);
  m.build(init);
  return m;
}

FunctionalModel FunctionalModel::from_flat(const ModelSpec& spec, std::span<const double> flat) {
  FunctionalModel m = create(spec);
  m.params_.assign(flat);
  return m;
}

void FunctionalModel::build(Initializer& init) {
  if (spec_.dims < 1 || spec_.dims > 2) throw ConfigError("model dims must be 1 or 2");
  if (spec_.channels < 1) throw ConfigError("model channels must be >= 1");
  if (static_cast<int>(spec_.coord_center.size()) != spec_.dims ||
      static_cast<int>(spec_.coord_scale.size()) != spec_.dims) {
    throw ConfigError("coordinate normalization must have one entry per dimension");
  }
  for (double s : spec_.coord_scale) {
    if (!(s > 0.0)) throw ConfigError("coordinate scale must be positive");
  }
  switch (spec_.kind) {
    case ModelKind::MlpLinear:
      net_ = MlpKernel::create(params_, MlpKernel::Mode::Linear, spec_.dims, spec_.channels, spec_.width, spec_.depth,
                               init);
      break;
    case ModelKind::MlpNonlinear:
      net_ = MlpKernel::create(params_, MlpKernel::Mode::Nonlinear, spec_.dims, spec_.channels, spec_.width,
                               spec_.depth, init);
      break;
    case ModelKind::SirenFilmLocal:
      net_ = SirenFilmKernel::create(params_, SirenFilmKernel::Conditioning::Local, spec_.dims, spec_.channels,
                                     spec_.width, spec_.depth, spec_.omega0, init);
      break;
    case ModelKind::SirenFilmGlobal:
      conditioner_ =
          GlobalConditioner::create(params_, spec_.dims, spec_.channels, spec_.width, spec_.depth, spec_.conv_size, init);
      net_ = SirenFilmKernel::create(params_, SirenFilmKernel::Conditioning::Global, spec_.dims, spec_.channels,
                                     spec_.width, spec_.depth, spec_.omega0, init);
      break;
    case ModelKind::BaselineMlp:
      if (spec_.dims != 1 || spec_.channels != 1) throw ConfigError("baseline MLP supports 1D single-channel inputs");
      if (spec_.input_points < 2) throw ConfigError("baseline MLP needs input_points >= 2");
      net_ = BaselineScalarMlp::create(params_, spec_.input_points, spec_.width, spec_.depth, init);
      break;
  }
}

void FunctionalModel::check_grid(const Grid& grid) const {
  if (grid.dims() != spec_.dims) {
    throw ShapeError("model expects a " + std::to_string(spec_.dims) + "D grid, got " + std::to_string(grid.dims()) +
                     "D");
  }
  if (spec_.kind == ModelKind::BaselineMlp && grid.points() != spec_.input_points) {
    throw ShapeError("baseline MLP was built for " + std::to_string(spec_.input_points) + " points, grid has " +
                     std::to_string(grid.points()));
  }
}

Array FunctionalModel::normalized_coordinates(const Grid& grid) const {
  Array c = grid.coordinates();
  for (int d = 0; d < spec_.dims; ++d) {
    c.col(d) = (c.col(d).array() - spec_.coord_center[static_cast<std::size_t>(d)]) /
               spec_.coord_scale[static_cast<std::size_t>(d)];
  }
  return c;
}

Array FunctionalModel::pack(std::span<const Field> fields, const Grid& grid) const {
  check_grid(grid);
  const int n = grid.points();
  const auto batch = static_cast<Eigen::Index>(fields.size());
  for (const Field& f : fields) {
    if (f.rows() != n || f.cols() != spec_.channels) {
      throw ShapeError("field of shape " + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                       " does not match grid points " + std::to_string(n) + " x channels " +
                       std::to_string(spec_.channels));
    }
  }
  if (spec_.kind == ModelKind::BaselineMlp) {
    Array packed(batch, n);
    for (Eigen::Index b = 0; b < batch; ++b) packed.row(b) = fields[static_cast<std::size_t>(b)].col(0).transpose();
    return packed;
  }
  Array packed(batch * n, spec_.channels);
  for (Eigen::Index b = 0; b < batch; ++b) packed.middleRows(b * n, n) = fields[static_cast<std::size_t>(b)];
  return packed;
}

std::vector<Field> FunctionalModel::unpack(const Array& packed, int batch, const Grid& grid) const {
  const int n = grid.points();
  std::vector<Field> out;
  out.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    if (spec_.kind == ModelKind::BaselineMlp) {
      out.emplace_back(packed.row(b).transpose());
    } else {
      out.emplace_back(packed.middleRows(static_cast<Eigen::Index>(b) * n, n));
    }
  }
  return out;
}

Array FunctionalModel::deweighting(int batch, const Grid& grid) const {
  const Array w = cell_weights(grid);
  const Array inv = w.cwiseInverse();
  if (spec_.kind == ModelKind::BaselineMlp) return inv.transpose();
  return inv.replicate(batch, 1);
}

Var FunctionalModel::kernel(const BoundParameters& p, Var u, int batch, const Grid& grid) const {
  check_grid(grid);
  ad::Tape& tape = p.tape();
  const int n = grid.points();
  const Array coords = normalized_coordinates(grid);
  if (u.rows() != static_cast<Eigen::Index>(batch) * n || u.cols() != spec_.channels) {
    throw ShapeError("packed input has the wrong shape for this model and batch");
  }

  if (const auto* mlp = std::get_if<MlpKernel>(&net_)) {
    if (mlp->mode == MlpKernel::Mode::Linear) {
      // kappa depends on x only: evaluate once per grid point, then tile.
      Var k = mlp->eval(p, tape.constant(coords), std::monostate{});
      if (batch == 1) return k;
      Array tile = Array::Zero(static_cast<Eigen::Index>(batch) * n, n);
      for (int b = 0; b < batch; ++b) tile.middleRows(static_cast<Eigen::Index>(b) * n, n).setIdentity();
      return ad::matmul(tape.constant(std::move(tile)), k);
    }
    return mlp->eval(p, tape.constant(coords.replicate(batch, 1)), LocalConditioning{u});
  }
  if (const auto* siren = std::get_if<SirenFilmKernel>(&net_)) {
    Var x = tape.constant(coords.replicate(batch, 1));
    if (siren->conditioning == SirenFilmKernel::Conditioning::Local) return siren->eval(p, x, LocalConditioning{u});
    return siren->eval(p, x, conditioner_->condition(p, u, batch, grid));
  }
  throw ConfigError("baseline MLP has no integral kernel");
}

Var FunctionalModel::evaluate(const BoundParameters& p, Var u, int batch, const Grid& grid) const {
  check_grid(grid);
  if (const auto* base = std::get_if<BaselineScalarMlp>(&net_)) {
    const Array coords = normalized_coordinates(grid);
    Array x = coords.col(0).transpose().replicate(batch, 1);
    return base->eval(p, p.tape().constant(std::move(x)), u);
  }
  Var k = kernel(p, u, batch, grid);
  return ikf_sum(k, u, cell_weights(grid).replicate(batch, 1), batch);
}

// ---------------------------------------------------------------------------

Var ikf_sum(Var kappa, Var u, const Array& weights, int batch) {
  ad::Tape& tape = *u.tape();
  if (kappa.rows() != u.rows() || kappa.cols() != u.cols()) throw ShapeError("ikf_sum: kernel and field shapes differ");
  if (weights.rows() != u.rows() || weights.cols() != 1) throw ShapeError("ikf_sum: weight column has the wrong shape");
  Var integrand = ad::mul(ad::mul(kappa, u), tape.constant(weights));
  if (batch == 1) return ad::sum(integrand, ad::Axis::All);
  Var per_point = integrand.cols() == 1 ? integrand : ad::sum(integrand, ad::Axis::Cols);
  const Eigen::Index n = u.rows() / batch;
  Array segments = Array::Zero(batch, u.rows());
  for (int b = 0; b < batch; ++b) segments.block(b, static_cast<Eigen::Index>(b) * n, 1, n).setOnes();
  return ad::matmul(tape.constant(std::move(segments)), per_point);
}

FunctionalPass functional_pass(const FunctionalModel& model, const BoundParameters& params,
                               std::span<const Field> fields, const Grid& grid, bool create_graph) {
  ad::Tape& tape = params.tape();
  const int batch = static_cast<int>(fields.size());
  FunctionalPass pass;
  pass.u = tape.variable(model.pack(fields, grid), true);
  pass.value = model.evaluate(params, pass.u, batch, grid);
  Var total = batch == 1 ? pass.value : ad::sum(pass.value, ad::Axis::All);
  const Var wrt[] = {pass.u};
  Var g = tape.grad(total, wrt, create_graph)[0];
  pass.derivative = ad::mul(g, tape.constant(model.deweighting(batch, grid)));
  return pass;
}

double evaluate_functional(const FunctionalModel& model, const Field& u, const Grid& grid) {
  ad::Tape tape;
  BoundParameters p(tape, model.parameters(), false);
  Var x = tape.constant(model.pack(std::span<const Field>(&u, 1), grid));
  return model.evaluate(p, x, 1, grid).scalar();
}

Field functional_derivative(const FunctionalModel& model, const Field& u, const Grid& grid) {
  BatchEvaluation e = evaluate_batch(model, std::span<const Field>(&u, 1), grid);
  return std::move(e.derivatives.front());
}

BatchEvaluation evaluate_batch(const FunctionalModel& model, std::span<const Field> fields, const Grid& grid) {
  ad::Tape tape;
  BoundParameters p(tape, model.parameters(), false);
  FunctionalPass pass = functional_pass(model, p, fields, grid, false);
  BatchEvaluation out;
  const Array& h = pass.value.value();
  out.values.assign(h.data(), h.data() + h.size());
  out.derivatives = model.unpack(pass.derivative.value(), static_cast<int>(fields.size()), grid);
  return out;
}

}  // namespace nf
