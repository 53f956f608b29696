#include "nf/kernels.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "nf/errors.hpp"

namespace nf {

using ad::Var;

std::size_t ParameterSet::add(std::string name, Array value) {
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.value.data(), p.value.data() + p.value.size());
  return flat;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw ShapeError("parameter payload has " + std::to_string(flat.size()) + " values, model expects " +
                     std::to_string(scalar_count()));
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(), p.value.data());
    offset += static_cast<std::size_t>(p.value.size());
  }
}

BoundParameters::BoundParameters(ad::Tape& tape, const ParameterSet& set, bool requires_grad) : tape_(&tape), requires_grad_(requires_grad) {
  vars_.reserve(set.size());
  for (const auto& p : set) vars_.push_back(tape.variable(p.value, requires_grad));
}

Array Initializer::uniform(Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Array a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = dist(rng_);
  return a;
}

// ---------------------------------------------------------------------------

DenseLayer DenseLayer::create(ParameterSet& params, const std::string& name, int in, int out, Initializer& init,
                              double weight_bound, double bias_value) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.weight = params.add(name + ".weight", init.uniform(in, out, weight_bound));
  l.bias = params.add(name + ".bias", init.constant(1, out, bias_value));
  return l;
}

Var DenseLayer::apply(const BoundParameters& p, Var x) const {
  if (x.cols() != in) {
    throw ShapeError("dense layer expects " + std::to_string(in) + " input features, got " + std::to_string(x.cols()));
  }
  return ad::add(ad::matmul(x, p[weight]), p[bias]);
}

namespace {

double xavier(int in, int out) { return std::sqrt(6.0 / (in + out)); }

std::vector<std::pair<int, int>> conv_offsets(int dims, int size) {
  const int half = size / 2;
  std::vector<std::pair<int, int>> offsets;
  if (dims == 1) {
    for (int o = -half; o <= half; ++o) offsets.emplace_back(o, 0);
  } else {
    for (int oy = -half; oy <= half; ++oy) {
      for (int ox = -half; ox <= half; ++ox) offsets.emplace_back(ox, oy);
    }
  }
  return offsets;
}

}  // namespace

PeriodicConv PeriodicConv::create(ParameterSet& params, const std::string& name, int dims, int in, int out, int size,
                                  Initializer& init, double bias_value, double weight_scale) {
  if (size < 1 || size % 2 == 0) throw ConfigError("convolution size must be odd and positive");
  PeriodicConv c;
  c.size = size;
  c.dims = dims;
  const int taps = dims == 1 ? size : size * size;
  c.mix = DenseLayer::create(params, name, in * taps, out, init, weight_scale * xavier(in * taps, out), bias_value);
  return c;
}

Var PeriodicConv::apply(const BoundParameters& p, Var x, int batch, const Grid& grid) const {
  if (!grid.periodic()) throw ConfigError("periodic convolution requires a periodic grid");
  if (grid.dims() != dims) throw ConfigError("convolution dimensionality does not match the grid");
  std::vector<Var> shifted;
  for (auto [ox, oy] : conv_offsets(dims, size)) {
    shifted.push_back(ox == 0 && oy == 0 ? x : ad::permute_rows(x, shift_permutation(grid, batch, ox, oy)));
  }
  return mix.apply(p, ad::concat_cols(shifted));
}

Var siren_film_layer(Var x, Var gamma, Var beta, Var weight, Var bias, double omega0) {
  Var pre = ad::add(ad::matmul(x, weight), bias);
  return ad::add(ad::mul(gamma, ad::sin(ad::affine(pre, omega0, 0.0))), beta);
}

// ---------------------------------------------------------------------------

MlpKernel MlpKernel::create(ParameterSet& params, Mode mode, int dims, int channels, int width, int depth,
                            Initializer& init) {
  if (width < 1 || depth < 1) throw ConfigError("mlp kernel needs width >= 1 and depth >= 1");
  MlpKernel k;
  k.mode = mode;
  k.dims = dims;
  k.channels = channels;
  int in = mode == Mode::Linear ? dims : dims + channels;
  for (int l = 0; l < depth; ++l) {
    k.layers.push_back(DenseLayer::create(params, "mlp." + std::to_string(l), in, width, init, xavier(in, width), 0.0));
    in = width;
  }
  k.layers.push_back(DenseLayer::create(params, "mlp.out", in, channels, init, xavier(in, channels), 0.0));
  return k;
}

Var MlpKernel::eval(const BoundParameters& p, Var coords, const KernelConditioning& cond) const {
  Var h = coords;
  if (mode == Mode::Linear) {
    if (!std::holds_alternative<std::monostate>(cond)) {
      throw ConfigError("linear mlp kernel does not take conditioning input");
    }
  } else {
    const auto* local = std::get_if<LocalConditioning>(&cond);
    if (local == nullptr) throw ConfigError("nonlinear mlp kernel requires local conditioning on u");
    h = ad::concat_cols({coords, local->u});
  }
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) h = ad::gelu(layers[l].apply(p, h));
  return layers.back().apply(p, h);
}

// ---------------------------------------------------------------------------

Film FilmNetwork::apply(const BoundParameters& p, Var u) const {
  Var h = ad::gelu(hidden.apply(p, u));
  return {gamma.apply(p, h), beta.apply(p, h)};
}

GlobalConditioner GlobalConditioner::create(ParameterSet& params, int dims, int channels, int width, int layers,
                                            int conv_size, Initializer& init) {
  GlobalConditioner g;
  g.width = width;
  g.first = PeriodicConv::create(params, "cond.conv0", dims, channels, width, conv_size, init, 0.0);
  for (int l = 0; l < layers; ++l) {
    const std::string tag = std::to_string(l);
    g.gamma.push_back(PeriodicConv::create(params, "cond.gamma" + tag, dims, width, width, conv_size, init, 1.0, 0.1));
    g.beta.push_back(PeriodicConv::create(params, "cond.beta" + tag, dims, width, width, conv_size, init, 0.0, 0.1));
  }
  return g;
}

GlobalConditioning GlobalConditioner::condition(const BoundParameters& p, Var u, int batch, const Grid& grid) const {
  if (!grid.periodic()) throw ConfigError("global conditioning requires a periodic grid");
  Var h = ad::gelu(first.apply(p, u, batch, grid));
  GlobalConditioning out;
  for (std::size_t l = 0; l < gamma.size(); ++l) {
    out.layers.push_back({gamma[l].apply(p, h, batch, grid), beta[l].apply(p, h, batch, grid)});
  }
  return out;
}

// ---------------------------------------------------------------------------

SirenFilmKernel SirenFilmKernel::create(ParameterSet& params, Conditioning conditioning, int dims, int channels,
                                        int width, int depth, double omega0, Initializer& init) {
  if (width < 1 || depth < 1) throw ConfigError("siren kernel needs width >= 1 and depth >= 1");
  SirenFilmKernel k;
  k.conditioning = conditioning;
  k.dims = dims;
  k.channels = channels;
  k.width = width;
  k.omega0 = omega0;
  int in = conditioning == Conditioning::Local ? dims + channels : dims;
  for (int l = 0; l < depth; ++l) {
    const double bound = l == 0 ? 1.0 / in : std::sqrt(6.0 / in) / omega0;
    const std::string tag = std::to_string(l);
    k.sine_layers.push_back(DenseLayer::create(params, "siren." + tag, in, width, init, bound, 0.0));
    if (conditioning == Conditioning::Local) {
      FilmNetwork f;
      f.hidden = DenseLayer::create(params, "film" + tag + ".hidden", channels, width, init, xavier(channels, width), 0.0);
      f.gamma = DenseLayer::create(params, "film" + tag + ".gamma", width, width, init, 0.1 * xavier(width, width), 1.0);
      f.beta = DenseLayer::create(params, "film" + tag + ".beta", width, width, init, 0.1 * xavier(width, width), 0.0);
      k.film.push_back(f);
    }
    in = width;
  }
  k.projection = DenseLayer::create(params, "siren.proj", width, channels, init, std::sqrt(6.0 / width) / omega0, 0.0);
  return k;
}

Var SirenFilmKernel::eval(const BoundParameters& p, Var coords, const KernelConditioning& cond) const {
  std::vector<Film> films;
  Var h = coords;
  if (conditioning == Conditioning::Local) {
    const auto* local = std::get_if<LocalConditioning>(&cond);
    if (local == nullptr) throw ConfigError("local FiLM kernel was given non-local conditioning");
    h = ad::concat_cols({coords, local->u});
    for (const auto& f : film) films.push_back(f.apply(p, local->u));
  } else {
    const auto* global = std::get_if<GlobalConditioning>(&cond);
    if (global == nullptr) throw ConfigError("global FiLM kernel was given non-global conditioning");
    if (global->layers.size() != sine_layers.size()) throw ShapeError("FiLM layer count does not match sine layers");
    films = global->layers;
  }
  for (std::size_t l = 0; l < sine_layers.size(); ++l) {
    const DenseLayer& layer = sine_layers[l];
    if (h.cols() != layer.in) throw ShapeError("sine layer input width mismatch");
    h = siren_film_layer(h, films[l].gamma, films[l].beta, p[layer.weight], p[layer.bias], omega0);
  }
  return projection.apply(p, h);
}

// ---------------------------------------------------------------------------

BaselineScalarMlp BaselineScalarMlp::create(ParameterSet& params, int input_points, int width, int depth,
                                            Initializer& init) {
  BaselineScalarMlp m;
  m.input_points = input_points;
  int in = 2 * input_points;
  for (int l = 0; l < depth; ++l) {
    m.layers.push_back(DenseLayer::create(params, "baseline." + std::to_string(l), in, width, init, xavier(in, width), 0.0));
    in = width;
  }
  m.layers.push_back(DenseLayer::create(params, "baseline.out", in, 1, init, xavier(in, 1), 0.0));
  return m;
}

Var BaselineScalarMlp::eval(const BoundParameters& p, Var x, Var u) const {
  if (x.cols() != input_points || u.cols() != input_points) {
    throw ShapeError("baseline MLP was built for " + std::to_string(input_points) + " points, got " +
                     std::to_string(u.cols()));
  }
  Var h = ad::concat_cols({x, u});
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) h = ad::gelu(layers[l].apply(p, h));
  return layers.back().apply(p, h);
}

// ---------------------------------------------------------------------------

ad::PermutationPtr shift_permutation(const Grid& grid, int batch, int ox, int oy) {
  using Key = std::tuple<int, int, int, int, int>;
  thread_local std::map<Key, ad::PermutationPtr> cache;
  const Key key{grid.nx(), grid.ny(), batch, ox, oy};
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int nx = grid.nx();
  const int ny = grid.ny();
  const int n = grid.points();
  std::vector<int> fwd(static_cast<std::size_t>(batch) * static_cast<std::size_t>(n));
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int si = ((i + ox) % nx + nx) % nx;
        const int sj = ((j + oy) % ny + ny) % ny;
        fwd[static_cast<std::size_t>(b * n + grid.index(i, j))] = b * n + grid.index(si, sj);
      }
    }
  }
  auto perm = std::make_shared<const ad::Permutation>(std::move(fwd));
  if (cache.size() > 256) cache.clear();
  cache.emplace(key, perm);
  return perm;
}

}  // namespace nf
