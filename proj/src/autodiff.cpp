#include "nf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nf/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nf::ad {

namespace {

#if defined(__GLIBC__)
// Tape values are large, short-lived arrays; keep them on the heap instead of
// paying an mmap/munmap pair (and fresh page faults) for every node.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
  mallopt(M_TRIM_THRESHOLD, 1024 << 20);
  return true;
}();
#endif

}  // namespace

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::Sin: return "sin";
    case OpKind::Tanh: return "tanh";
    case OpKind::Concat: return "concat";
    case OpKind::Sum: return "sum";
    case OpKind::Affine: return "affine";
    case OpKind::Pow: return "pow";
    case OpKind::PermuteRows: return "permute_rows";
  }
  return "?";
}

namespace {

std::string shape_str(const Array& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols();
  return os.str();
}

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast dimension " + std::to_string(a) +
                   " against " + std::to_string(b));
}

// Expands `a` to rows x cols; `a` must be broadcast-compatible.
Array expand(const Array& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  return a.replicate(rows / a.rows(), cols / a.cols());
}

Tape* same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw UsageError("operation on an unbound Var");
  if (a.tape() != b.tape()) throw UsageError("operands live on different tapes");
  return a.tape();
}

Tape* tape_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return a.tape();
}

// Sums g down to rows x cols (adjoint of broadcasting).
Var reduce_to(Var g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return sum(g, Axis::All);
  Var r = g;
  if (rows == 1 && r.rows() != 1) r = sum(r, Axis::Rows);
  if (cols == 1 && r.cols() != 1) r = sum(r, Axis::Cols);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

Permutation::Permutation(std::vector<int> fwd) : forward(std::move(fwd)), inverse(forward.size(), -1) {
  const int n = static_cast<int>(forward.size());
  for (int r = 0; r < n; ++r) {
    const int src = forward[static_cast<std::size_t>(r)];
    if (src < 0 || src >= n || inverse[static_cast<std::size_t>(src)] != -1) {
      throw ShapeError("permute_rows: index map is not a bijection");
    }
    inverse[static_cast<std::size_t>(src)] = r;
  }
}

const Array& Var::value() const {
  if (!valid()) throw UsageError("value() on an unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return valid() && tape_->requires_grad(*this); }

double Var::scalar() const {
  const Array& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + shape_str(v) + " node");
  return v(0, 0);
}

bool Gradients::contains(Var v) const {
  return std::find(ids_.begin(), ids_.end(), v.id()) != ids_.end();
}

const Array& Gradients::operator[](Var v) const {
  auto it = std::find(ids_.begin(), ids_.end(), v.id());
  if (it == ids_.end()) throw UsageError("no gradient stored for node #" + std::to_string(v.id()));
  return values_[static_cast<std::size_t>(it - ids_.begin())];
}

// ---------------------------------------------------------------------------

Var Tape::constant(Array value) { return push(OpKind::Leaf, {}, std::move(value)); }

Var Tape::constant(double value) {
  Array a(1, 1);
  a(0, 0) = value;
  return constant(std::move(a));
}

Var Tape::variable(Array value, bool requires_grad) {
  Var v = push(OpKind::Leaf, {}, std::move(value));
  nodes_.back().requires_grad = requires_grad && !no_grad_;
  return v;
}

const Array& Tape::value(Var v) const {
  if (v.tape() != this || v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw UsageError("Var does not belong to this tape (was it cleared?)");
  }
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

bool Tape::requires_grad(Var v) const {
  (void)value(v);
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

OpKind Tape::op(Var v) const {
  (void)value(v);
  return nodes_[static_cast<std::size_t>(v.id())].op;
}

Var Tape::push(OpKind op, std::vector<int> args, Array value, Aux aux) {
  const int id = static_cast<int>(nodes_.size());
  if (!std::isfinite(value.sum()) && !value.allFinite()) {
    throw NumericError("non-finite value produced by node #" + std::to_string(id) + " (" +
                       op_name(op) + ", shape " + shape_str(value) + ")");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.aux = std::move(aux);
  if (!no_grad_) {
    for (int a : args) node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(a)].requires_grad;
    if (node.requires_grad) node.args = std::move(args);
  }
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

void Tape::check_output(Var output) const {
  if (output.tape() != this || output.id() < 0 || static_cast<std::size_t>(output.id()) >= nodes_.size()) {
    throw UsageError("backward: output was not produced by a forward pass on this tape");
  }
  const Array& v = nodes_[static_cast<std::size_t>(output.id())].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw UsageError("backward: output must be scalar, got " + shape_str(v));
  }
}

void Tape::accumulate(std::vector<int>& grads, int target, Var contribution) {
  int& slot = grads[static_cast<std::size_t>(target)];
  if (slot < 0) {
    slot = contribution.id();
  } else {
    slot = add(handle(slot), contribution).id();
  }
}

void Tape::backprop_node(int id, Var g, std::vector<int>& grads) {
  // Copy what we need: pushing new nodes may reallocate nodes_.
  const OpKind op = nodes_[static_cast<std::size_t>(id)].op;
  const std::vector<int> args = nodes_[static_cast<std::size_t>(id)].args;
  const Aux aux = nodes_[static_cast<std::size_t>(id)].aux;
  auto needs = [&](int a) { return nodes_[static_cast<std::size_t>(a)].requires_grad; };

  switch (op) {
    case OpKind::Leaf:
      return;
    case OpKind::Add: {
      for (int a : args) {
        if (!needs(a)) continue;
        const Array& av = nodes_[static_cast<std::size_t>(a)].value;
        accumulate(grads, a, reduce_to(g, av.rows(), av.cols()));
      }
      return;
    }
    case OpKind::Mul: {
      const Var a = handle(args[0]);
      const Var b = handle(args[1]);
      if (needs(args[0])) accumulate(grads, args[0], reduce_to(mul(g, b), a.rows(), a.cols()));
      if (needs(args[1])) accumulate(grads, args[1], reduce_to(mul(g, a), b.rows(), b.cols()));
      return;
    }
    case OpKind::MatMul: {
      const Var a = handle(args[0]);
      const Var b = handle(args[1]);
      const bool ta = aux.trans_a;
      const bool tb = aux.trans_b;
      if (needs(args[0])) {
        accumulate(grads, args[0], ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb));
      }
      if (needs(args[1])) {
        accumulate(grads, args[1], tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false));
      }
      return;
    }
    case OpKind::Sin: {
      // cos(x) = sin(x + pi/2)
      const Var x = handle(args[0]);
      accumulate(grads, args[0], mul(g, sin(affine(x, 1.0, std::numbers::pi / 2.0))));
      return;
    }
    case OpKind::Tanh: {
      const Var y = handle(id);
      accumulate(grads, args[0], mul(g, affine(pow(y, 2.0), -1.0, 1.0)));
      return;
    }
    case OpKind::Concat: {
      Eigen::Index offset = 0;
      for (int a : args) {
        const Eigen::Index w = nodes_[static_cast<std::size_t>(a)].value.cols();
        if (needs(a)) accumulate(grads, a, select_cols(g, offset, w));
        offset += w;
      }
      return;
    }
    case OpKind::Sum: {
      const Array& av = nodes_[static_cast<std::size_t>(args[0])].value;
      const Var zeros = constant(Array::Zero(av.rows(), av.cols()));
      accumulate(grads, args[0], add(zeros, g));
      return;
    }
    case OpKind::Affine:
      accumulate(grads, args[0], aux.a == 1.0 ? g : affine(g, aux.a, 0.0));
      return;
    case OpKind::Pow: {
      const double p = aux.a;
      if (p == 0.0) return;
      const Var x = handle(args[0]);
      if (p == 1.0) {
        accumulate(grads, args[0], g);
      } else {
        const Var dx = (p == 2.0) ? affine(x, 2.0, 0.0) : affine(pow(x, p - 1.0), p, 0.0);
        accumulate(grads, args[0], mul(g, dx));
      }
      return;
    }
    case OpKind::PermuteRows: {
      auto inv = std::make_shared<Permutation>(aux.perm->inverse);
      accumulate(grads, args[0], permute_rows(g, std::move(inv)));
      return;
    }
  }
}

std::vector<int> Tape::reverse_sweep(Var output) {
  check_output(output);
  std::vector<int> grads(static_cast<std::size_t>(output.id()) + 1, -1);
  if (!nodes_[static_cast<std::size_t>(output.id())].requires_grad) return grads;
  grads[static_cast<std::size_t>(output.id())] = constant(1.0).id();
  for (int id = output.id(); id >= 0; --id) {
    const int g = grads[static_cast<std::size_t>(id)];
    if (g < 0 || !nodes_[static_cast<std::size_t>(id)].requires_grad) continue;
    backprop_node(id, handle(g), grads);
  }
  return grads;
}

std::vector<Var> Tape::grad(Var output, std::span<const Var> wrt, bool create_graph) {
  if (!create_graph) {
    std::vector<Array> values = gradient_values(output, wrt);
    std::vector<Var> out;
    out.reserve(values.size());
    for (auto& v : values) out.push_back(constant(std::move(v)));
    return out;
  }
  std::vector<int> grads = reverse_sweep(output);
  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    (void)value(w);
    const int g = static_cast<std::size_t>(w.id()) < grads.size() ? grads[static_cast<std::size_t>(w.id())] : -1;
    out.push_back(g >= 0 ? handle(g) : constant(Array::Zero(w.rows(), w.cols())));
  }
  return out;
}

std::vector<Array> Tape::gradient_values(Var output, std::span<const Var> wrt) {
  const std::size_t mark = nodes_.size();
  no_grad_ = true;
  std::vector<Array> out;
  try {
    std::vector<int> grads = reverse_sweep(output);
    out.reserve(wrt.size());
    for (Var w : wrt) {
      const Array& wv = value(w);
      const int g = static_cast<std::size_t>(w.id()) < grads.size() ? grads[static_cast<std::size_t>(w.id())] : -1;
      out.push_back(g >= 0 ? nodes_[static_cast<std::size_t>(g)].value : Array::Zero(wv.rows(), wv.cols()));
    }
  } catch (...) {
    no_grad_ = false;
    nodes_.resize(mark);
    throw;
  }
  no_grad_ = false;
  nodes_.resize(mark);
  return out;
}

Gradients Tape::backward(Var output) {
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == OpKind::Leaf && nodes_[i].requires_grad) leaves.push_back(handle(static_cast<int>(i)));
  }
  Gradients result;
  result.values_ = gradient_values(output, leaves);
  for (Var l : leaves) result.ids_.push_back(l.id());
  return result;
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av + bv;
  } else {
    const auto r = broadcast_dim(av.rows(), bv.rows(), "add");
    const auto c = broadcast_dim(av.cols(), bv.cols(), "add");
    out = expand(av, r, c) + expand(bv, r, c);
  }
  return t->push(OpKind::Add, {a.id(), b.id()}, std::move(out));
}

Var mul(Var a, Var b) {
  Tape* t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  Array out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av.cwiseProduct(bv);
  } else {
    const auto r = broadcast_dim(av.rows(), bv.rows(), "mul");
    const auto c = broadcast_dim(av.cols(), bv.cols(), "mul");
    out = expand(av, r, c).cwiseProduct(expand(bv, r, c));
  }
  return t->push(OpKind::Mul, {a.id(), b.id()}, std::move(out));
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Tape* t = same_tape(a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  const auto inner_a = trans_a ? av.rows() : av.cols();
  const auto inner_b = trans_b ? bv.cols() : bv.rows();
  if (inner_a != inner_b) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(av) + (trans_a ? "^T" : "") + " * " +
                     shape_str(bv) + (trans_b ? "^T" : "") + ")");
  }
  Array out(trans_a ? av.cols() : av.rows(), trans_b ? bv.rows() : bv.cols());
  if (!trans_a && !trans_b) {
    out.noalias() = av * bv;
  } else if (trans_a && !trans_b) {
    out.noalias() = av.transpose() * bv;
  } else if (!trans_a && trans_b) {
    out.noalias() = av * bv.transpose();
  } else {
    out.noalias() = av.transpose() * bv.transpose();
  }
  Tape::Aux aux;
  aux.trans_a = trans_a;
  aux.trans_b = trans_b;
  return t->push(OpKind::MatMul, {a.id(), b.id()}, std::move(out), aux);
}

Var sin(Var a) {
  Tape* t = tape_of(a);
  return t->push(OpKind::Sin, {a.id()}, a.value().array().sin().matrix());
}

Var tanh(Var a) {
  Tape* t = tape_of(a);
  // (e^{2x} - 1) / (e^{2x} + 1) with a vectorized exp; |x| > 20 rounds to +-1.
  using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowArray e = (2.0 * a.value().array().max(-20.0).min(20.0)).exp();
  Array out = ((e - 1.0) / (e + 1.0)).matrix();
  return t->push(OpKind::Tanh, {a.id()}, std::move(out));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape* t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch (" + std::to_string(rows) + " vs " + std::to_string(p.rows()) + ")");
    }
    cols += p.cols();
    ids.push_back(p.id());
  }
  Array out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t->push(OpKind::Concat, std::move(ids), std::move(out));
}

Var sum(Var a, Axis axis) {
  Tape* t = tape_of(a);
  const Array& av = a.value();
  Array out;
  switch (axis) {
    case Axis::All:
      out.resize(1, 1);
      out(0, 0) = av.sum();
      break;
    case Axis::Rows:
      out = av.colwise().sum();
      break;
    case Axis::Cols:
      out = av.rowwise().sum();
      break;
  }
  Tape::Aux aux;
  aux.axis = axis;
  return t->push(OpKind::Sum, {a.id()}, std::move(out), aux);
}

Var affine(Var a, double scale, double shift) {
  Tape* t = tape_of(a);
  Array out = (a.value().array() * scale + shift).matrix();
  Tape::Aux aux;
  aux.a = scale;
  aux.b = shift;
  return t->push(OpKind::Affine, {a.id()}, std::move(out), aux);
}

Var pow(Var a, double exponent) {
  Tape* t = tape_of(a);
  const Array& av = a.value();
  Array out;
  if (exponent == 2.0) {
    out = av.array().square().matrix();
  } else if (exponent == 3.0) {
    out = av.array().cube().matrix();
  } else if (exponent == 1.0) {
    out = av;
  } else {
    out = av.array().pow(exponent).matrix();
  }
  Tape::Aux aux;
  aux.a = exponent;
  return t->push(OpKind::Pow, {a.id()}, std::move(out), aux);
}

Var permute_rows(Var a, PermutationPtr perm) {
  Tape* t = tape_of(a);
  const Array& av = a.value();
  if (!perm || static_cast<Eigen::Index>(perm->forward.size()) != av.rows()) {
    throw ShapeError("permute_rows: permutation length does not match " + shape_str(av));
  }
  Array out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) out.row(r) = av.row(perm->forward[static_cast<std::size_t>(r)]);
  Tape::Aux aux;
  aux.perm = std::move(perm);
  return t->push(OpKind::PermuteRows, {a.id()}, std::move(out), aux);
}

// ---------------------------------------------------------------------------

Var mean_square(Var a) {
  const double n = static_cast<double>(a.value().size());
  return affine(sum(pow(a, 2.0)), 1.0 / n, 0.0);
}

Var gelu(Var z) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  Var inner = add(affine(z, c, 0.0), affine(pow(z, 3.0), c * 0.044715, 0.0));
  return mul(z, affine(tanh(inner), 0.5, 0.5));
}

Var select_cols(Var a, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > a.cols()) throw ShapeError("select_cols: range out of bounds");
  if (first == 0 && count == a.cols()) return a;
  Array selector = Array::Zero(a.cols(), count);
  for (Eigen::Index k = 0; k < count; ++k) selector(first + k, k) = 1.0;
  return matmul(a, a.tape()->constant(std::move(selector)));
}

}  // namespace nf::ad
