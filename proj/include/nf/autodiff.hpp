#pragma once

// Reverse-mode automatic differentiation over dense double arrays.
//
// A Tape records every primitive as it is evaluated (dynamic graph). Values
// are computed eagerly, so a node's value is available as soon as the Var is
// returned. Gradients come from a reverse sweep; with create_graph the sweep
// itself is recorded from the same primitives, which is what lets a loss on
// dH/du be differentiated again with respect to the parameters.
//
// Broadcasting (add, mul): an operand of shape 1x1, 1xC or Rx1 is expanded
// against the other operand.

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nf/array.hpp"

namespace nf::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Mul,
  MatMul,
  Sin,
  Tanh,
  Concat,
  Sum,
  Affine,
  Pow,
  PermuteRows,
};

const char* op_name(OpKind op);

/// Reduction axis for sum(): All -> 1x1, Rows -> 1xC (sum over rows),
/// Cols -> Rx1 (sum over columns).
enum class Axis : std::uint8_t { All, Rows, Cols };

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape is alive
/// and has not been cleared past this node.
class Var {
 public:
  Var() = default;

  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ >= 0; }

  [[nodiscard]] const Array& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] bool requires_grad() const;
  /// Value of a 1x1 node.
  [[nodiscard]] double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Row permutation with its inverse, shared between the forward node and any
/// adjoint nodes built from it.
struct Permutation {
  std::vector<int> forward;  // out[r] = in[forward[r]]
  std::vector<int> inverse;

  explicit Permutation(std::vector<int> fwd);
};

using PermutationPtr = std::shared_ptr<const Permutation>;

/// Gradients of a scalar output with respect to every requires_grad leaf.
class Gradients {
 public:
  [[nodiscard]] bool contains(Var v) const;
  [[nodiscard]] const Array& operator[](Var v) const;
  [[nodiscard]] std::size_t size() const { return ids_.size(); }

 private:
  friend class Tape;
  std::vector<int> ids_;
  std::vector<Array> values_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Array value);
  Var constant(double value);
  Var variable(Array value, bool requires_grad = true);

  [[nodiscard]] const Array& value(Var v) const;
  [[nodiscard]] bool requires_grad(Var v) const;
  [[nodiscard]] OpKind op(Var v) const;
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// d output / d wrt[k] for a scalar output. With create_graph the results
  /// live on this tape and can be differentiated again; otherwise the sweep
  /// leaves no trace and the results are constants.
  std::vector<Var> grad(Var output, std::span<const Var> wrt, bool create_graph);

  /// Numeric gradients only; the tape is left exactly as it was.
  std::vector<Array> gradient_values(Var output, std::span<const Var> wrt);

  /// Gradients for every leaf created with requires_grad.
  Gradients backward(Var output);

  // Node construction; used by the primitive functions below.
  struct Aux {
    double a = 0.0;
    double b = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    Axis axis = Axis::All;
    PermutationPtr perm;
  };
  Var push(OpKind op, std::vector<int> args, Array value, Aux aux);
  Var push(OpKind op, std::vector<int> args, Array value) { return push(op, std::move(args), std::move(value), Aux()); }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<int> args;
    Array value;
    Aux aux;
    bool requires_grad = false;
  };

  void check_output(Var output) const;
  std::vector<int> reverse_sweep(Var output);
  void backprop_node(int id, Var g, std::vector<int>& grads);
  void accumulate(std::vector<int>& grads, int target, Var contribution);
  Var handle(int id) { return Var(this, id); }

  std::vector<Node> nodes_;
  bool no_grad_ = false;
};

// ---------------------------------------------------------------------------
// Primitives

Var add(Var a, Var b);
Var mul(Var a, Var b);
/// op(a) * op(b), op = transpose when the flag is set.
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var sin(Var a);
Var tanh(Var a);
/// Concatenate along columns; all parts share the row count.
Var concat_cols(std::span<const Var> parts);
Var sum(Var a, Axis axis = Axis::All);
/// a * scale + shift, elementwise.
Var affine(Var a, double scale, double shift);
Var pow(Var a, double exponent);
/// out[r] = a[perm.forward[r]]; perm must be a bijection on rows.
Var permute_rows(Var a, PermutationPtr perm);

// ---------------------------------------------------------------------------
// Composites

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return add(a, affine(b, -1.0, 0.0)); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return affine(a, -1.0, 0.0); }
inline Var operator*(Var a, double s) { return affine(a, s, 0.0); }
inline Var operator*(double s, Var a) { return affine(a, s, 0.0); }
inline Var operator+(Var a, double s) { return affine(a, 1.0, s); }

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

/// Sum of squares divided by the element count.
Var mean_square(Var a);

/// Tanh approximation of GELU: 0.5 z (1 + tanh(sqrt(2/pi) (z + 0.044715 z^3))).
Var gelu(Var z);

/// Columns [first, first + count) via a constant selector matmul.
Var select_cols(Var a, Eigen::Index first, Eigen::Index count);

}  // namespace nf::ad
