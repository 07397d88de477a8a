#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "iega/tensor.hpp"

namespace iega::ad {

// Reverse-mode autodiff on an append-only tape. Backward passes are
// themselves expressed in recorded primitives, so a gradient obtained with
// grad_graph() can be differentiated again (reverse-over-reverse).
//
// A Tape is single-writer. Independent tapes may live on different threads.

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatMul,
  kTranspose,
  kGather,
  kScatterRows,
  kSum,
  kMean,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSoftmax,
  kDot,
  kAbs,
  kScale,
  kConcat,
  kSliceRows,
  kExpand,
  kReshape,
};

std::string_view op_name(Op op);
std::optional<Op> op_from_name(std::string_view name);

using NodeId = std::size_t;

struct OpAttrs {
  std::vector<std::size_t> indices;  // gather / scatter_rows
  double factor = 1.0;               // scale
  std::size_t start = 0;             // slice_rows
  std::size_t count = 0;             // slice_rows
  std::size_t total_rows = 0;        // scatter_rows
  Shape shape;                       // expand / reshape
};

struct Node {
  NodeId id = 0;
  Op op = Op::kLeaf;
  std::vector<NodeId> inputs;
  Tensor value;
  bool requires_grad = false;
  std::uint32_t generation = 0;
  OpAttrs attrs;
};

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  NodeId id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends a node computing `op` over `inputs`; the value is evaluated and
  // cached. Throws ShapeError on arity or shape mismatch.
  Var record(Op op, std::vector<NodeId> inputs, OpAttrs attrs = {});
  // Same, with the op given by name. Unknown names throw std::invalid_argument.
  Var record(std::string_view op, std::vector<NodeId> inputs,
             OpAttrs attrs = {});

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  std::uint32_t generation() const { return generation_; }

  // d target / d wrt[k] as plain tensors. A wrt node the target does not
  // depend on gets a zero tensor of its own shape.
  std::vector<Tensor> grad(Var target, std::span<const Var> wrt);

  // As grad(), but the gradients are recorded on this tape so they can be
  // used in further differentiable computation.
  std::vector<Var> grad_graph(Var target, std::span<const Var> wrt);

  // Recomputes every non-leaf node from its recorded inputs and reports
  // whether all values are bit-identical to the cached ones.
  bool replay_matches() const;

  // One line per node: id, op, input ids, shape, generation.
  void dump(std::ostream& out) const;

 private:
  template <class Policy>
  friend struct BackwardPass;

  std::vector<Node> nodes_;
  std::uint32_t generation_ = 0;
};

// Differentiable primitives. Operands must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var gather(Var table, std::vector<std::size_t> rows);
Var scatter_rows(Var src, std::vector<std::size_t> rows, std::size_t total_rows);
Var sum(Var a);
Var mean(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var softmax(Var a);
Var dot(Var a, Var b);
Var abs(Var a);
Var scale(Var a, double factor);
Var concat(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var expand(Var a, const Shape& shape);
Var reshape(Var a, const Shape& shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

// Scalar-valued function of one tensor, built on the supplied tape.
using ScalarFunction = std::function<Var(Tape&, Var)>;

// Max elementwise relative error between the analytic gradient of `f` at
// `point` and a central-difference estimate with the given step. The
// denominator is max(|analytic|, |numeric|, 1e-8). A non-finite evaluation
// yields +infinity. Throws std::invalid_argument for step <= 0.
double check_gradient(const ScalarFunction& f, const Tensor& point, double step);

// Central-difference gradient of `f` at `point`.
Tensor numeric_gradient(const ScalarFunction& f, const Tensor& point, double step);

}  // namespace iega::ad
