#include "iega/autodiff.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "iega/error.hpp"

namespace iega::ad {

namespace {

constexpr std::array<std::string_view, 23> kOpNames = {
    "leaf",      "add",     "sub",  "mul",  "div",   "matmul",
    "transpose", "gather",  "scatter_rows", "sum",  "mean",  "tanh",
    "relu",      "exp",     "log",  "softmax", "dot", "abs",
    "scale",     "concat",  "slice_rows", "expand", "reshape"};

// Number of inputs each op takes; -1 means one or more.
int arity(Op op) {
  switch (op) {
    case Op::kLeaf:
      return 0;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
    case Op::kMatMul:
    case Op::kDot:
      return 2;
    case Op::kConcat:
      return -1;
    default:
      return 1;
  }
}

Tensor evaluate(Op op, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  switch (op) {
    case Op::kLeaf:
      throw std::logic_error("leaf nodes carry no computation");
    case Op::kAdd:
      return add(*in[0], *in[1]);
    case Op::kSub:
      return sub(*in[0], *in[1]);
    case Op::kMul:
      return mul(*in[0], *in[1]);
    case Op::kDiv:
      return div(*in[0], *in[1]);
    case Op::kMatMul:
      return matmul(*in[0], *in[1]);
    case Op::kTranspose:
      return transpose(*in[0]);
    case Op::kGather:
      return gather(*in[0], attrs.indices);
    case Op::kScatterRows:
      return scatter_rows(*in[0], attrs.indices, attrs.total_rows);
    case Op::kSum:
      return sum(*in[0]);
    case Op::kMean:
      return mean(*in[0]);
    case Op::kTanh:
      return tanh(*in[0]);
    case Op::kRelu:
      return relu(*in[0]);
    case Op::kExp:
      return exp(*in[0]);
    case Op::kLog:
      return log(*in[0]);
    case Op::kSoftmax:
      return softmax(*in[0]);
    case Op::kDot:
      return dot(*in[0], *in[1]);
    case Op::kAbs:
      return abs(*in[0]);
    case Op::kScale:
      return scale(*in[0], attrs.factor);
    case Op::kConcat: {
      std::vector<Tensor> parts;
      parts.reserve(in.size());
      for (const Tensor* t : in) parts.push_back(*t);
      return concat(parts);
    }
    case Op::kSliceRows:
      return slice_rows(*in[0], attrs.start, attrs.count);
    case Op::kExpand:
      return expand(*in[0], attrs.shape);
    case Op::kReshape:
      return reshape(*in[0], attrs.shape);
  }
  throw std::logic_error("unhandled op");
}

Tape* common_tape(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (v.tape() == nullptr) throw std::invalid_argument("unbound Var");
    if (tape != nullptr && v.tape() != tape) {
      throw std::invalid_argument("operands live on different tapes");
    }
    tape = v.tape();
  }
  return tape;
}

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  return std::nullopt;
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::invalid_argument("unbound Var");
  return tape_->node(id_).value;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.id = nodes_.size();
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.generation = generation_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.back().id);
}

Var Tape::record(Op op, std::vector<NodeId> inputs, OpAttrs attrs) {
  const int expected = arity(op);
  if (op == Op::kLeaf) throw std::invalid_argument("use Tape::leaf for leaves");
  if ((expected >= 0 && inputs.size() != static_cast<std::size_t>(expected)) ||
      (expected < 0 && inputs.empty())) {
    throw ShapeError(std::string(op_name(op)) + ": wrong number of inputs (" +
                     std::to_string(inputs.size()) + ")");
  }
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  bool requires_grad = false;
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) {
      throw std::invalid_argument("input node " + std::to_string(id) +
                                  " is not on the tape");
    }
    in.push_back(&nodes_[id].value);
    requires_grad = requires_grad || nodes_[id].requires_grad;
  }
  Tensor value = evaluate(op, in, attrs);
  Node n;
  n.id = nodes_.size();
  n.op = op;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.generation = generation_;
  n.attrs = std::move(attrs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.back().id);
}

Var Tape::record(std::string_view op, std::vector<NodeId> inputs, OpAttrs attrs) {
  const auto parsed = op_from_name(op);
  if (!parsed) throw std::invalid_argument("unknown op tag '" + std::string(op) + "'");
  return record(*parsed, std::move(inputs), std::move(attrs));
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeaf) continue;
    std::vector<const Tensor*> in;
    for (NodeId id : n.inputs) in.push_back(&nodes_[id].value);
    if (!(evaluate(n.op, in, n.attrs) == n.value)) return false;
  }
  return true;
}

void Tape::dump(std::ostream& out) const {
  for (const Node& n : nodes_) {
    out << n.id << ' ' << op_name(n.op) << " [";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      if (i > 0) out << ',';
      out << n.inputs[i];
    }
    out << "] " << shape_to_string(n.value.shape()) << " g" << n.generation << '\n';
  }
}

// Backward rules are written once against a policy that either computes
// plain tensors or records new nodes on the tape. Both policies run the same
// kernels in the same order, so first-order values agree bit for bit.
struct TensorPolicy {
  using Value = Tensor;
  const Tape& tape;

  Tensor value(NodeId id) const { return tape.node(id).value; }
  Tensor constant(Tensor t) const { return t; }
};

struct GraphPolicy {
  using Value = Var;
  Tape& tape;

  Var value(NodeId id) const { return Var(&tape, id); }
  Var constant(Tensor t) const { return tape.constant(std::move(t)); }
};

template <class Policy>
struct BackwardPass {
  using T = typename Policy::Value;

  Tape& tape;
  Policy policy;

  static const Shape& shape_of(const Tensor& t) { return t.shape(); }
  static const Shape& shape_of(const Var& v) { return v.shape(); }

  // Undo scalar broadcasting: a single-element operand receives the sum.
  static T reduce_to(const T& g, const Shape& target) {
    if (shape_of(g) == target) return g;
    return reshape(sum(g), target);
  }

  std::vector<T> run(Var target, std::span<const Var> wrt) {
    if (target.tape() != &tape) throw std::invalid_argument("target is on another tape");
    if (target.value().numel() != 1) {
      throw ShapeError("grad target must be scalar, got shape " +
                       shape_to_string(target.shape()));
    }
    const std::size_t n = target.id() + 1;
    std::vector<char> leads(n, 0);
    for (const Var& w : wrt) {
      if (w.tape() != &tape) throw std::invalid_argument("wrt node is on another tape");
      if (w.id() < n) leads[w.id()] = 1;
    }
    for (std::size_t id = 0; id < n; ++id) {
      if (leads[id]) continue;
      for (NodeId in : tape.nodes_[id].inputs) {
        if (leads[in]) {
          leads[id] = 1;
          break;
        }
      }
    }

    std::vector<std::optional<T>> adj(n);
    adj[target.id()] = policy.constant(Tensor::full(target.shape(), 1.0));
    for (std::size_t id = n; id-- > 0;) {
      if (!adj[id] || !leads[id]) continue;
      if (tape.nodes_[id].op == Op::kLeaf) continue;
      // Copy what we need: recording may reallocate the node storage.
      const Op op = tape.nodes_[id].op;
      const std::vector<NodeId> inputs = tape.nodes_[id].inputs;
      const OpAttrs attrs = tape.nodes_[id].attrs;
      const T g = *adj[id];
      propagate(id, op, inputs, attrs, g, leads, adj);
    }

    std::vector<T> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
      if (w.id() < n && adj[w.id()]) {
        out.push_back(*adj[w.id()]);
      } else {
        out.push_back(policy.constant(Tensor::zeros(w.shape())));
      }
    }
    return out;
  }

  void propagate(NodeId id, Op op, const std::vector<NodeId>& inputs,
                 const OpAttrs& attrs, const T& g, const std::vector<char>& leads,
                 std::vector<std::optional<T>>& adj) {
    auto needs = [&](std::size_t k) { return leads[inputs[k]] != 0; };
    auto accumulate = [&](std::size_t k, T contribution) {
      auto& slot = adj[inputs[k]];
      if (slot) {
        slot = add(*slot, contribution);
      } else {
        slot = std::move(contribution);
      }
    };
    auto in = [&](std::size_t k) { return policy.value(inputs[k]); };
    auto out = [&] { return policy.value(id); };
    auto in_shape = [&](std::size_t k) { return tape.nodes_[inputs[k]].value.shape(); };

    switch (op) {
      case Op::kLeaf:
        return;
      case Op::kAdd:
        if (needs(0)) accumulate(0, reduce_to(g, in_shape(0)));
        if (needs(1)) accumulate(1, reduce_to(g, in_shape(1)));
        return;
      case Op::kSub:
        if (needs(0)) accumulate(0, reduce_to(g, in_shape(0)));
        if (needs(1)) accumulate(1, reduce_to(scale(g, -1.0), in_shape(1)));
        return;
      case Op::kMul:
        if (needs(0)) accumulate(0, reduce_to(mul(g, in(1)), in_shape(0)));
        if (needs(1)) accumulate(1, reduce_to(mul(g, in(0)), in_shape(1)));
        return;
      case Op::kDiv:
        if (needs(0)) accumulate(0, reduce_to(div(g, in(1)), in_shape(0)));
        if (needs(1)) {
          accumulate(1, reduce_to(scale(div(mul(g, out()), in(1)), -1.0), in_shape(1)));
        }
        return;
      case Op::kMatMul:
        if (needs(0)) accumulate(0, matmul(g, transpose(in(1))));
        if (needs(1)) accumulate(1, matmul(transpose(in(0)), g));
        return;
      case Op::kTranspose:
        accumulate(0, transpose(g));
        return;
      case Op::kGather:
        accumulate(0, scatter_rows(g, attrs.indices, in_shape(0)[0]));
        return;
      case Op::kScatterRows:
        accumulate(0, gather(g, attrs.indices));
        return;
      case Op::kSum:
        accumulate(0, expand(g, in_shape(0)));
        return;
      case Op::kMean: {
        const auto count = static_cast<double>(numel_of(in_shape(0)));
        accumulate(0, expand(scale(g, 1.0 / count), in_shape(0)));
        return;
      }
      case Op::kTanh: {
        const T y = out();
        accumulate(0, mul(g, sub(policy.constant(Tensor::scalar(1.0)), mul(y, y))));
        return;
      }
      case Op::kRelu:
        accumulate(0, mul(g, policy.constant(step(tape.nodes_[inputs[0]].value))));
        return;
      case Op::kExp:
        accumulate(0, mul(g, out()));
        return;
      case Op::kLog:
        accumulate(0, div(g, in(0)));
        return;
      case Op::kSoftmax: {
        const T y = out();
        accumulate(0, mul(y, sub(g, dot(g, y))));
        return;
      }
      case Op::kDot:
        if (needs(0)) accumulate(0, reduce_shape(mul(in(1), g), in_shape(0)));
        if (needs(1)) accumulate(1, reduce_shape(mul(in(0), g), in_shape(1)));
        return;
      case Op::kAbs:
        // Subgradient 0 at the kink.
        accumulate(0, mul(g, policy.constant(sign(tape.nodes_[inputs[0]].value))));
        return;
      case Op::kScale:
        accumulate(0, scale(g, attrs.factor));
        return;
      case Op::kConcat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const std::size_t rows = in_shape(k)[0];
          if (needs(k)) accumulate(k, slice_rows(g, offset, rows));
          offset += rows;
        }
        return;
      }
      case Op::kSliceRows: {
        std::vector<std::size_t> rows(attrs.count);
        std::iota(rows.begin(), rows.end(), attrs.start);
        accumulate(0, scatter_rows(g, std::move(rows), in_shape(0)[0]));
        return;
      }
      case Op::kExpand:
        accumulate(0, reshape(sum(g), in_shape(0)));
        return;
      case Op::kReshape:
        accumulate(0, reshape(g, in_shape(0)));
        return;
    }
  }

  static T reduce_shape(const T& g, const Shape& target) {
    if (shape_of(g) == target) return g;
    return reshape(g, target);
  }
};

std::vector<Tensor> Tape::grad(Var target, std::span<const Var> wrt) {
  BackwardPass<TensorPolicy> pass{*this, TensorPolicy{*this}};
  return pass.run(target, wrt);
}

std::vector<Var> Tape::grad_graph(Var target, std::span<const Var> wrt) {
  ++generation_;
  BackwardPass<GraphPolicy> pass{*this, GraphPolicy{*this}};
  return pass.run(target, wrt);
}

Var add(Var a, Var b) { return common_tape({a, b})->record(Op::kAdd, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return common_tape({a, b})->record(Op::kSub, {a.id(), b.id()}); }
Var mul(Var a, Var b) { return common_tape({a, b})->record(Op::kMul, {a.id(), b.id()}); }
Var div(Var a, Var b) { return common_tape({a, b})->record(Op::kDiv, {a.id(), b.id()}); }

Var matmul(Var a, Var b) {
  return common_tape({a, b})->record(Op::kMatMul, {a.id(), b.id()});
}

Var transpose(Var a) { return common_tape({a})->record(Op::kTranspose, {a.id()}); }

Var gather(Var table, std::vector<std::size_t> rows) {
  OpAttrs attrs;
  attrs.indices = std::move(rows);
  return common_tape({table})->record(Op::kGather, {table.id()}, std::move(attrs));
}

Var scatter_rows(Var src, std::vector<std::size_t> rows, std::size_t total_rows) {
  OpAttrs attrs;
  attrs.indices = std::move(rows);
  attrs.total_rows = total_rows;
  return common_tape({src})->record(Op::kScatterRows, {src.id()}, std::move(attrs));
}

Var sum(Var a) { return common_tape({a})->record(Op::kSum, {a.id()}); }
Var mean(Var a) { return common_tape({a})->record(Op::kMean, {a.id()}); }
Var tanh(Var a) { return common_tape({a})->record(Op::kTanh, {a.id()}); }
Var relu(Var a) { return common_tape({a})->record(Op::kRelu, {a.id()}); }
Var exp(Var a) { return common_tape({a})->record(Op::kExp, {a.id()}); }
Var log(Var a) { return common_tape({a})->record(Op::kLog, {a.id()}); }
Var softmax(Var a) { return common_tape({a})->record(Op::kSoftmax, {a.id()}); }
Var dot(Var a, Var b) { return common_tape({a, b})->record(Op::kDot, {a.id(), b.id()}); }
Var abs(Var a) { return common_tape({a})->record(Op::kAbs, {a.id()}); }

Var scale(Var a, double factor) {
  OpAttrs attrs;
  attrs.factor = factor;
  return common_tape({a})->record(Op::kScale, {a.id()}, std::move(attrs));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero nodes");
  Tape* tape = parts.front().tape();
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    common_tape({parts.front(), p});
    ids.push_back(p.id());
  }
  return tape->record(Op::kConcat, std::move(ids));
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  OpAttrs attrs;
  attrs.start = start;
  attrs.count = count;
  return common_tape({a})->record(Op::kSliceRows, {a.id()}, std::move(attrs));
}

Var expand(Var a, const Shape& shape) {
  OpAttrs attrs;
  attrs.shape = shape;
  return common_tape({a})->record(Op::kExpand, {a.id()}, std::move(attrs));
}

Var reshape(Var a, const Shape& shape) {
  OpAttrs attrs;
  attrs.shape = shape;
  return common_tape({a})->record(Op::kReshape, {a.id()}, std::move(attrs));
}

namespace {

double evaluate_scalar(const ScalarFunction& f, const Tensor& point) {
  Tape tape;
  const Var x = tape.leaf(point);
  return f(tape, x).value().item();
}

}  // namespace

Tensor numeric_gradient(const ScalarFunction& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  std::vector<double> out(point.numel());
  std::vector<double> probe(point.values().begin(), point.values().end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = evaluate_scalar(f, Tensor(point.shape(), probe));
    probe[i] = saved - step;
    const double down = evaluate_scalar(f, Tensor(point.shape(), probe));
    probe[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return Tensor(point.shape(), std::move(out));
}

double check_gradient(const ScalarFunction& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  try {
    Tape tape;
    const Var x = tape.leaf(point);
    const Var y = f(tape, x);
    const std::vector<Var> wrt{x};
    const Tensor analytic = tape.grad(y, wrt).front();
    const Tensor numeric = numeric_gradient(f, point, step);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
      const double a = analytic[i];
      const double n = numeric[i];
      const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
      worst = std::max(worst, std::fabs(a - n) / denom);
    }
    return worst;
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace iega::ad
