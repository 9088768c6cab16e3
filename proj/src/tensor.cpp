#include "scorelab/tensor.hpp"

#include "scorelab/errors.hpp"

#include <algorithm>
#include <optional>
#include <string>

namespace scorelab {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void fail(OpKind kind, const std::string& what) {
  throw DimensionError(std::string(to_string(kind)) + ": " + what);
}

// Message built only on failure; the checks sit on every recorded op.
#define SCORELAB_REQUIRE(ok, kind, what) \
  do {                                   \
    if (!(ok)) fail(kind, what);         \
  } while (0)

void require_arity(OpKind kind, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ContractViolation(std::string(to_string(kind)) + ": expected " + std::to_string(want) +
                            " operands, got " + std::to_string(got));
  }
}

void require_same(OpKind kind, const Matrix& a, const Matrix& b) {
  SCORELAB_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), kind,
                   "shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Tensor zeros(Index rows, Index cols) { return Tensor(Matrix::Zero(rows, cols)); }

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Affine: return "affine";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::ColSum: return "col_sum";
    case OpKind::BroadcastRows: return "broadcast_rows";
    case OpKind::RowSum: return "row_sum";
    case OpKind::BroadcastCols: return "broadcast_cols";
    case OpKind::RowScale: return "row_scale";
    case OpKind::Tanh: return "tanh";
    case OpKind::TanhGrad: return "tanh_grad";
    case OpKind::Softplus: return "softplus";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SigmoidGrad: return "sigmoid_grad";
    case OpKind::Sum: return "sum";
    case OpKind::Fill: return "fill";
    case OpKind::Inner: return "inner";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}

Tensor::Tensor(std::shared_ptr<const Matrix> value, Tape* tape, std::size_t node)
    : value_(std::move(value)), tape_(tape), node_(node) {}

Tensor Tensor::scalar(Scalar value) { return Tensor(Matrix::Constant(1, 1, value)); }

Scalar Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(value()));
  return (*value_)(0, 0);
}

// ---------------------------------------------------------------------------
// Forward kernels

Matrix evaluate(OpKind kind, std::span<const Matrix* const> in, const OpAttrs& at) {
  switch (kind) {
    case OpKind::Add:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return *in[0] + *in[1];
    case OpKind::Sub:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return *in[0] - *in[1];
    case OpKind::Affine: {
      require_arity(kind, in.size(), 1);
      if (at.beta == 0.0) return at.alpha * *in[0];
      return (at.alpha * in[0]->array() + at.beta).matrix();
    }
    case OpKind::Mul:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return in[0]->cwiseProduct(*in[1]);
    case OpKind::MatMul: {
      require_arity(kind, in.size(), 2);
      const Matrix& a = *in[0];
      const Matrix& b = *in[1];
      const Index inner_a = at.trans_a ? a.rows() : a.cols();
      const Index inner_b = at.trans_b ? b.cols() : b.rows();
      SCORELAB_REQUIRE(inner_a == inner_b, kind, "inner dimension mismatch " + shape_str(a) + " vs " + shape_str(b));
      Matrix out(at.trans_a ? a.cols() : a.rows(), at.trans_b ? b.rows() : b.cols());
      if (!at.trans_a && !at.trans_b) out.noalias() = a * b;
      else if (!at.trans_a) out.noalias() = a * b.transpose();
      else if (!at.trans_b) out.noalias() = a.transpose() * b;
      else out.noalias() = a.transpose() * b.transpose();
      return out;
    }
    case OpKind::AddBias:
      require_arity(kind, in.size(), 2);
      SCORELAB_REQUIRE(in[1]->rows() == 1 && in[1]->cols() == in[0]->cols(), kind,
              "bias " + shape_str(*in[1]) + " does not match " + shape_str(*in[0]));
      return in[0]->rowwise() + in[1]->row(0);
    case OpKind::ColSum:
      require_arity(kind, in.size(), 1);
      return in[0]->colwise().sum();
    case OpKind::BroadcastRows:
      require_arity(kind, in.size(), 1);
      SCORELAB_REQUIRE(in[0]->rows() == 1 && at.rows >= 0, kind, "expects a single row");
      return in[0]->replicate(at.rows, 1);
    case OpKind::RowSum:
      require_arity(kind, in.size(), 1);
      return in[0]->rowwise().sum();
    case OpKind::BroadcastCols:
      require_arity(kind, in.size(), 1);
      SCORELAB_REQUIRE(in[0]->cols() == 1 && at.cols >= 0, kind, "expects a single column");
      return in[0]->replicate(1, at.cols);
    case OpKind::RowScale:
      require_arity(kind, in.size(), 2);
      SCORELAB_REQUIRE(in[1]->cols() == 1 && in[1]->rows() == in[0]->rows(), kind,
              "weights " + shape_str(*in[1]) + " do not match " + shape_str(*in[0]));
      return (in[0]->array().colwise() * in[1]->col(0).array()).matrix();
    case OpKind::Tanh: {
      require_arity(kind, in.size(), 1);
      // tanh(x) = 1 - 2 / (e^{2x} + 1). Eigen vectorises exp but not tanh for doubles;
      // |x| <= 20 already rounds tanh to +-1, and the clamp keeps exp finite.
      const auto x = in[0]->array().min(20.0).max(-20.0);
      return (1.0 - 2.0 / ((2.0 * x).exp() + 1.0)).matrix();
    }
    case OpKind::TanhGrad:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return (in[1]->array() * (1.0 - in[0]->array().square())).matrix();
    case OpKind::Softplus: {
      require_arity(kind, in.size(), 1);
      const auto x = in[0]->array();
      return (x.max(0.0) + (-x.abs()).exp().log1p()).matrix();
    }
    case OpKind::Sigmoid:
      require_arity(kind, in.size(), 1);
      return (1.0 / (1.0 + (-in[0]->array()).exp())).matrix();
    case OpKind::SigmoidGrad:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return (in[1]->array() * in[0]->array() * (1.0 - in[0]->array())).matrix();
    case OpKind::Sum:
      require_arity(kind, in.size(), 1);
      return Matrix::Constant(1, 1, in[0]->sum());
    case OpKind::Fill:
      require_arity(kind, in.size(), 1);
      SCORELAB_REQUIRE(in[0]->rows() == 1 && in[0]->cols() == 1, kind, "expects a 1x1 operand");
      SCORELAB_REQUIRE(at.rows >= 0 && at.cols >= 0, kind, "negative target shape");
      return Matrix::Constant(at.rows, at.cols, (*in[0])(0, 0));
    case OpKind::Inner:
      require_arity(kind, in.size(), 2);
      require_same(kind, *in[0], *in[1]);
      return Matrix::Constant(1, 1, in[0]->cwiseProduct(*in[1]).sum());
    case OpKind::SquaredNorm:
      require_arity(kind, in.size(), 1);
      return Matrix::Constant(1, 1, in[0]->squaredNorm());
    case OpKind::Concat: {
      if (in.empty()) throw ContractViolation("concat: no operands");
      SCORELAB_REQUIRE(at.axis == 0 || at.axis == 1, kind, "axis must be 0 or 1");
      Index total = 0;
      for (const Matrix* m : in) {
        if (at.axis == 0) {
          SCORELAB_REQUIRE(m->cols() == in[0]->cols(), kind, "column count mismatch");
          total += m->rows();
        } else {
          SCORELAB_REQUIRE(m->rows() == in[0]->rows(), kind, "row count mismatch");
          total += m->cols();
        }
      }
      Matrix out = at.axis == 0 ? Matrix(total, in[0]->cols()) : Matrix(in[0]->rows(), total);
      Index offset = 0;
      for (const Matrix* m : in) {
        if (at.axis == 0) {
          out.middleRows(offset, m->rows()) = *m;
          offset += m->rows();
        } else {
          out.middleCols(offset, m->cols()) = *m;
          offset += m->cols();
        }
      }
      return out;
    }
    case OpKind::Slice: {
      require_arity(kind, in.size(), 1);
      SCORELAB_REQUIRE(at.axis == 0 || at.axis == 1, kind, "axis must be 0 or 1");
      const Index extent = at.axis == 0 ? in[0]->rows() : in[0]->cols();
      SCORELAB_REQUIRE(at.begin >= 0 && at.length >= 0 && at.begin + at.length <= extent, kind,
              "range [" + std::to_string(at.begin) + ", " + std::to_string(at.begin + at.length) +
                  ") outside extent " + std::to_string(extent));
      if (at.axis == 0) return in[0]->middleRows(at.begin, at.length);
      return in[0]->middleCols(at.begin, at.length);
    }
    case OpKind::Leaf:
      throw ContractViolation("leaf nodes have no forward kernel");
  }
  throw ContractViolation("unknown op kind " + std::to_string(static_cast<int>(kind)));
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::leaf(Matrix value) {
  if (checked_ && !value.allFinite()) throw NonFiniteError("leaf value is not finite");
  auto stored = std::make_shared<const Matrix>(std::move(value));
  nodes_.push_back(Node{OpKind::Leaf, {}, {}, stored});
  return Tensor(stored, this, nodes_.size() - 1);
}

Tensor Tape::record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  if (kind == OpKind::Leaf) throw ContractViolation("use Tape::leaf to create leaves");
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw ContractViolation(std::string(to_string(kind)) + ": undefined operand");
    if (t.on_tape() && t.tape() != this) throw ContractViolation("operands live on different tapes");
    values.push_back(&t.value());
  }
  auto value = std::make_shared<const Matrix>(evaluate(kind, values, attrs));
  if (checked_ && !value->allFinite()) {
    throw NonFiniteError(std::string(to_string(kind)) + " produced a non-finite value at node " +
                         std::to_string(nodes_.size()));
  }
  nodes_.push_back(Node{kind, attrs, std::vector<Tensor>(inputs.begin(), inputs.end()), value});
  return Tensor(value, this, nodes_.size() - 1);
}

std::vector<Matrix> Tape::replay() const {
  std::vector<Matrix> values(nodes_.size());
  std::vector<const Matrix*> args;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.kind == OpKind::Leaf) {
      values[i] = *node.value;
      continue;
    }
    args.clear();
    for (const Tensor& t : node.inputs) args.push_back(t.on_tape() ? &values[t.node()] : &t.value());
    values[i] = evaluate(node.kind, args, node.attrs);
  }
  return values;
}

std::vector<Tensor> Tape::backward(const Tensor& output, std::span<const Tensor> wrt, bool create_graph) {
  if (!output.defined() || output.rows() != 1 || output.cols() != 1) {
    throw ContractViolation("backward: output must be a 1x1 tensor");
  }
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  auto zero_like = [](const Tensor& t) { return zeros(t.rows(), t.cols()); };

  if (output.tape() != this) {
    for (const Tensor& w : wrt) result.push_back(zero_like(w));
    return result;
  }
  const std::size_t count = output.node() + 1;

  // Forward sweep: which nodes depend on any requested tensor.
  std::vector<char> depends(count, 0);
  std::vector<char> requested(count, 0);
  std::size_t first = count;
  for (const Tensor& w : wrt) {
    if (w.tape() == this && w.node() < count) {
      depends[w.node()] = 1;
      requested[w.node()] = 1;
      first = std::min(first, w.node());
    }
  }
  for (std::size_t i = first; i < count; ++i) {
    if (depends[i]) continue;
    for (const Tensor& in : nodes_[i].inputs) {
      if (in.tape() == this && depends[in.node()]) {
        depends[i] = 1;
        break;
      }
    }
  }

  std::vector<Tensor> grads(count);
  if (first < count && depends[output.node()]) {
    std::optional<PauseGuard> pause;
    if (!create_graph) pause.emplace(*this);
    grads[output.node()] = Tensor::scalar(1.0);
    std::vector<char> needed;
    for (std::size_t i = output.node() + 1; i-- > first;) {
      if (!depends[i] || !grads[i].defined()) continue;
      const Node& node = nodes_[i];
      if (node.kind == OpKind::Leaf) continue;
      needed.assign(node.inputs.size(), 0);
      bool any = false;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& in = node.inputs[k];
        needed[k] = in.tape() == this && depends[in.node()];
        any = any || needed[k];
      }
      if (!any) continue;
      // Copy: recording new nodes may reallocate nodes_.
      const Node snapshot = node;
      std::vector<Tensor> partials = backward_rule(snapshot, i, grads[i], needed);
      for (std::size_t k = 0; k < snapshot.inputs.size(); ++k) {
        if (!needed[k]) continue;
        const std::size_t target = snapshot.inputs[k].node();
        grads[target] = grads[target].defined() ? add(grads[target], partials[k]) : partials[k];
      }
      if (!requested[i]) grads[i] = Tensor();
    }
  }
  for (const Tensor& w : wrt) {
    if (w.tape() == this && w.node() < count && grads[w.node()].defined()) {
      result.push_back(grads[w.node()]);
    } else {
      result.push_back(zero_like(w));
    }
  }
  return result;
}

std::vector<Tensor> Tape::backward_rule(const Node& node, std::size_t index, const Tensor& g,
                                        const std::vector<char>& needed) {
  const auto& in = node.inputs;
  std::vector<Tensor> d(in.size());
  const OpAttrs& at = node.attrs;
  switch (node.kind) {
    case OpKind::Add:
      d[0] = g;
      d[1] = g;
      break;
    case OpKind::Sub:
      d[0] = g;
      if (needed[1]) d[1] = scale(g, -1.0);
      break;
    case OpKind::Affine:
      d[0] = at.alpha == 1.0 ? g : scale(g, at.alpha);
      break;
    case OpKind::Mul:
      if (needed[0]) d[0] = mul(g, in[1]);
      if (needed[1]) d[1] = mul(g, in[0]);
      break;
    case OpKind::MatMul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      if (!at.trans_a && !at.trans_b) {
        if (needed[0]) d[0] = matmul(g, b, false, true);
        if (needed[1]) d[1] = matmul(a, g, true, false);
      } else if (!at.trans_a) {
        if (needed[0]) d[0] = matmul(g, b, false, false);
        if (needed[1]) d[1] = matmul(g, a, true, false);
      } else if (!at.trans_b) {
        if (needed[0]) d[0] = matmul(b, g, false, true);
        if (needed[1]) d[1] = matmul(a, g, false, false);
      } else {
        if (needed[0]) d[0] = matmul(b, g, true, true);
        if (needed[1]) d[1] = matmul(g, a, true, true);
      }
      break;
    }
    case OpKind::AddBias:
      d[0] = g;
      if (needed[1]) d[1] = col_sum(g);
      break;
    case OpKind::ColSum:
      d[0] = broadcast_rows(g, in[0].rows());
      break;
    case OpKind::BroadcastRows:
      d[0] = col_sum(g);
      break;
    case OpKind::RowSum:
      d[0] = broadcast_cols(g, in[0].cols());
      break;
    case OpKind::BroadcastCols:
      d[0] = row_sum(g);
      break;
    case OpKind::RowScale:
      if (needed[0]) d[0] = row_scale(g, in[1]);
      if (needed[1]) d[1] = row_sum(mul(g, in[0]));
      break;
    case OpKind::Tanh:
      d[0] = tanh_grad(Tensor(node.value, this, index), g);
      break;
    case OpKind::TanhGrad:
      // out = g_in * (1 - y^2)
      if (needed[0]) d[0] = scale(mul(mul(in[0], in[1]), g), -2.0);
      if (needed[1]) d[1] = tanh_grad(in[0], g);
      break;
    case OpKind::Softplus:
      d[0] = mul(g, sigmoid(in[0]));
      break;
    case OpKind::Sigmoid:
      d[0] = sigmoid_grad(Tensor(node.value, this, index), g);
      break;
    case OpKind::SigmoidGrad:
      // out = g_in * y * (1 - y)
      if (needed[0]) d[0] = mul(mul(in[1], g), affine(in[0], -2.0, 1.0));
      if (needed[1]) d[1] = sigmoid_grad(in[0], g);
      break;
    case OpKind::Sum:
      d[0] = fill(g, in[0].rows(), in[0].cols());
      break;
    case OpKind::Fill:
      d[0] = sum(g);
      break;
    case OpKind::Inner:
      if (needed[0]) d[0] = mul(fill(g, in[1].rows(), in[1].cols()), in[1]);
      if (needed[1]) d[1] = mul(fill(g, in[0].rows(), in[0].cols()), in[0]);
      break;
    case OpKind::SquaredNorm:
      d[0] = scale(mul(fill(g, in[0].rows(), in[0].cols()), in[0]), 2.0);
      break;
    case OpKind::Concat: {
      Index offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const Index extent = at.axis == 0 ? in[k].rows() : in[k].cols();
        if (needed[k]) d[k] = slice(g, at.axis, offset, extent);
        offset += extent;
      }
      break;
    }
    case OpKind::Slice: {
      const Tensor& a = in[0];
      const Index extent = at.axis == 0 ? a.rows() : a.cols();
      const Index tail = extent - at.begin - at.length;
      std::vector<Tensor> parts;
      auto pad = [&](Index n) {
        if (n > 0) parts.push_back(at.axis == 0 ? zeros(n, a.cols()) : zeros(a.rows(), n));
      };
      pad(at.begin);
      parts.push_back(g);
      pad(tail);
      d[0] = parts.size() == 1 ? g : concat(parts, at.axis);
      break;
    }
    case OpKind::Leaf:
      break;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Free-function ops

Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw ContractViolation(std::string(to_string(kind)) + ": undefined operand");
    if (t.on_tape()) {
      if (tape != nullptr && tape != t.tape()) throw ContractViolation("operands live on different tapes");
      tape = t.tape();
    }
  }
  if (tape != nullptr && tape->recording()) return tape->record(kind, inputs, attrs);
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  for (const Tensor& t : inputs) values.push_back(&t.value());
  return Tensor(evaluate(kind, values, attrs));
}

namespace {

Tensor unary(OpKind kind, const Tensor& a, const OpAttrs& attrs = {}) {
  const Tensor args[] = {a};
  return record(kind, args, attrs);
}

Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, const OpAttrs& attrs = {}) {
  const Tensor args[] = {a, b};
  return record(kind, args, attrs);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::Sub, a, b); }
Tensor scale(const Tensor& a, Scalar factor) { return affine(a, factor, 0.0); }

Tensor affine(const Tensor& a, Scalar alpha, Scalar beta) {
  OpAttrs at;
  at.alpha = alpha;
  at.beta = beta;
  return unary(OpKind::Affine, a, at);
}

Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::Mul, a, b); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  OpAttrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return binary(OpKind::MatMul, a, b, at);
}

Tensor matvec(const Tensor& m, const Tensor& x) {
  if (x.cols() != 1) throw DimensionError("matvec: x must be a column vector");
  return matmul(m, x);
}

Tensor add_bias(const Tensor& a, const Tensor& bias) { return binary(OpKind::AddBias, a, bias); }
Tensor col_sum(const Tensor& a) { return unary(OpKind::ColSum, a); }

Tensor broadcast_rows(const Tensor& row, Index rows) {
  OpAttrs at;
  at.rows = rows;
  return unary(OpKind::BroadcastRows, row, at);
}

Tensor row_sum(const Tensor& a) { return unary(OpKind::RowSum, a); }

Tensor broadcast_cols(const Tensor& col, Index cols) {
  OpAttrs at;
  at.cols = cols;
  return unary(OpKind::BroadcastCols, col, at);
}

Tensor row_scale(const Tensor& a, const Tensor& weights) { return binary(OpKind::RowScale, a, weights); }
Tensor tanh(const Tensor& a) { return unary(OpKind::Tanh, a); }
Tensor tanh_grad(const Tensor& y, const Tensor& g) { return binary(OpKind::TanhGrad, y, g); }
Tensor softplus(const Tensor& a) { return unary(OpKind::Softplus, a); }
Tensor sigmoid(const Tensor& a) { return unary(OpKind::Sigmoid, a); }
Tensor sigmoid_grad(const Tensor& y, const Tensor& g) { return binary(OpKind::SigmoidGrad, y, g); }
Tensor sum(const Tensor& a) { return unary(OpKind::Sum, a); }

Tensor mean(const Tensor& a) {
  if (a.rows() * a.cols() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.rows() * a.cols()));
}

Tensor fill(const Tensor& s, Index rows, Index cols) {
  OpAttrs at;
  at.rows = rows;
  at.cols = cols;
  return unary(OpKind::Fill, s, at);
}

Tensor inner(const Tensor& a, const Tensor& b) { return binary(OpKind::Inner, a, b); }
Tensor squared_norm(const Tensor& a) { return unary(OpKind::SquaredNorm, a); }

Tensor concat(std::span<const Tensor> parts, int axis) {
  OpAttrs at;
  at.axis = axis;
  return record(OpKind::Concat, parts, at);
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, int axis, Index begin, Index length) {
  OpAttrs at;
  at.axis = axis;
  at.begin = begin;
  at.length = length;
  return unary(OpKind::Slice, a, at);
}

Tensor jacobian_row(const Tensor& s, const Tensor& x, Index i) {
  if (i < 0 || i >= s.cols()) {
    throw DimensionError("jacobian_row: index " + std::to_string(i) + " out of range for " +
                         std::to_string(s.cols()) + " outputs");
  }
  if (!x.on_tape()) throw ContractViolation("jacobian_row: x must live on a tape");
  const Tensor component = sum(slice(s, 1, i, 1));
  const Tensor wrt[] = {x};
  return x.tape()->backward(component, wrt, true)[0];
}

}  // namespace scorelab
