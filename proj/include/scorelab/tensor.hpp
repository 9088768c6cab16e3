#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace scorelab {

using Scalar = double;
using Index = Eigen::Index;
/// Tensor storage: two-dimensional, row-major. Batches are stacked along rows.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class Tape;

/// A dense real array, optionally bound to a node on a Tape. Tensors without
/// a tape handle are constants and may be shared freely between threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value);
  static Tensor scalar(Scalar value);

  const Matrix& value() const { return *value_; }
  Index rows() const { return value_->rows(); }
  Index cols() const { return value_->cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  bool defined() const { return value_ != nullptr; }
  /// Value of a 1x1 tensor.
  Scalar item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

 private:
  friend class Tape;
  Tensor(std::shared_ptr<const Matrix> value, Tape* tape, std::size_t node);

  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

enum class OpKind : int {
  Leaf,
  Add,
  Sub,
  Affine,         // alpha * a + beta
  Mul,            // elementwise
  MatMul,         // op(a) * op(b), op = optional transpose
  AddBias,        // (B x n) + broadcast of (1 x n)
  ColSum,         // (B x n) -> (1 x n)
  BroadcastRows,  // (1 x n) -> (rows x n)
  RowSum,         // (B x n) -> (B x 1)
  BroadcastCols,  // (B x 1) -> (B x cols)
  RowScale,       // (B x n) * broadcast of (B x 1)
  Tanh,
  TanhGrad,       // g * (1 - y^2) for y = tanh(.)
  Softplus,
  Sigmoid,
  SigmoidGrad,    // g * y * (1 - y) for y = sigmoid(.)
  Sum,            // -> (1 x 1)
  Fill,           // (1 x 1) -> (rows x cols)
  Inner,          // <a, b> -> (1 x 1)
  SquaredNorm,    // ||a||^2 -> (1 x 1)
  Concat,
  Slice,
};

std::string_view to_string(OpKind kind);

struct OpAttrs {
  Scalar alpha = 1.0;
  Scalar beta = 0.0;
  bool trans_a = false;
  bool trans_b = false;
  int axis = 0;
  Index begin = 0;
  Index length = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Append-only record of primitive operations. Node operands always precede
/// the node, so the record is topologically ordered by construction. The
/// backward pass emits ordinary primitives, which lets gradients be
/// differentiated again.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value);
  Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

  /// Gradients of a scalar `output` with respect to each tensor in `wrt`.
  /// Entries of `wrt` that `output` does not depend on (or that are not on
  /// this tape) receive a zero tensor of their shape. With `create_graph`
  /// the gradient computation is itself recorded.
  std::vector<Tensor> backward(const Tensor& output, std::span<const Tensor> wrt,
                               bool create_graph = false);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
  bool recording() const { return recording_; }

  /// Raise NonFiniteError as soon as a recorded value contains NaN or Inf.
  void set_checked(bool checked) { checked_ = checked; }
  bool checked() const { return checked_; }

  /// Recompute every node from the leaf values and constants stored on the tape.
  std::vector<Matrix> replay() const;

  /// Suspends recording; ops on tape tensors then produce constants.
  class PauseGuard {
   public:
    explicit PauseGuard(Tape& tape) : tape_(tape), previous_(tape.recording_) { tape.recording_ = false; }
    ~PauseGuard() { tape_.recording_ = previous_; }
    PauseGuard(const PauseGuard&) = delete;
    PauseGuard& operator=(const PauseGuard&) = delete;

   private:
    Tape& tape_;
    bool previous_;
  };

 private:
  struct Node {
    OpKind kind;
    OpAttrs attrs;
    std::vector<Tensor> inputs;
    std::shared_ptr<const Matrix> value;
  };

  std::vector<Tensor> backward_rule(const Node& node, std::size_t index, const Tensor& grad,
                                    const std::vector<char>& needed);

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool checked_ = false;
};

/// Forward kernel shared by recording and replay.
Matrix evaluate(OpKind kind, std::span<const Matrix* const> inputs, const OpAttrs& attrs);

/// Records `kind` on whichever tape the operands live on; with no tape (or a
/// paused one) the result is a constant.
Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
Tensor affine(const Tensor& a, Scalar alpha, Scalar beta);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
/// Matrix-vector product for a single column vector `x`.
Tensor matvec(const Tensor& m, const Tensor& x);
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor col_sum(const Tensor& a);
Tensor broadcast_rows(const Tensor& row, Index rows);
Tensor row_sum(const Tensor& a);
Tensor broadcast_cols(const Tensor& col, Index cols);
Tensor row_scale(const Tensor& a, const Tensor& weights);
Tensor tanh(const Tensor& a);
Tensor tanh_grad(const Tensor& y, const Tensor& g);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sigmoid_grad(const Tensor& y, const Tensor& g);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor fill(const Tensor& s, Index rows, Index cols);
Tensor inner(const Tensor& a, const Tensor& b);
Tensor squared_norm(const Tensor& a);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, Index begin, Index length);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }

/// Row `i` of the Jacobian d s / d x for every batch row: the gradient of
/// s[:, i] with respect to x, recorded so that it can be differentiated again.
Tensor jacobian_row(const Tensor& s, const Tensor& x, Index i);

}  // namespace scorelab
