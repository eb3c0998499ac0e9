#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace seq2gmm::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a matrix-valued node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a computation over matrices and replays it backwards (reverse-mode accumulation).
///
/// Leaves created with `parameter` report their adjoint into a caller-owned gradient buffer
/// when `backward` runs. Nodes that depend on no parameter record no backward step, so a
/// tape built from constants only is a plain forward evaluation.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& grad)>;

  Tape() { nodes_.reserve(4096); }

  Var constant(Matrix value);
  Var parameter(const Matrix& value, Matrix* grad_sink);

  /// Seeds d(root)/d(root) = 1 and accumulates adjoints into every parameter's sink.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by the operator implementations.
  Var push(Matrix value, bool requires_grad, Backprop backprop);
  void accumulate(int id, const Matrix& grad);
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Matrix* sink = nullptr;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);

Var matmul(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Adds a column vector to every column of a matrix.
Var add_column(const Var& m, const Var& column);
Var add_scalar(const Var& a, double s);
/// 1 - a, elementwise.
Var one_minus(const Var& a);
/// a * s where s is a 1x1 node.
Var scale_by(const Var& a, const Var& s);
/// a / s where s is a 1x1 node.
Var divide_by(const Var& a, const Var& s);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Elementwise sqrt; the derivative at exactly 0 is taken as 0.
Var sqrt(const Var& a);

Var sum(const Var& a);
Var dot(const Var& a, const Var& b);
/// Softmax over all entries.
Var softmax(const Var& a);
/// log(sum(exp(a))) over all entries, 1x1.
Var log_sum_exp(const Var& a);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var element(const Var& a, Eigen::Index row, Eigen::Index col = 0);

}  // namespace seq2gmm::ad
