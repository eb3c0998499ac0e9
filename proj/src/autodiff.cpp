#include "seq2gmm/autodiff.hpp"

#include <cmath>

#include "seq2gmm/errors.hpp"

namespace seq2gmm::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ArgumentError("scalar() on a non-scalar node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Var v = push(value, grad_sink != nullptr, nullptr);
  nodes_.back().sink = grad_sink;
  return v;
}

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& grad) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = grad;
  } else {
    node.grad += grad;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ArgumentError("backward() on a node from another tape");
  if (root.value().size() != 1) throw ArgumentError("backward() needs a scalar root");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (auto i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.grad.size() == 0) continue;
    if (node.sink) {
      if (node.sink->size() == 0) {
        *node.sink = node.grad;
      } else {
        *node.sink += node.grad;
      }
    }
    if (node.backprop) {
      // Callbacks only add to earlier nodes' grads and never grow the node list, so `node` stays valid.
      const Matrix grad = std::move(node.grad);
      node.backprop(*this, grad);
    }
  }
}

namespace {

bool any_grad(const Var& a) { return a.requires_grad(); }
bool any_grad(const Var& a, const Var& b) { return a.requires_grad() || b.requires_grad(); }

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ArgumentError("operands live on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  int ia = a.id();
  return a.tape()->push(s * a.value(), any_grad(a), [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, s * g); });
}

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
  int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() * b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var cwise_mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cwise_mul");
  int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var transpose(const Var& a) {
  int ia = a.id();
  return a.tape()->push(a.value().transpose(), any_grad(a),
                        [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add_column(const Var& m, const Var& column) {
  check_same_tape(m, column);
  if (column.cols() != 1 || column.rows() != m.rows()) throw ArgumentError("add_column: shape mismatch");
  int im = m.id(), ic = column.id();
  Matrix value = m.value().colwise() + column.value().col(0);
  return m.tape()->push(std::move(value), any_grad(m, column), [im, ic](Tape& t, const Matrix& g) {
    t.accumulate(im, g);
    if (t.requires_grad(ic)) t.accumulate(ic, g.rowwise().sum());
  });
}

Var add_scalar(const Var& a, double s) {
  int ia = a.id();
  return a.tape()->push(a.value().array() + s, any_grad(a), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var one_minus(const Var& a) {
  int ia = a.id();
  return a.tape()->push(1.0 - a.value().array(), any_grad(a), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, -g); });
}

Var scale_by(const Var& a, const Var& s) {
  check_same_tape(a, s);
  if (s.value().size() != 1) throw ArgumentError("scale_by: scale must be 1x1");
  int ia = a.id(), is = s.id();
  return a.tape()->push(a.value() * s.scalar(), any_grad(a, s), [ia, is](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(is)(0, 0));
    if (t.requires_grad(is)) t.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
  });
}

Var divide_by(const Var& a, const Var& s) {
  check_same_tape(a, s);
  if (s.value().size() != 1) throw ArgumentError("divide_by: divisor must be 1x1");
  int ia = a.id(), is = s.id();
  const double d = s.scalar();
  return a.tape()->push(a.value() / d, any_grad(a, s), [ia, is, d](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g / d);
    if (t.requires_grad(is)) {
      t.accumulate(is, Matrix::Constant(1, 1, -g.cwiseProduct(t.value(ia)).sum() / (d * d)));
    }
  });
}

Var sigmoid(const Var& a) {
  int ia = a.id();
  const int io = static_cast<int>(a.tape()->size());
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape()->push(std::move(y), any_grad(a), [ia, io](Tape& t, const Matrix& g) {
    const auto s = t.value(io).array();
    t.accumulate(ia, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var tanh(const Var& a) {
  int ia = a.id();
  const int io = static_cast<int>(a.tape()->size());
  return a.tape()->push(a.value().array().tanh().matrix(), any_grad(a), [ia, io](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * (1.0 - t.value(io).array().square())).matrix());
  });
}

Var exp(const Var& a) {
  int ia = a.id();
  const int io = static_cast<int>(a.tape()->size());
  return a.tape()->push(a.value().array().exp().matrix(), any_grad(a), [ia, io](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() * t.value(io).array()).matrix());
  });
}

Var log(const Var& a) {
  int ia = a.id();
  return a.tape()->push(a.value().array().log().matrix(), any_grad(a), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g.array() / t.value(ia).array()).matrix());
  });
}

Var square(const Var& a) {
  int ia = a.id();
  return a.tape()->push(a.value().array().square().matrix(), any_grad(a), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, (2.0 * g.array() * t.value(ia).array()).matrix());
  });
}

Var sqrt(const Var& a) {
  int ia = a.id();
  return a.tape()->push(a.value().array().sqrt().matrix(), any_grad(a), [ia](Tape& t, const Matrix& g) {
    Eigen::ArrayXXd r = t.value(ia).array().sqrt();
    t.accumulate(ia, (r > 0.0).select(g.array() / (2.0 * r), 0.0).matrix());
  });
}

Var sum(const Var& a) {
  int ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->push(Matrix::Constant(1, 1, a.value().sum()), any_grad(a),
                        [ia, rows, cols](Tape& t, const Matrix& g) {
                          t.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0)));
                        });
}

Var dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "dot");
  int ia = a.id(), ib = b.id();
  return a.tape()->push(Matrix::Constant(1, 1, a.value().cwiseProduct(b.value()).sum()), any_grad(a, b),
                        [ia, ib](Tape& t, const Matrix& g) {
                          const double s = g(0, 0);
                          if (t.requires_grad(ia)) t.accumulate(ia, s * t.value(ib));
                          if (t.requires_grad(ib)) t.accumulate(ib, s * t.value(ia));
                        });
}

Var softmax(const Var& a) {
  int ia = a.id();
  const int io = static_cast<int>(a.tape()->size());
  const Matrix& x = a.value();
  Matrix y = (x.array() - x.maxCoeff()).exp().matrix();
  y /= y.sum();
  return a.tape()->push(std::move(y), any_grad(a), [ia, io](Tape& t, const Matrix& g) {
    const Matrix& out = t.value(io);
    const double inner = g.cwiseProduct(out).sum();
    t.accumulate(ia, (out.array() * (g.array() - inner)).matrix());
  });
}

Var log_sum_exp(const Var& a) {
  int ia = a.id();
  const Matrix& x = a.value();
  const double m = x.maxCoeff();
  const double lse = std::isfinite(m) ? m + std::log((x.array() - m).exp().sum()) : m;
  return a.tape()->push(Matrix::Constant(1, 1, lse), any_grad(a), [ia, lse](Tape& t, const Matrix& g) {
    t.accumulate(ia, (g(0, 0) * (t.value(ia).array() - lse).exp()).matrix());
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows of nothing");
  Tape* tape = parts.front().tape();
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const auto& p : parts) {
    if (p.tape() != tape || p.cols() != cols) throw ArgumentError("concat_rows: incompatible parts");
    rows += p.rows();
    grad = grad || p.requires_grad();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix value(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    value.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return tape->push(std::move(value), grad, [ids, heights](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleRows(off, heights[k]));
      off += heights[k];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols of nothing");
  Tape* tape = parts.front().tape();
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.tape() != tape || p.rows() != rows) throw ArgumentError("concat_cols: incompatible parts");
    cols += p.cols();
    grad = grad || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix value(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return tape->push(std::move(value), grad, [ids, widths](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ArgumentError("slice_rows out of range");
  int ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->push(a.value().middleRows(start, count), any_grad(a),
                        [ia, rows, cols, start, count](Tape& t, const Matrix& g) {
                          Matrix full = Matrix::Zero(rows, cols);
                          full.middleRows(start, count) = g;
                          t.accumulate(ia, full);
                        });
}

Var element(const Var& a, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || col < 0 || row >= a.rows() || col >= a.cols()) throw ArgumentError("element out of range");
  int ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->push(Matrix::Constant(1, 1, a.value()(row, col)), any_grad(a),
                        [ia, rows, cols, row, col](Tape& t, const Matrix& g) {
                          Matrix full = Matrix::Zero(rows, cols);
                          full(row, col) = g(0, 0);
                          t.accumulate(ia, full);
                        });
}

}  // namespace seq2gmm::ad
