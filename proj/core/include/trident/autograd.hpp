#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation of one forward pass; backward()
// walks it in reverse. Parameters are bound by address, and their gradients
// are read back from the tape after backward().

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace trident::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  // A non-recording tape evaluates values only; nothing requires a gradient.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  // Binds a parameter once per tape; repeated binds return the same leaf.
  Var bind(const Parameter& param);

  // Adds a node whose gradient flows to `parents` via `backward`. The closure
  // is dropped when no parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var push(Matrix value, std::span<const Var> parents, Backward backward);

  void backward(Var root);

  // Gradient accumulated for `param`, or nullptr if it was not bound or
  // received no gradient.
  const Matrix* grad(const Parameter& param) const;
  const Matrix* grad(Var v) const;

  void accumulate(Var v, const Matrix& g);
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> params_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var add_const(Var a, const Matrix& c);
Var scale(Var a, double s);
Var relu(Var a);
Var exp(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index n);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const int> ids);
Var pick(Var a, Eigen::Index r, Eigen::Index c);  // 1 x 1
// Sum over rows i of max(a(i, cols[i]), floor); entries at the floor get no
// gradient. Used to score teacher-forced log-probability rows.
Var sum_picked(Var a, std::span<const int> cols, double floor);
Var sum(Var a);                                    // 1 x 1
Var sum_scalars(std::span<const Var> parts);       // each part 1 x 1
Var dot_rows(Var a, Var b);                        // 1 x 1, both 1 x n
// Elementwise log with inputs clamped at `floor`; the clamp has zero gradient.
Var log_clamped(Var a, double floor = 1e-12);
Var logsumexp(std::span<const Var> scalars);
// Value is the one-hot vector of `index` (same shape as `soft`, a 1 x n row);
// the gradient passes to `soft` unchanged.
Var straight_through(Var soft, Eigen::Index index);

}  // namespace trident::ad
