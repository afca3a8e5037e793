#include "trident/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace trident::ad {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Tape& tape_of(Var a) {
  require(a.valid(), "autograd: operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  require(a.valid() && b.valid() && a.tape() == b.tape(),
          "autograd: operands belong to different tapes");
  return *a.tape();
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const auto& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::scalar: not a 1 x 1 value");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::bind(const Parameter& param) {
  if (auto it = params_.find(&param); it != params_.end()) return Var(this, it->second);
  nodes_.push_back(Node{param.value, {}, record_ && param.trainable, false, {}});
  const int id = static_cast<int>(nodes_.size()) - 1;
  params_.emplace(&param, id);
  return Var(this, id);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
  }
  nodes_.push_back(Node{std::move(value), {}, needs, false,
                        needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  require(root.tape() == this, "Tape::backward: root from another tape");
  require(root.rows() == 1 && root.cols() == 1, "Tape::backward: root must be 1 x 1");
  if (!requires_grad(root.id())) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

const Matrix* Tape::grad(const Parameter& param) const {
  auto it = params_.find(&param);
  if (it == params_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.has_grad ? &n.grad : nullptr;
}

const Matrix* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? &n.grad : nullptr;
}

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.cols(), "matmul_nt: column dimensions differ");
  return t.push(a.value() * b.value().transpose(), {a, b},
                [a, b](Tape& t, const Matrix& g) {
                  if (a.requires_grad()) t.accumulate(a, g * b.value());
                  if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
                });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return t.push(std::move(v), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var add_const(Var a, const Matrix& c) {
  Tape& t = tape_of(a);
  require(a.rows() == c.rows() && a.cols() == c.cols(), "add_const: shape mismatch");
  return t.push(a.value() + c, {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.push(a.value() * s, {a},
                [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const int out = static_cast<int>(t.size());
  return t.push(a.value().array().exp().matrix(), {a}, [a, out](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(out)));
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const int out = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(out);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double s = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - s).matrix());
    }
    t.accumulate(a, dx);
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = (x.row(r).array() - lse).matrix();
  }
  const int out = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(out);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      dx.row(r) = g.row(r) - y.row(r).array().exp().matrix() * g.row(r).sum();
    }
    t.accumulate(a, dx);
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
              bias.cols() == x.cols(),
          "layer_norm_rows: gain/bias shape mismatch");
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = ((xv.row(r).array() - mu) * inv(r)).matrix();
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  return t.push(std::move(y), {x, gain, bias},
                [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv)](
                    Tape& t, const Matrix& g) {
                  if (gain.requires_grad()) {
                    t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                  }
                  if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
                  if (!x.requires_grad()) return;
                  const Eigen::Index n = xhat.cols();
                  Matrix dx(xhat.rows(), n);
                  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                    const RowVector dxhat = g.row(r).cwiseProduct(gain.value().row(0));
                    const double m1 = dxhat.sum() / n;
                    const double m2 = dxhat.dot(xhat.row(r)) / n;
                    dx.row(r) = inv(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
                  }
                  t.accumulate(x, dx);
                });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
  Tape& t = tape_of(a);
  require(start >= 0 && n >= 0 && start + n <= a.cols(), "slice_cols: out of range");
  return t.push(a.value().middleCols(start, n), {a},
                [a, start, n](Tape& t, const Matrix& g) {
                  Matrix full = Matrix::Zero(a.rows(), a.cols());
                  full.middleCols(start, n) = g;
                  t.accumulate(a, full);
                });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index n) {
  Tape& t = tape_of(a);
  require(start >= 0 && n >= 0 && start + n <= a.rows(), "slice_rows: out of range");
  return t.push(a.value().middleRows(start, n), {a},
                [a, start, n](Tape& t, const Matrix& g) {
                  Matrix full = Matrix::Zero(a.rows(), a.cols());
                  full.middleRows(start, n) = g;
                  t.accumulate(a, full);
                });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no parts");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.tape() == &t && p.rows() == parts[0].rows(), "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix v(parts[0].rows(), cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(v), parts, [ps](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no parts");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.tape() == &t && p.cols() == parts[0].cols(), "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, parts[0].cols());
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(v), parts, [ps](Tape& t, const Matrix& g) {
    Eigen::Index r = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) t.accumulate(p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: id out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.push(std::move(v), {table}, [table, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(table, full);
  });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  Tape& t = tape_of(a);
  require(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "pick: out of range");
  return t.push(Matrix::Constant(1, 1, a.value()(r, c)), {a},
                [a, r, c](Tape& t, const Matrix& g) {
                  Matrix full = Matrix::Zero(a.rows(), a.cols());
                  full(r, c) = g(0, 0);
                  t.accumulate(a, full);
                });
}

Var sum_picked(Var a, std::span<const int> cols, double floor) {
  Tape& t = tape_of(a);
  require(static_cast<Eigen::Index>(cols.size()) == a.rows(), "sum_picked: one column per row");
  double s = 0.0;
  std::vector<int> idx(cols.begin(), cols.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < a.cols(), "sum_picked: column out of range");
    s += std::max(a.value()(static_cast<Eigen::Index>(i), idx[i]), floor);
  }
  return t.push(Matrix::Constant(1, 1, s), {a}, [a, idx, floor](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (a.value()(r, idx[i]) > floor) full(r, idx[i]) = g(0, 0);
    }
    t.accumulate(a, full);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {a},
                [a](Tape& t, const Matrix& g) {
                  t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                });
}

Var sum_scalars(std::span<const Var> parts) {
  require(!parts.empty(), "sum_scalars: no parts");
  Tape& t = tape_of(parts[0]);
  double s = 0.0;
  for (const Var& p : parts) s += p.scalar();
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(Matrix::Constant(1, 1, s), parts, [ps](Tape& t, const Matrix& g) {
    for (const Var& p : ps) t.accumulate(p, g);
  });
}

Var dot_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == 1 && b.rows() == 1 && a.cols() == b.cols(), "dot_rows: shape mismatch");
  return t.push(Matrix::Constant(1, 1, a.value().row(0).dot(b.value().row(0))), {a, b},
                [a, b](Tape& t, const Matrix& g) {
                  if (a.requires_grad()) t.accumulate(a, b.value() * g(0, 0));
                  if (b.requires_grad()) t.accumulate(b, a.value() * g(0, 0));
                });
}

Var log_clamped(Var a, double floor) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseMax(floor).array().log().matrix(), {a},
                [a, floor](Tape& t, const Matrix& g) {
                  const Matrix& x = a.value();
                  Matrix dx = (x.array() > floor).select(g.array() / x.array(), 0.0);
                  t.accumulate(a, dx);
                });
}

Var logsumexp(std::span<const Var> scalars) {
  require(!scalars.empty(), "logsumexp: no inputs");
  Tape& t = tape_of(scalars[0]);
  double m = -std::numeric_limits<double>::infinity();
  for (const Var& s : scalars) m = std::max(m, s.scalar());
  double acc = 0.0;
  for (const Var& s : scalars) acc += std::exp(s.scalar() - m);
  const double y = m + std::log(acc);
  std::vector<Var> ps(scalars.begin(), scalars.end());
  return t.push(Matrix::Constant(1, 1, y), scalars, [ps, y](Tape& t, const Matrix& g) {
    for (const Var& p : ps) {
      t.accumulate(p, Matrix::Constant(1, 1, g(0, 0) * std::exp(p.scalar() - y)));
    }
  });
}

Var straight_through(Var soft, Eigen::Index index) {
  Tape& t = tape_of(soft);
  require(soft.rows() == 1 && index >= 0 && index < soft.cols(),
          "straight_through: expects a 1 x n row and a valid index");
  Matrix hard = Matrix::Zero(1, soft.cols());
  hard(0, index) = 1.0;
  return t.push(std::move(hard), {soft},
                [soft](Tape& t, const Matrix& g) { t.accumulate(soft, g); });
}

}  // namespace trident::ad
