#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "styletx/tensor.hpp"

namespace styletx {

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  scale,
  concat,
  slice,
  gather_rows,
  sigmoid,
  tanh,
  softmax,
  log_softmax,
  sum,
  mean,
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "?";
}

/// A named learnable tensor. Models own these; tapes only reference them.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.requires_grad = true;
  }
};

class Tape;

/// Handle to a node recorded on a Tape. Becomes stale once the tape is
/// consumed by backward() or cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool requires_grad() const;
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  friend class Gradients;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

/// Result of a backward pass: one gradient per differentiable leaf.
class Gradients {
 public:
  /// Gradient of a leaf recorded with requires_grad.
  const Tensor& operator[](const Var& leaf) const {
    if (leaf.generation_ != generation_) {
      throw TapeError("gradient lookup with a handle from another tape generation");
    }
    auto it = leaves_.find(leaf.id_);
    if (it == leaves_.end()) {
      throw TapeError("node " + std::to_string(leaf.id_) +
                      " is not a differentiable leaf");
    }
    return it->second;
  }

  /// Gradients of bound Parameters keyed by parameter name.
  const std::map<std::string, Tensor>& named() const { return named_; }

  const Tensor& named(const std::string& name) const {
    auto it = named_.find(name);
    if (it == named_.end()) throw TapeError("no gradient for parameter " + name);
    return it->second;
  }

 private:
  friend class Tape;
  std::uint64_t generation_ = 0;
  std::unordered_map<std::size_t, Tensor> leaves_;
  std::map<std::string, Tensor> named_;
};

/// Extra per-op data saved on the tape.
struct OpAux {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 0.0;
  std::vector<std::size_t> indices;
};

/// Reverse-mode differentiation tape.
///
/// Ops append nodes in execution order, so the node list is topological by
/// construction. backward() consumes the tape: it runs once, then clears all
/// nodes and invalidates every outstanding Var.
///
/// In inference mode parameters bind as constants and nothing is kept for
/// the backward sweep.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor t) {
    t.requires_grad = false;
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
  }

  /// Leaf that owns its value; differentiable when t.requires_grad is set.
  Var leaf(Tensor t) {
    Node n;
    n.requires_grad = t.requires_grad && recording();
    n.value = std::move(t);
    return push(std::move(n));
  }

  /// Leaf bound to a model parameter by reference. The parameter must
  /// outlive the tape and stay unmodified until backward() returns.
  Var parameter(const Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var(this, it->second, generation_);
    if (recording() && !bound_names_.insert(p.name).second) {
      throw TapeError("two parameters share the name " + p.name);
    }
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = p.value.requires_grad && recording();
    Var v = push(std::move(n));
    bound_.emplace(&p, v.id_);
    return v;
  }

  /// Appends an op node. Inputs that do not need gradients make the output
  /// a plain constant, so inference graphs keep nothing for backward.
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, OpAux aux = {}) {
    Node n;
    n.value = std::move(value);
    bool any = false;
    for (const auto& in : inputs) {
      check(in);
      any = any || nodes_[in.id_].requires_grad;
    }
    if (any && recording()) {
      n.kind = kind;
      n.requires_grad = true;
      n.inputs.reserve(inputs.size());
      for (const auto& in : inputs) n.inputs.push_back(in.id_);
      n.aux = std::move(aux);
    }
    return push(std::move(n));
  }

  const Tensor& value(const Var& v) const {
    check(v);
    return nodes_[v.id_].val();
  }

  bool requires_grad(const Var& v) const {
    check(v);
    return nodes_[v.id_].requires_grad;
  }

  /// Gradient of a scalar loss with respect to every differentiable leaf.
  /// Leaves the loss does not reach receive zeros. Consumes the tape.
  Gradients backward(const Var& loss);

  /// Drops all nodes and invalidates outstanding handles.
  void clear() {
    nodes_.clear();
    bound_.clear();
    bound_names_.clear();
    ++generation_;
  }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    OpAux aux;

    const Tensor& val() const { return external ? *external : value; }
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1, generation_);
  }

  void check(const Var& v) const {
    if (v.tape_ != this) throw TapeError("variable belongs to a different tape");
    if (v.generation_ != generation_ || v.id_ >= nodes_.size()) {
      throw TapeError("stale variable: tape was consumed by backward or cleared");
    }
  }

  void propagate(const Node& node, const Tensor& grad, std::vector<Tensor>& grads);

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  std::set<std::string> bound_names_;
  std::uint64_t generation_ = 1;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw TapeError("empty variable handle");
  return tape_->value(*this);
}

inline bool Var::requires_grad() const {
  if (!tape_) throw TapeError("empty variable handle");
  return tape_->requires_grad(*this);
}

inline Tape& Var::tape() const {
  if (!tape_) throw TapeError("empty variable handle");
  return *tape_;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.values.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

inline void accumulate(std::vector<Tensor>& grads, std::size_t id, const Shape& shape,
                       const std::function<void(Tensor&)>& add_into) {
  Tensor& g = grads[id];
  if (g.values.empty() && element_count(shape) != 0) g = Tensor::zeros(shape);
  if (g.values.empty()) g.shape = shape;
  add_into(g);
}

/// Broadcast role of b relative to a: same shape, or b repeats over the
/// leading dimension of a.
inline bool broadcasts_over_batch(const Shape& a, const Shape& b) {
  return a.size() == b.size() + 1 && std::equal(b.begin(), b.end(), a.begin() + 1);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline Gradients Tape::backward(const Var& loss) {
  if (loss.tape_ == this && loss.generation_ != generation_) {
    throw TapeError("backward called twice: the tape was already consumed");
  }
  check(loss);
  if (nodes_.empty()) throw TapeError("backward on an empty tape");
  const Tensor& lv = nodes_[loss.id_].val();
  if (lv.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(lv.shape));
  }

  std::vector<Tensor> grads(nodes_.size());
  if (nodes_[loss.id_].requires_grad) grads[loss.id_] = Tensor(lv.shape, {1.0});
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || node.kind == OpKind::leaf) continue;
    if (grads[i].values.empty()) continue;
    propagate(node, grads[i], grads);
    grads[i] = Tensor();
  }

  Gradients out;
  out.generation_ = generation_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.kind != OpKind::leaf || !node.requires_grad) continue;
    Tensor g = grads[i].values.empty() ? Tensor::zeros(node.val().shape) : std::move(grads[i]);
    g.shape = node.val().shape;
    if (node.param) out.named_.emplace(node.param->name, g);
    out.leaves_.emplace(i, std::move(g));
  }
  clear();
  return out;
}

inline void Tape::propagate(const Node& node, const Tensor& grad, std::vector<Tensor>& grads) {
  using detail::accumulate;
  using detail::as_matrix;
  auto input = [&](std::size_t k) -> const Node& { return nodes_[node.inputs[k]]; };
  auto wants = [&](std::size_t k) { return input(k).requires_grad; };
  const Tensor& out = node.value;

  switch (node.kind) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = input(0).val();
      const Tensor& b = input(1).val();
      if (wants(0)) {
        accumulate(grads, node.inputs[0], a.shape, [&](Tensor& g) {
          as_matrix(g).noalias() += as_matrix(grad) * as_matrix(b).transpose();
        });
      }
      if (wants(1)) {
        accumulate(grads, node.inputs[1], b.shape, [&](Tensor& g) {
          as_matrix(g).noalias() += as_matrix(a).transpose() * as_matrix(grad);
        });
      }
      return;
    }
    case OpKind::add:
    case OpKind::mul: {
      const Tensor& a = input(0).val();
      const Tensor& b = input(1).val();
      const bool is_mul = node.kind == OpKind::mul;
      // After forward normalisation a is the full-size operand.
      const std::size_t inner = b.size();
      if (wants(0)) {
        accumulate(grads, node.inputs[0], a.shape, [&](Tensor& g) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += is_mul ? grad[i] * b[i % inner] : grad[i];
          }
        });
      }
      if (wants(1)) {
        accumulate(grads, node.inputs[1], b.shape, [&](Tensor& g) {
          for (std::size_t i = 0; i < grad.size(); ++i) {
            g[i % inner] += is_mul ? grad[i] * a[i] : grad[i];
          }
        });
      }
      return;
    }
    case OpKind::scale: {
      const Tensor& a = input(0).val();
      accumulate(grads, node.inputs[0], a.shape, [&](Tensor& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.aux.factor * grad[i];
      });
      return;
    }
    case OpKind::concat: {
      std::size_t offset = 0;
      const std::size_t out_cols = out.cols();
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& in = input(k).val();
        const std::size_t extent = node.aux.axis == 0 && in.rank() == 2 ? in.rows()
                                   : node.aux.axis == 0                 ? in.size()
                                                                        : in.cols();
        if (wants(k)) {
          accumulate(grads, node.inputs[k], in.shape, [&](Tensor& g) {
            if (node.aux.axis == 0) {
              const std::size_t start = offset * (in.rank() == 2 ? in.cols() : 1);
              for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[start + i];
            } else {
              for (std::size_t r = 0; r < in.rows(); ++r) {
                for (std::size_t c = 0; c < in.cols(); ++c) {
                  g(r, c) += grad[r * out_cols + offset + c];
                }
              }
            }
          });
        }
        offset += extent;
      }
      return;
    }
    case OpKind::slice: {
      const Tensor& in = input(0).val();
      accumulate(grads, node.inputs[0], in.shape, [&](Tensor& g) {
        if (node.aux.axis == 0) {
          const std::size_t stride = in.rank() == 2 ? in.cols() : 1;
          const std::size_t start = node.aux.begin * stride;
          for (std::size_t i = 0; i < grad.size(); ++i) g[start + i] += grad[i];
        } else {
          const std::size_t width = node.aux.end - node.aux.begin;
          for (std::size_t r = 0; r < in.rows(); ++r) {
            for (std::size_t c = 0; c < width; ++c) {
              g(r, node.aux.begin + c) += grad[r * width + c];
            }
          }
        }
      });
      return;
    }
    case OpKind::gather_rows: {
      const Tensor& table = input(0).val();
      const std::size_t width = table.cols();
      accumulate(grads, node.inputs[0], table.shape, [&](Tensor& g) {
        for (std::size_t r = 0; r < node.aux.indices.size(); ++r) {
          const std::size_t row = node.aux.indices[r];
          for (std::size_t c = 0; c < width; ++c) g(row, c) += grad[r * width + c];
        }
      });
      return;
    }
    case OpKind::sigmoid: {
      accumulate(grads, node.inputs[0], out.shape, [&](Tensor& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i] * out[i] * (1.0 - out[i]);
      });
      return;
    }
    case OpKind::tanh: {
      accumulate(grads, node.inputs[0], out.shape, [&](Tensor& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i] * (1.0 - out[i] * out[i]);
      });
      return;
    }
    case OpKind::softmax: {
      const std::size_t rows = out.rows(), cols = out.cols();
      accumulate(grads, node.inputs[0], out.shape, [&](Tensor& g) {
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += grad[r * cols + c] * out[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            g[i] += out[i] * (grad[i] - dot);
          }
        }
      });
      return;
    }
    case OpKind::log_softmax: {
      const std::size_t rows = out.rows(), cols = out.cols();
      accumulate(grads, node.inputs[0], out.shape, [&](Tensor& g) {
        for (std::size_t r = 0; r < rows; ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) total += grad[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            g[i] += grad[i] - std::exp(out[i]) * total;
          }
        }
      });
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Tensor& in = input(0).val();
      const double per = node.kind == OpKind::sum ? grad[0] : grad[0] / double(in.size());
      accumulate(grads, node.inputs[0], in.shape, [&](Tensor& g) {
        for (auto& v : g.values) v += per;
      });
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward ops
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.shape[1] != y.shape[0]) {
    throw ShapeError("matmul: shapes " + to_string(x.shape) + " and " + to_string(y.shape) +
                     " do not conform");
  }
  Tensor out = Tensor::zeros({x.shape[0], y.shape[1]});
  detail::as_matrix(out).noalias() = detail::as_matrix(x) * detail::as_matrix(y);
  return a.tape().record(OpKind::matmul, {a, b}, std::move(out));
}

namespace detail {

inline Var elementwise(OpKind kind, const Var& a, const Var& b) {
  const Tensor* x = &a.value();
  const Tensor* y = &b.value();
  Var full = a, part = b;
  if (x->shape != y->shape) {
    if (broadcasts_over_batch(y->shape, x->shape)) {
      std::swap(x, y);
      std::swap(full, part);
    } else if (!broadcasts_over_batch(x->shape, y->shape)) {
      throw ShapeError(std::string(op_name(kind)) + ": shapes " + to_string(a.shape()) +
                       " and " + to_string(b.shape()) + " do not broadcast");
    }
  }
  Tensor out(x->shape, std::vector<double>(x->size()));
  const std::size_t inner = y->size();
  if (kind == OpKind::add) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x)[i] + (*y)[i % inner];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*x)[i] * (*y)[i % inner];
  }
  return a.tape().record(kind, {full, part}, std::move(out));
}

template <class F>
Var unary(OpKind kind, const Var& a, F f) {
  const Tensor& x = a.value();
  Tensor out(x.shape, std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return a.tape().record(kind, {a}, std::move(out));
}

}  // namespace detail

/// Elementwise sum; b may also be a row that repeats over a's leading dim.
inline Var add(const Var& a, const Var& b) { return detail::elementwise(OpKind::add, a, b); }
/// Elementwise product with the same broadcasting rule as add.
inline Var mul(const Var& a, const Var& b) { return detail::elementwise(OpKind::mul, a, b); }
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

inline Var scale(const Var& a, double factor) {
  const Tensor& x = a.value();
  Tensor out(x.shape, std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
  OpAux aux;
  aux.factor = factor;
  return a.tape().record(OpKind::scale, {a}, std::move(out), std::move(aux));
}

/// Concatenation along axis 0 (rows, or vector entries) or axis 1 (columns).
inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts[0].value();
  const std::size_t rank = first.rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                     to_string(first.shape));
  }
  Shape shape = first.shape;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    bool ok = t.rank() == rank;
    for (std::size_t d = 0; ok && d < rank; ++d) ok = d == axis || t.shape[d] == first.shape[d];
    if (!ok) {
      throw ShapeError("concat: shapes " + to_string(first.shape) + " and " + to_string(t.shape) +
                       " differ off axis " + std::to_string(axis));
    }
    shape[axis] += t.shape[axis];
  }
  Tensor out = Tensor::zeros(shape);
  if (axis == 0) {
    std::size_t pos = 0;
    for (const auto& p : parts) {
      const auto& v = p.value().values;
      std::copy(v.begin(), v.end(), out.values.begin() + pos);
      pos += v.size();
    }
  } else {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const Tensor& t = p.value();
      for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) out(r, offset + c) = t(r, c);
      }
      offset += t.cols();
    }
  }
  OpAux aux;
  aux.axis = axis;
  return parts[0].tape().record(OpKind::concat, std::vector<Var>(parts.begin(), parts.end()),
                                std::move(out), std::move(aux));
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Half-open range [begin, end) along axis.
inline Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.rank() > 2 || axis >= x.rank() || begin > end || end > x.shape[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for shape " +
                     to_string(x.shape));
  }
  Shape shape = x.shape;
  shape[axis] = end - begin;
  Tensor out = Tensor::zeros(shape);
  if (axis == 0) {
    const std::size_t stride = x.rank() == 2 ? x.cols() : 1;
    std::copy(x.values.begin() + begin * stride, x.values.begin() + end * stride,
              out.values.begin());
  } else {
    const std::size_t width = end - begin;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < width; ++c) out(r, c) = x(r, begin + c);
    }
  }
  OpAux aux;
  aux.axis = axis;
  aux.begin = begin;
  aux.end = end;
  return a.tape().record(OpKind::slice, {a}, std::move(out), std::move(aux));
}

/// Rows of a [V, E] table picked by index; an empty index list gives [0, E].
inline Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw ShapeError("gather_rows: table shape " + to_string(t.shape));
  const std::size_t width = t.cols();
  Tensor out = Tensor::zeros({ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= t.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(ids[r]) + " out of range for " +
                       std::to_string(t.rows()) + " rows");
    }
    std::copy_n(t.values.begin() + ids[r] * width, width, out.values.begin() + r * width);
  }
  OpAux aux;
  aux.indices.assign(ids.begin(), ids.end());
  return table.tape().record(OpKind::gather_rows, {table}, std::move(out), std::move(aux));
}

inline Var sigmoid(const Var& a) { return detail::unary(OpKind::sigmoid, a, detail::sigmoid); }

inline Var tanh(const Var& a) {
  return detail::unary(OpKind::tanh, a, [](double x) { return std::tanh(x); });
}

/// Softmax over the last axis.
inline Var softmax(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape, std::vector<double>(x.size()));
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values.data() + r * cols;
    double* o = out.values.data() + r * cols;
    const double top = cols ? *std::max_element(in, in + cols) : 0.0;
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - top));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return a.tape().record(OpKind::softmax, {a}, std::move(out));
}

/// Log-softmax over the last axis.
inline Var log_softmax(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.shape, std::vector<double>(x.size()));
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values.data() + r * cols;
    double* o = out.values.data() + r * cols;
    const double top = cols ? *std::max_element(in, in + cols) : 0.0;
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - top);
    const double log_z = top + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - log_z;
  }
  return a.tape().record(OpKind::log_softmax, {a}, std::move(out));
}

/// Sum of all entries as a scalar.
inline Var sum(const Var& a) {
  const auto& v = a.value().values;
  double total = 0.0;
  for (double x : v) total += x;
  return a.tape().record(OpKind::sum, {a}, Tensor::scalar(total));
}

/// Mean of all entries as a scalar.
inline Var mean(const Var& a) {
  const auto& v = a.value().values;
  if (v.empty()) throw ShapeError("mean of an empty tensor");
  double total = 0.0;
  for (double x : v) total += x;
  return a.tape().record(OpKind::mean, {a}, Tensor::scalar(total / double(v.size())));
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|), maximised over
/// every entry.
inline double max_relative_error(std::span<const Tensor> analytic, std::span<const Tensor> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient lists differ in length");
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    if (analytic[p].shape != numeric[p].shape) {
      throw ShapeError("gradient shapes " + to_string(analytic[p].shape) + " and " +
                       to_string(numeric[p].shape) + " differ");
    }
    for (std::size_t i = 0; i < analytic[p].size(); ++i) {
      const double a = analytic[p][i], n = numeric[p][i];
      worst = std::max(worst, std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)));
    }
  }
  return worst;
}

using ScalarFunction = std::function<double(std::span<const Tensor>)>;

/// Central differences (f(p + eps) - f(p - eps)) / 2 eps for every entry.
inline std::vector<Tensor> numeric_gradient(const ScalarFunction& f, std::vector<Tensor> params,
                                            double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference eps must be positive");
  auto eval = [&](std::span<const Tensor> p) {
    const double v = f(p);
    if (!std::isfinite(v)) throw NumericError("finite-difference probe produced a non-finite value");
    return v;
  };
  eval(params);
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor g = Tensor::zeros(params[p].shape);
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + eps;
      const double up = eval(params);
      params[p][i] = saved - eps;
      const double down = eval(params);
      params[p][i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// Builds a scalar loss on the given tape from one leaf per parameter.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares tape gradients of `build` against central differences of the
/// same function evaluated on inference tapes.
inline double finite_difference_check(const LossBuilder& build, const std::vector<Tensor>& params,
                                      double eps = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (auto p : params) {
    p.requires_grad = true;
    leaves.push_back(tape.leaf(std::move(p)));
  }
  Var loss = build(tape, leaves);
  if (!std::isfinite(loss.value().item())) throw NumericError("loss is not finite");
  Gradients grads = tape.backward(loss);
  std::vector<Tensor> analytic;
  for (const auto& leaf : leaves) analytic.push_back(grads[leaf]);

  auto value = [&](std::span<const Tensor> probe) {
    Tape inference(Tape::Mode::inference);
    std::vector<Var> vars;
    for (const auto& p : probe) vars.push_back(inference.constant(p));
    return build(inference, vars).value().item();
  };
  return max_relative_error(analytic, numeric_gradient(value, params, eps));
}

/// Same check for a loss over model Parameters, perturbed in place.
inline double finite_difference_check(const std::function<Var(Tape&)>& build,
                                      const std::vector<Parameter*>& params, double eps = 1e-5) {
  Tape tape;
  Var loss = build(tape);
  if (!std::isfinite(loss.value().item())) throw NumericError("loss is not finite");
  Gradients grads = tape.backward(loss);
  std::vector<Tensor> analytic, current;
  for (const auto* p : params) {
    auto it = grads.named().find(p->name);
    analytic.push_back(it == grads.named().end() ? Tensor::zeros(p->value.shape) : it->second);
    current.push_back(p->value);
  }
  auto value = [&](std::span<const Tensor> probe) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = probe[i];
    Tape inference(Tape::Mode::inference);
    return build(inference).value().item();
  };
  const auto numeric = numeric_gradient(value, current, eps);
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = current[i];
  return max_relative_error(analytic, numeric);
}

}  // namespace styletx
