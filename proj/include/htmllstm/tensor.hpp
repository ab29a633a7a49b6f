#pragma once

// Dense 2-D tensors and a reverse-mode tape.
//
// Every value is a row-major matrix of doubles; column vectors are n x 1.
// A Tape records primitive operations in creation order; backward() walks
// the record once in reverse and accumulates gradients into every node that
// (transitively) depends on a differentiable leaf or parameter.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "htmllstm/error.hpp"

namespace htmllstm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Vectorized kernels pick their reduction order from buffer alignment, so
// storage is always max-aligned to keep results bit-reproducible.
using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeMismatch("tensor data size " + std::to_string(data_.size()) + " != " +
                          std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Tensor column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(n, 1, std::move(values));
  }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const AlignedDoubles& values() const { return data_; }

  Eigen::Map<RowMatrix> mat() {
    return Eigen::Map<RowMatrix>(data_.data(), static_cast<Eigen::Index>(rows_),
                                 static_cast<Eigen::Index>(cols_));
  }
  Eigen::Map<const RowMatrix> mat() const {
    return Eigen::Map<const RowMatrix>(data_.data(), static_cast<Eigen::Index>(rows_),
                                       static_cast<Eigen::Index>(cols_));
  }
  Eigen::Map<Eigen::ArrayXd> arr() {
    return Eigen::Map<Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }
  Eigen::Map<const Eigen::ArrayXd> arr() const {
    return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedDoubles data_;
};

inline std::string shape_string(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

// Named learnable tensors. Order of insertion is the canonical order used by
// checkpoints and gradient reductions.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& value(const std::string& name) { return values_.at(index_of(name)); }
  const Tensor& value(const std::string& name) const { return values_.at(index_of(name)); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient buffers shaped like a ParamStore.
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& params) {
    grads_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      grads_.emplace_back(params.value(i).rows(), params.value(i).cols());
    }
  }
  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](std::size_t i) { return grads_.at(i); }
  const Tensor& operator[](std::size_t i) const { return grads_.at(i); }
  void zero() {
    for (auto& g : grads_) g.fill(0.0);
  }
  void add(const GradStore& other) {
    if (other.size() != size()) throw ShapeMismatch("gradient store size mismatch");
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i].arr() += other.grads_[i].arr();
  }
  void scale(double s) {
    for (auto& g : grads_) g.arr() *= s;
  }
  bool all_finite() const {
    return std::all_of(grads_.begin(), grads_.end(), [](const Tensor& t) { return t.all_finite(); });
  }

 private:
  std::vector<Tensor> grads_;
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  // Receives the node's forward value and its accumulated output gradient.
  using Backward = std::function<void(Tape&, const Tensor& value, const Tensor& grad)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;  // Vars hold a pointer to their tape
  Tape& operator=(Tape&&) = delete;

  Var constant(Tensor value) { return push(std::move(value), nullptr, false, {}); }
  Var leaf(Tensor value) { return push(std::move(value), nullptr, true, {}); }

  // The parameter value is referenced, not copied; the store must outlive
  // the tape and stay unmodified until backward has run.
  Var parameter(const ParamStore& store, std::size_t index) {
    if (param_nodes_.size() < store.size()) param_nodes_.resize(store.size(), kNone);
    if (param_nodes_[index] != kNone) return Var{this, param_nodes_[index]};
    Var v = push(Tensor{}, &store.value(index), true, {});
    param_nodes_[index] = v.id;
    return v;
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }
  Var record(Tensor value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of a node after backward(); an all-zero tensor of the right
  // shape when nothing flowed into it.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    const Tensor& val = value(v);
    return Tensor(val.rows(), val.cols());
  }

  // Buffer to accumulate into, or nullptr when v does not need a gradient.
  Tensor* grad_target(Var v) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      const Tensor& val = n.external ? *n.external : n.value;
      n.grad = Tensor(val.rows(), val.cols());
      n.has_grad = true;
    }
    return &n.grad;
  }

  void backward(Var scalar) {
    const Tensor& v = value(scalar);
    if (v.size() != 1) throw ShapeMismatch("backward(Var) needs a 1x1 output, got " + shape_string(v));
    std::pair<Var, Tensor> seed{scalar, Tensor::scalar(1.0)};
    backward(std::span<const std::pair<Var, Tensor>>(&seed, 1));
  }

  // Seeds arbitrary output gradients (used when a loss couples several tapes).
  void backward(std::span<const std::pair<Var, Tensor>> seeds) {
    std::uint32_t top = 0;
    for (const auto& [var, g] : seeds) {
      if (!value(var).same_shape(g)) {
        throw ShapeMismatch("seed gradient " + shape_string(g) + " vs value " + shape_string(value(var)));
      }
      if (Tensor* t = grad_target(var)) t->arr() += g.arr();
      top = std::max(top, var.id);
    }
    for (std::int64_t i = top; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.has_grad || !n.backward) continue;
      const Tensor& val = n.external ? *n.external : n.value;
      n.backward(*this, val, n.grad);
    }
  }

  // Adds every parameter gradient collected on this tape into out.
  void accumulate_parameter_grads(GradStore& out) const {
    for (std::size_t i = 0; i < param_nodes_.size() && i < out.size(); ++i) {
      if (param_nodes_[i] == kNone) continue;
      const Node& n = nodes_[param_nodes_[i]];
      if (n.has_grad) out[i].arr() += n.grad.arr();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr std::uint32_t kNone = UINT32_MAX;

  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Tensor value, const Tensor* external, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

inline Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ShapeMismatch("operands recorded on different tapes");
  return *a.tape;
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) throw ShapeMismatch("matmul: " + shape_string(A) + " * " + shape_string(B));
  Tensor out(A.rows(), B.cols());
  out.mat().noalias() = A.mat() * B.mat();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->mat().noalias() += g.mat() * tp.value(b).mat().transpose();
    if (Tensor* gb = tp.grad_target(b)) gb->mat().noalias() += tp.value(a).mat().transpose() * g.mat();
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.arr() += b.value().arr();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr();
    if (Tensor* gb = tp.grad_target(b)) gb->arr() += g.arr();
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.arr() -= b.value().arr();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr();
    if (Tensor* gb = tp.grad_target(b)) gb->arr() -= g.arr();
  });
}

// a (r x c) + b (r x 1) broadcast over columns.
inline Var add_broadcast(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (B.cols() != 1 || B.rows() != A.rows()) {
    throw ShapeMismatch("add_broadcast: " + shape_string(A) + " + " + shape_string(B));
  }
  Tensor out = A;
  out.mat().colwise() += B.mat().col(0);
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr();
    if (Tensor* gb = tp.grad_target(b)) gb->mat().col(0) += g.mat().rowwise().sum();
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.arr() *= b.value().arr();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr() * tp.value(b).arr();
    if (Tensor* gb = tp.grad_target(b)) gb->arr() += g.arr() * tp.value(a).arr();
  });
}

inline Var div(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  out.arr() /= b.value().arr();
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& y, const Tensor& g) {
    const auto bv = tp.value(b).arr();
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr() / bv;
    if (Tensor* gb = tp.grad_target(b)) gb->arr() -= g.arr() * y.arr() / bv;
  });
}

// s * a + shift, elementwise.
inline Var affine(Var a, double s, double shift = 0.0) {
  Tensor out = a.value();
  out.arr() = out.arr() * s + shift;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += s * g.arr();
  });
}

inline Var scale(Var a, double s) { return affine(a, s, 0.0); }

// Stacks operands vertically; all must share the column count.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no operands");
  Tape& t = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t r = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
    r += v.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ins = std::move(ins)](Tape& tp, const Tensor&, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : ins) {
      const std::size_t n = tp.value(p).size();
      if (Tensor* gp = tp.grad_target(p)) {
        auto src = g.data().subspan(offset, n);
        auto dst = gp->data();
        for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
      }
      offset += n;
    }
  });
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

// Places operands side by side; all must share the row count.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no operands");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t c = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    out.mat().middleCols(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(v.cols())) = v.mat();
    c += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ins = std::move(ins)](Tape& tp, const Tensor&, const Tensor& g) {
    std::size_t c0 = 0;
    for (const Var& p : ins) {
      const auto pc = static_cast<Eigen::Index>(tp.value(p).cols());
      if (Tensor* gp = tp.grad_target(p)) gp->mat() += g.mat().middleCols(static_cast<Eigen::Index>(c0), pc);
      c0 += static_cast<std::size_t>(pc);
    }
  });
}
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var slice(Var a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
  const Tensor& A = a.value();
  if (row0 + nrows > A.rows() || col0 + ncols > A.cols()) {
    throw ShapeMismatch("slice out of range on " + shape_string(A));
  }
  Tensor out(nrows, ncols);
  out.mat() = A.mat().block(static_cast<Eigen::Index>(row0), static_cast<Eigen::Index>(col0),
                            static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
  return a.tape->record(std::move(out), {a}, [a, row0, col0](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) {
      ga->mat().block(static_cast<Eigen::Index>(row0), static_cast<Eigen::Index>(col0),
                      static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols())) += g.mat();
    }
  });
}

inline Var slice_rows(Var a, std::size_t row0, std::size_t nrows) { return slice(a, row0, nrows, 0, a.cols()); }
inline Var column(Var a, std::size_t j) { return slice(a, 0, a.rows(), j, 1); }

// Gathers rows of an embedding table as columns: out(:, k) = table(indices[k], :)^T.
inline Var embedding_lookup(Var table, std::vector<std::size_t> indices) {
  const Tensor& E = table.value();
  Tensor out(E.cols(), indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= E.rows()) {
      throw IndexOutOfRange("embedding index " + std::to_string(indices[k]) + " >= " + std::to_string(E.rows()));
    }
    out.mat().col(static_cast<Eigen::Index>(k)) = E.mat().row(static_cast<Eigen::Index>(indices[k])).transpose();
  }
  return table.tape->record(std::move(out), {table},
                            [table, idx = std::move(indices)](Tape& tp, const Tensor&, const Tensor& g) {
                              if (Tensor* gt = tp.grad_target(table)) {
                                for (std::size_t k = 0; k < idx.size(); ++k) {
                                  gt->mat().row(static_cast<Eigen::Index>(idx[k])) +=
                                      g.mat().col(static_cast<Eigen::Index>(k)).transpose();
                                }
                              }
                            });
}

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = detail::stable_sigmoid(v);
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor& y, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr() * y.arr() * (1.0 - y.arr());
  });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  out.arr() = out.arr().tanh();
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor& y, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr() * (1.0 - y.arr().square());
  });
}

// Softmax applied independently to every column.
inline Var softmax(Var a) {
  Tensor out = a.value();
  auto m = out.mat();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    auto col = m.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor& y, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) {
      auto Y = y.mat();
      auto G = g.mat();
      for (Eigen::Index j = 0; j < Y.cols(); ++j) {
        const double dot = Y.col(j).dot(G.col(j));
        ga->mat().col(j).array() += Y.col(j).array() * (G.col(j).array() - dot);
      }
    }
  });
}

inline Var log(Var a) {
  Tensor out = a.value();
  out.arr() = out.arr().log();
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g.arr() / tp.value(a).arr();
  });
}

// Elementwise power with a constant exponent. The derivative at a zero base
// with exponent < 1 is taken as 0.
inline Var pow(Var a, double exponent) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::pow(v, exponent);
  return a.tape->record(std::move(out), {a}, [a, exponent](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) {
      const auto& x = tp.value(a);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (exponent == 0.0) continue;
        const double base = x[i];
        const double d = (base == 0.0 && exponent < 1.0) ? 0.0 : exponent * std::pow(base, exponent - 1.0);
        (*ga)[i] += g[i] * d;
      }
    }
  });
}

// max(a, lo); gradient passes only where a >= lo.
inline Var clamp_min(Var a, double lo) {
  Tensor out = a.value();
  out.arr() = out.arr().max(lo);
  return a.tape->record(std::move(out), {a}, [a, lo](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) {
      const auto& x = tp.value(a);
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] >= lo) (*ga)[i] += g[i];
    }
  });
}

inline Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().arr().sum());
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->arr() += g[0];
  });
}

// Row sums: (r x c) -> (r x 1).
inline Var sum_cols(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.rows(), 1);
  out.mat().col(0) = A.mat().rowwise().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_target(a)) ga->mat().colwise() += g.mat().col(0);
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are stacked in the order input, forget, output,
// update (i, f, o, u), each `hidden` rows tall.

struct LstmWeights {
  Var W;  // 4h x d_in
  Var U;  // 4h x h
  Var b;  // 4h x 1
};

struct LstmState {
  Var h;
  Var c;
};

// Applies the gate nonlinearities to stacked pre-activations (4h x 1).
// A missing c_prev is treated as zero.
inline LstmState lstm_gates(Var pre, const Var* c_prev) {
  const std::size_t h = pre.rows() / 4;
  if (pre.rows() != 4 * h || pre.cols() != 1) throw ShapeMismatch("lstm pre-activation must be 4h x 1");
  Var sig = sigmoid(slice_rows(pre, 0, 3 * h));
  Var i = slice_rows(sig, 0, h);
  Var o = slice_rows(sig, 2 * h, h);
  Var u = tanh(slice_rows(pre, 3 * h, h));
  Var c = mul(i, u);
  if (c_prev != nullptr) {
    if (c_prev->rows() != h) throw ShapeMismatch("lstm: c_prev has wrong size");
    Var f = slice_rows(sig, h, h);
    c = add(c, mul(f, *c_prev));
  }
  Var hid = mul(o, tanh(c));
  return {hid, c};
}

inline LstmState lstm_cell(Var x, Var h_prev, Var c_prev, const LstmWeights& w) {
  const std::size_t h = w.U.cols();
  if (w.W.rows() != 4 * h || w.U.rows() != 4 * h || w.b.rows() != 4 * h || w.W.cols() != x.rows() ||
      h_prev.rows() != h || c_prev.rows() != h) {
    throw ShapeMismatch("lstm_cell: inconsistent dimensions");
  }
  Var pre = add(add(matmul(w.W, x), matmul(w.U, h_prev)), w.b);
  return lstm_gates(pre, &c_prev);
}

}  // namespace htmllstm
