#ifndef SAN_TENSOR_HPP
#define SAN_TENSOR_HPP

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "san/error.hpp"

namespace san {

#ifdef SAN_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor with an optional gradient accumulator.
///
/// Copies share storage: a Tensor is a handle, so a parameter captured on the
/// tape and the same parameter held by a model refer to one buffer.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_string(shape) + " holds " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<real>(n, real(0)), requires_grad);
  }

  static Tensor filled(Shape shape, real value) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<real>(n, value));
  }

  static Tensor scalar(real value, bool requires_grad = false) {
    return Tensor({}, {value}, requires_grad);
  }

  static Tensor vector(std::vector<real> values, bool requires_grad = false) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<real> values,
                       bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->values.size(); }

  /// Rows and columns of a rank-2 tensor; a rank-1 tensor is one row.
  std::size_t rows() const { return rank() == 2 ? dim(0) : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : impl_->shape.back(); }

  std::span<const real> values() const { return impl_->values; }
  std::span<real> mutable_values() { return impl_->values; }
  const std::vector<real>& data() const { return impl_->values; }

  real item() const {
    if (size() != 1) {
      throw ContractError("tensor: item() on tensor of shape " + shape_string(shape()));
    }
    return impl_->values[0];
  }
  real operator[](std::size_t i) const { return impl_->values[i]; }
  real at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const real> grad() const { return impl_->grad; }

  /// Gradient buffer, allocated as zeros on first access. Const because the
  /// handle, not the shared storage, is const.
  std::span<real> mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(size(), real(0));
    return impl_->grad;
  }
  void zero_grad() const {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), real(0));
  }
  void clear_grad() const { impl_->grad.clear(); }

  /// Deep copy with no gradient and no tape attachment.
  Tensor detach() const { return Tensor(shape(), impl_->values); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<real> values;
    std::vector<real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

enum class Primitive {
  matmul,
  matmul_nt,
  add,
  sub,
  mul,
  add_rows,
  add_columns,
  tanh,
  sigmoid,
  softmax,
  max,
  concat,
  gather_rows,
  scale,
  sum,
  reshape,
  weighted_rows,
  cross_entropy,
};

inline const char* primitive_name(Primitive op) {
  switch (op) {
    case Primitive::matmul: return "matmul";
    case Primitive::matmul_nt: return "matmul_nt";
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::add_rows: return "add_rows";
    case Primitive::add_columns: return "add_columns";
    case Primitive::tanh: return "tanh";
    case Primitive::sigmoid: return "sigmoid";
    case Primitive::softmax: return "softmax";
    case Primitive::max: return "max";
    case Primitive::concat: return "concat";
    case Primitive::gather_rows: return "gather_rows";
    case Primitive::scale: return "scale";
    case Primitive::sum: return "sum";
    case Primitive::reshape: return "reshape";
    case Primitive::weighted_rows: return "weighted_rows";
    case Primitive::cross_entropy: return "cross_entropy";
  }
  return "?";
}

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so inputs always precede outputs;
/// backward() replays them in exact reverse order. A tape belongs to one
/// thread; install it with TapeScope.
class Tape {
 public:
  struct Node {
    Primitive op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(Primitive op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  void clear() { nodes_.clear(); }

  /// Seeds d(output)/d(output) = 1 and propagates to every reachable tensor.
  /// Parameter gradients accumulate; call zero_grad between steps.
  void backward(Tensor output) {
    if (output.size() != 1) {
      throw ContractError("backward: output must be a scalar, got shape " +
                          shape_string(output.shape()));
    }
    if (!output.requires_grad()) {
      throw ContractError("backward: output does not depend on any parameter");
    }
    output.mutable_grad()[0] += real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output.has_grad()) it->backward();
    }
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {
inline Tape*& active_tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

/// Installs a tape as the recording target of the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape_slot()) {
    detail::active_tape_slot() = &tape;
  }
  ~TapeScope() { detail::active_tape_slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread (evaluation passes).
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::active_tape_slot()) { detail::active_tape_slot() = nullptr; }
  ~NoGradScope() { detail::active_tape_slot() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backward over the tape installed on this thread.
inline void backward(const Tensor& output) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw ContractError("backward: no active tape");
  tape->backward(output);
}

/// How often primitive outputs are scanned for NaN/Inf.
enum class FiniteCheck { every_op, sampled, never };

namespace detail {
inline std::atomic<FiniteCheck>& finite_check_mode() {
#ifdef NDEBUG
  static std::atomic<FiniteCheck> mode{FiniteCheck::sampled};
#else
  static std::atomic<FiniteCheck> mode{FiniteCheck::every_op};
#endif
  return mode;
}
constexpr unsigned kFiniteSamplePeriod = 8;
}  // namespace detail

inline void set_finite_check(FiniteCheck mode) { detail::finite_check_mode() = mode; }
inline FiniteCheck finite_check() { return detail::finite_check_mode(); }

inline bool all_finite(std::span<const real> xs) {
  for (real x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace detail {
inline void check_finite(Primitive op, const Tensor& out) {
  thread_local unsigned counter = 0;
  switch (finite_check()) {
    case FiniteCheck::never: return;
    case FiniteCheck::sampled:
      if (++counter % kFiniteSamplePeriod != 0) return;
      break;
    case FiniteCheck::every_op: break;
  }
  if (!all_finite(out.values())) {
    throw NumericError(std::string(primitive_name(op)) + ": non-finite output");
  }
}
}  // namespace detail

}  // namespace san

#endif  // SAN_TENSOR_HPP
