#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dan/tensor.hpp"

namespace dan {

template <class T>
struct Parameter {
  Parameter(std::string name, TensorT<T> value);

  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  void zero_grad() { grad.fill(T(0)); }
};

template <class T>
class Tape;

// Handle to a value recorded on a Tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const TensorT<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive operations. Each recorded node keeps its value
// and, when any input needs a gradient, a closure that pushes the adjoint of
// its output into its inputs. backward() replays those closures in exact
// reverse recording order.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const TensorT<T>& grad_out, const TensorT<T>& out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> constant(TensorT<T> value);
  // A leaf whose gradient is kept and readable through grad().
  Var<T> input(TensorT<T> value);
  // A leaf bound to a Parameter; backward() accumulates into Parameter::grad.
  Var<T> param(Parameter<T>& p);

  Var<T> record(std::string_view op, TensorT<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(std::string_view op, TensorT<T> value, std::span<const Var<T>> inputs, BackwardFn fn);

  const TensorT<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Zero-initialised gradient buffer of `v`, for closures that write in place.
  TensorT<T>& grad_buffer(const Var<T>& v);
  void accumulate(const Var<T>& v, const TensorT<T>& g);

  // Gradient of the last backward() with respect to `v`; zeros if untouched.
  TensorT<T> grad(const Var<T>& v) const;

  void backward(const Var<T>& loss);

  // Node ids whose adjoint closure ran during the last backward(), in order.
  const std::vector<std::size_t>& backward_trace() const noexcept { return trace_; }

 private:
  struct Node {
    std::string_view op;
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    bool keep_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> trace_;
};

template <class T>
const TensorT<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Differentiable primitives. Every output is checked for NaN/Inf.
namespace ag {

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> sum(const Var<T>& a);
template <class T> Var<T> mean(const Var<T>& a);
template <class T> Var<T> abs(const Var<T>& a);
template <class T> Var<T> square(const Var<T>& a);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);

// op(a)·op(b) with optional transposition of either rank-2 operand.
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false);
template <class T> Var<T> softmax_cols(const Var<T>& s);

// Pass an invalid Var as `bias` for a bias-free convolution.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t padding,
              std::size_t stride = 1);

template <class T> Var<T> concat_channels(std::span<const Var<T>> parts);

// Column j of the result is column order[j] of `a` (rank 2).
template <class T> Var<T> gather_cols(const Var<T>& a, std::span<const std::size_t> order);

// Column-wise softmax attention inside contiguous column groups of width
// `group_size`: for each group, A = softmax_cols(scale · fᵀg) and out = h·A.
template <class T>
Var<T> block_mix(const Var<T>& f, const Var<T>& g, const Var<T>& h, std::size_t group_size, T scale);

}  // namespace ag

// Raw grouped-attention kernel shared by taped and untaped paths.
// f, g, h: d×N. For every group of `group_size` consecutive columns and every
// output column q of the group, softmax over p of scale·⟨f_p, g_q⟩ weights
// the columns h_p. When `affinity` is non-null it receives the q×q blocks
// of all groups, group-major, row p / column q.
template <class T>
void block_mix_forward(const TensorT<T>& f, const TensorT<T>& g, const TensorT<T>& h, std::size_t group_size,
                       T scale, TensorT<T>& out, std::vector<T>* affinity);

// Central-difference gradient of a scalar function.
template <class T>
TensorT<T> finite_diff_grad(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x, T eps);

}  // namespace dan
