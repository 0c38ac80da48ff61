#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dan/errors.hpp"

namespace dan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. The float instantiation is the working precision;
// the double instantiation exists for finite-difference verification.
template <class T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;
  explicit TensorT(Shape shape, T fill = T(0));
  TensorT(Shape shape, std::vector<T> data);
  TensorT(Shape shape, std::initializer_list<T> data);

  static TensorT scalar(T value) { return TensorT({1}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }
  T& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  T item() const;

  TensorT reshaped(Shape shape) const&;
  TensorT reshaped(Shape shape) &&;

  void fill(T value);

  template <class U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return TensorT<U>(shape_, std::move(out));
  }

  // Throws NumericError naming `where` if any element is NaN or infinite.
  const TensorT& check_finite(std::string_view where) const;

  bool operator==(const TensorT& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// ---------------------------------------------------------------------------
// Multiply-add accounting. Kernels report their multiply-add count to the
// innermost active scope on the current thread.

class MacCountScope {
 public:
  explicit MacCountScope(std::uint64_t& sink) noexcept;
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;

 private:
  std::uint64_t* previous_;
};

void count_macs(std::uint64_t n) noexcept;

// ---------------------------------------------------------------------------
// Raw kernels. Every output element accumulates its products in ascending
// order of the reduction index, so results are bitwise reproducible.

// c[m×n] += a[m×k] · b[k×n]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// c[m×n] += a[k×m]ᵀ · b[k×n]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

struct ConvGeometry {
  std::size_t in_channels, height, width;
  std::size_t kernel_h, kernel_w;
  std::size_t padding, stride;
  std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
};

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols);
template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, T* x);

// ---------------------------------------------------------------------------
// Tensor operations.

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
TensorT<T> transpose(const TensorT<T>& a);

// x: C_in×H×W, kernel: C_out×C_in×kh×kw, optional bias of C_out elements.
// Zero-padded cross-correlation.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, std::size_t padding, std::size_t stride = 1,
                  const TensorT<T>* bias = nullptr);

// Normalizes each column of a rank-2 tensor with a softmax.
template <class T>
TensorT<T> softmax_cols(const TensorT<T>& s);

template <class T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts);

// Deterministic pseudo-normal samples. Element i consumes Philox blocks
// 3i, 3i+1, 3i+2 under key `seed`; the twelve 32-bit words are summed as
// uniforms (Irwin–Hall, n = 12), centred and scaled by `stddev`. The sum is
// exact in double precision, so the result is platform independent.
template <class T>
TensorT<T> seeded_normal(Shape shape, std::uint64_t seed, double stddev);

// Validates a conv geometry against a kernel and throws DimensionError.
ConvGeometry conv_geometry(const Shape& x, const Shape& kernel, std::size_t padding, std::size_t stride);

}  // namespace dan
