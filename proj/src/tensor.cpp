#include "dan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dan/rng.hpp"

namespace dan {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
}

}  // namespace

template <class T>
TensorT<T>::TensorT(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <class T>
TensorT<T>::TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw DimensionError("element count " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

template <class T>
TensorT<T>::TensorT(Shape shape, std::initializer_list<T> data) : TensorT(std::move(shape), std::vector<T>(data)) {}

template <class T>
T TensorT<T>::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <class T>
TensorT<T> TensorT<T>::reshaped(Shape shape) const& {
  TensorT copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <class T>
TensorT<T> TensorT<T>::reshaped(Shape shape) && {
  validate_shape(shape);
  if (shape_numel(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

template <class T>
void TensorT<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
const TensorT<T>& TensorT<T>::check_finite(std::string_view where) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      std::ostringstream os;
      os << where << ": non-finite value " << data_[i] << " at flat index " << i << " of " << shape_str(shape_);
      throw NumericError(os.str());
    }
  }
  return *this;
}

// ---------------------------------------------------------------------------

namespace {
thread_local std::uint64_t* g_mac_sink = nullptr;
}

MacCountScope::MacCountScope(std::uint64_t& sink) noexcept : previous_(g_mac_sink) { g_mac_sink = &sink; }
MacCountScope::~MacCountScope() { g_mac_sink = previous_; }

void count_macs(std::uint64_t n) noexcept {
  if (g_mac_sink) *g_mac_sink += n;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kColTile = 512;
}

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  count_macs(static_cast<std::uint64_t>(m) * n * k);
  for (std::size_t j0 = 0; j0 < n; j0 += kColTile) {
    const std::size_t jn = std::min(kColTile, n - j0);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* __restrict c0 = c + (i + 0) * n + j0;
      T* __restrict c1 = c + (i + 1) * n + j0;
      T* __restrict c2 = c + (i + 2) * n + j0;
      T* __restrict c3 = c + (i + 3) * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const T a0 = a[(i + 0) * k + p];
        const T a1 = a[(i + 1) * k + p];
        const T a2 = a[(i + 2) * k + p];
        const T a3 = a[(i + 3) * k + p];
        const T* __restrict bp = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) {
          const T bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* __restrict ci = c + i * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * k + p];
        const T* __restrict bp = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  count_macs(static_cast<std::uint64_t>(m) * n * k);
  for (std::size_t j0 = 0; j0 < n; j0 += kColTile) {
    const std::size_t jn = std::min(kColTile, n - j0);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* __restrict c0 = c + (i + 0) * n + j0;
      T* __restrict c1 = c + (i + 1) * n + j0;
      T* __restrict c2 = c + (i + 2) * n + j0;
      T* __restrict c3 = c + (i + 3) * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a + p * m + i;
        const T a0 = ap[0], a1 = ap[1], a2 = ap[2], a3 = ap[3];
        const T* __restrict bp = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) {
          const T bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* __restrict ci = c + i * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        const T* __restrict bp = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock)
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock)
      for (std::size_t r = r0; r < std::min(rows, r0 + kBlock); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + kBlock); ++c) out[c * rows + r] = in[r * cols + c];
}

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        T* out = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          T* orow = out + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(orow, orow + ow, T(0));
            continue;
          }
          const T* irow = plane + iy * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            orow[ox] = (ix < 0 || ix >= w) ? T(0) : irow[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
        const T* in = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= h) continue;
          T* prow = plane + iy * w;
          const T* irow = in + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < w) prow[ix] += irow[ox];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& x, const Shape& kernel, std::size_t padding, std::size_t stride) {
  if (x.size() != 3) throw DimensionError("conv2d input must be C×H×W, got " + shape_str(x));
  if (kernel.size() != 4) throw DimensionError("conv2d kernel must be Cout×Cin×kh×kw, got " + shape_str(kernel));
  if (kernel[1] != x[0])
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x) + ", kernel " + shape_str(kernel));
  if (kernel[2] % 2 == 0 || kernel[3] % 2 == 0)
    throw DimensionError("conv2d kernel extents must be odd, got " + shape_str(kernel));
  if (stride == 0) throw ContractError("conv2d stride must be positive");
  if (kernel[2] > x[1] + 2 * padding || kernel[3] > x[2] + 2 * padding)
    throw DimensionError("conv2d kernel " + shape_str(kernel) + " larger than padded input " + shape_str(x));
  return ConvGeometry{x[0], x[1], x[2], kernel[2], kernel[3], padding, stride};
}

// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  TensorT<T> c({a.dim(0), b.dim(1)});
  gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(), c.data().data());
  return std::move(c.check_finite("matmul"));
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(a.shape()));
  TensorT<T> out({a.dim(1), a.dim(0)});
  transpose(a.dim(0), a.dim(1), a.data().data(), out.data().data());
  return out;
}

template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, std::size_t padding, std::size_t stride,
                  const TensorT<T>* bias) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel.shape(), padding, stride);
  const std::size_t cout = kernel.dim(0), oh = g.out_height(), ow = g.out_width();
  if (bias && bias->size() != cout)
    throw DimensionError("conv2d bias " + shape_str(bias->shape()) + " does not match " + std::to_string(cout) +
                         " output channels");
  TensorT<T> out({cout, oh, ow});
  const bool direct = g.kernel_h == 1 && g.kernel_w == 1 && g.padding == 0 && g.stride == 1;
  if (direct) {
    gemm_nn(cout, oh * ow, g.patch(), kernel.data().data(), x.data().data(), out.data().data());
  } else {
    std::vector<T> cols(g.patch() * oh * ow);
    im2col(g, x.data().data(), cols.data());
    gemm_nn(cout, oh * ow, g.patch(), kernel.data().data(), cols.data(), out.data().data());
  }
  if (bias) {
    for (std::size_t c = 0; c < cout; ++c) {
      const T bv = (*bias)[c];
      T* plane = out.data().data() + c * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) plane[i] += bv;
    }
  }
  return std::move(out.check_finite("conv2d"));
}

template <class T>
TensorT<T> softmax_cols(const TensorT<T>& s) {
  if (s.rank() != 2) throw DimensionError("softmax_cols expects rank 2, got " + shape_str(s.shape()));
  s.check_finite("softmax_cols input");
  const std::size_t rows = s.dim(0), cols = s.dim(1);
  TensorT<T> out(s.shape());
  for (std::size_t c = 0; c < cols; ++c) {
    T mx = s.at(0, c);
    for (std::size_t r = 1; r < rows; ++r) mx = std::max(mx, s.at(r, c));
    T sum = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T e = std::exp(s.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (std::size_t r = 0; r < rows; ++r) out.at(r, c) /= sum;
  }
  return out;
}

template <class T>
TensorT<T> concat_channels(const std::vector<const TensorT<T>*>& parts) {
  if (parts.empty()) throw ContractError("concat_channels needs at least one input");
  Shape shape = parts.front()->shape();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    if (p->rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p->shape().begin() + 1))
      throw DimensionError("concat_channels mismatch: " + shape_str(shape) + " vs " + shape_str(p->shape()));
    channels += p->dim(0);
  }
  shape[0] = channels;
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return TensorT<T>(std::move(shape), std::move(data));
}

template <class T>
TensorT<T> seeded_normal(Shape shape, std::uint64_t seed, double stddev) {
  if (!(stddev >= 0)) throw ContractError("seeded_normal stddev must be >= 0");
  TensorT<T> out(std::move(shape));
  const PhiloxKey key = philox_key(seed);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double sum = 0;
    for (std::uint64_t b = 0; b < 3; ++b) {
      const std::uint64_t block = 3 * static_cast<std::uint64_t>(i) + b;
      const auto words = philox4x32_10(
          {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), 0u, 0u}, key);
      for (auto w : words) sum += w * 0x1p-32;
    }
    out[i] = static_cast<T>((sum - 6.0) * stddev);
  }
  return out;
}

#define DAN_INSTANTIATE(T)                                                                                    \
  template class TensorT<T>;                                                                                  \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                    \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);                    \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);                                         \
  template void im2col<T>(const ConvGeometry&, const T*, T*);                                                 \
  template void col2im_add<T>(const ConvGeometry&, const T*, T*);                                             \
  template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                                        \
  template TensorT<T> transpose<T>(const TensorT<T>&);                                                        \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, std::size_t, std::size_t,               \
                                const TensorT<T>*);                                                           \
  template TensorT<T> softmax_cols<T>(const TensorT<T>&);                                                     \
  template TensorT<T> concat_channels<T>(const std::vector<const TensorT<T>*>&);                              \
  template TensorT<T> seeded_normal<T>(Shape, std::uint64_t, double);

DAN_INSTANTIATE(float)
DAN_INSTANTIATE(double)

#undef DAN_INSTANTIATE

}  // namespace dan
