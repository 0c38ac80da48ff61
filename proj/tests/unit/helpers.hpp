#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

#include "dan/rng.hpp"
#include "dan/tensor.hpp"

namespace testutil {

template <class T>
dan::TensorT<T> random_tensor(dan::Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  dan::CounterRng rng(seed, 99);
  dan::TensorT<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(lo + (hi - lo) * rng.next_uniform());
  return t;
}

template <class T>
double max_abs_diff(const dan::TensorT<T>& a, const dan::TensorT<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double rel_err(const dan::Tensor64& analytic, const dan::Tensor64& numeric) {
  double d = 0, n = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    d += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    n += numeric[i] * numeric[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(n), 1e-12);
}

// Central differences of a scalar function, written independently of the
// library's finite_diff_grad.
inline dan::Tensor64 numeric_grad(const std::function<double(const dan::Tensor64&)>& f, dan::Tensor64 x,
                                  double eps = 1e-6) {
  dan::Tensor64 g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + eps;
    const double fp = f(x);
    x[i] = v - eps;
    const double fm = f(x);
    x[i] = v;
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

// Plain triple loop.
template <class T>
dan::TensorT<T> naive_matmul(const dan::TensorT<T>& a, const dan::TensorT<T>& b) {
  dan::TensorT<T> c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += static_cast<double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<T>(acc);
    }
  return c;
}

// Direct zero-padded cross-correlation.
template <class T>
dan::TensorT<T> naive_conv(const dan::TensorT<T>& x, const dan::TensorT<T>& w, std::size_t pad, std::size_t stride,
                           const dan::TensorT<T>* bias = nullptr) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  dan::TensorT<T> out({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const long sy = static_cast<long>(y * stride + dy) - static_cast<long>(pad);
              const long sx = static_cast<long>(xx * stride + dx) - static_cast<long>(pad);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
              acc += static_cast<double>(w[((o * ci + c) * kh + dy) * kw + dx]) *
                     x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
        out.at(o, y, xx) = static_cast<T>(acc);
      }
  return out;
}

// Z = Wv·Wh·x·softmax_cols((Wf x)ᵀ(Wg x)/√d), evaluated entry by entry.
inline dan::Tensor64 naive_attention(const dan::Tensor64& x, const dan::Tensor64& wf, const dan::Tensor64& wg,
                                     const dan::Tensor64& wh, const dan::Tensor64& wv) {
  const std::size_t c = x.dim(0), n = x.dim(1), d = wf.dim(0);
  const auto f = naive_matmul(wf, x), g = naive_matmul(wg, x), h = naive_matmul(wh, x);
  dan::Tensor64 a({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += f.at(k, i) * g.at(k, j);
      a.at(i, j) = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, a.at(i, j));
    }
    double z = 0;
    for (std::size_t i = 0; i < n; ++i) z += (a.at(i, j) = std::exp(a.at(i, j) - mx));
    for (std::size_t i = 0; i < n; ++i) a.at(i, j) /= z;
  }
  (void)c;
  return naive_matmul(wv, naive_matmul(h, a));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dan_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
