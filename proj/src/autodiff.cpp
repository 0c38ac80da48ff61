#include "dan/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace dan {

template <class T>
Parameter<T>::Parameter(std::string n, TensorT<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

// ---------------------------------------------------------------------------
// Tape

template <class T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::constant(TensorT<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
Var<T> Tape<T>::input(TensorT<T> value) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  n.keep_grad = true;
  return push(std::move(n));
}

template <class T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = &p;
  return push(std::move(n));
}

template <class T>
Var<T> Tape<T>::record(std::string_view op, TensorT<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
}

template <class T>
Var<T> Tape<T>::record(std::string_view op, TensorT<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
  value.check_finite(op);
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& v : inputs) {
      if (&v.tape() != this) throw ContractError(std::string(op) + ": input recorded on a different tape");
      n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <class T>
TensorT<T>& Tape<T>::grad_buffer(const Var<T>& v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = TensorT<T>(n.value.shape());
  return n.grad;
}

template <class T>
void Tape<T>::accumulate(const Var<T>& v, const TensorT<T>& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (g.size() != n.value.size())
    throw DimensionError("gradient " + shape_str(g.shape()) + " does not match value " + shape_str(n.value.shape()));
  if (n.grad.empty()) {
    n.grad = g;
    if (n.grad.shape() != n.value.shape()) n.grad = std::move(n.grad).reshaped(n.value.shape());
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
TensorT<T> Tape<T>::grad(const Var<T>& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return TensorT<T>(n.value.shape());
  return n.grad;
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.value().size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  for (auto& n : nodes_) n.grad = TensorT<T>();
  trace_.clear();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = TensorT<T>(loss.shape(), T(1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    if (n.backward) {
      n.backward(*this, n.grad, n.value);
      trace_.push_back(id);
    }
    if (!n.keep_grad) n.grad = TensorT<T>();
  }
}

// ---------------------------------------------------------------------------
// Grouped attention kernel

namespace {

constexpr std::size_t kMixChunk = 256;

template <class T>
void check_mix_shapes(const TensorT<T>& f, const TensorT<T>& g, const TensorT<T>& h, std::size_t group_size) {
  if (f.rank() != 2 || g.shape() != f.shape() || h.shape() != f.shape())
    throw DimensionError("block_mix expects equal d×N operands, got " + shape_str(f.shape()) + ", " +
                         shape_str(g.shape()) + ", " + shape_str(h.shape()));
  if (group_size == 0 || f.dim(1) % group_size != 0)
    throw FactorizationError("group size " + std::to_string(group_size) + " does not divide " +
                             std::to_string(f.dim(1)) + " positions");
}

}  // namespace

template <class T>
void block_mix_forward(const TensorT<T>& f, const TensorT<T>& g, const TensorT<T>& h, std::size_t q, T scale,
                       TensorT<T>& out, std::vector<T>* affinity) {
  check_mix_shapes(f, g, h, q);
  const std::size_t d = f.dim(0), n = f.dim(1), groups = n / q;
  if (out.shape() != f.shape()) out = TensorT<T>(f.shape());
  else out.fill(T(0));
  if (affinity) affinity->assign(groups * q * q, T(0));
  const T* fp = f.data().data();
  const T* gp = g.data().data();
  const T* hp = h.data().data();
  T* op = out.data().data();
  std::vector<T> logits(q * std::min(q, kMixChunk));
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t s = grp * q;
    for (std::size_t q0 = 0; q0 < q; q0 += kMixChunk) {
      const std::size_t cb = std::min(kMixChunk, q - q0);
      std::fill(logits.begin(), logits.begin() + q * cb, T(0));
      for (std::size_t k = 0; k < d; ++k) {
        const T* fk = fp + k * n + s;
        const T* __restrict gk = gp + k * n + s + q0;
        for (std::size_t p = 0; p < q; ++p) {
          const T coef = fk[p];
          T* __restrict row = logits.data() + p * cb;
          for (std::size_t j = 0; j < cb; ++j) row[j] += coef * gk[j];
        }
      }
      for (std::size_t j = 0; j < cb; ++j) {
        T mx = logits[j] * scale;
        for (std::size_t p = 0; p < q; ++p) {
          logits[p * cb + j] *= scale;
          mx = std::max(mx, logits[p * cb + j]);
        }
        T total = 0;
        for (std::size_t p = 0; p < q; ++p) {
          const T e = std::exp(logits[p * cb + j] - mx);
          logits[p * cb + j] = e;
          total += e;
        }
        for (std::size_t p = 0; p < q; ++p) logits[p * cb + j] /= total;
      }
      if (affinity) {
        T* blk = affinity->data() + grp * q * q;
        for (std::size_t p = 0; p < q; ++p)
          std::copy(logits.begin() + p * cb, logits.begin() + (p + 1) * cb, blk + p * q + q0);
      }
      for (std::size_t k = 0; k < d; ++k) {
        const T* hk = hp + k * n + s;
        T* __restrict ok = op + k * n + s + q0;
        for (std::size_t p = 0; p < q; ++p) {
          const T coef = hk[p];
          const T* __restrict row = logits.data() + p * cb;
          for (std::size_t j = 0; j < cb; ++j) ok[j] += coef * row[j];
        }
      }
      count_macs(2 * static_cast<std::uint64_t>(d) * q * cb);
    }
  }
  out.check_finite("block_mix");
}

// ---------------------------------------------------------------------------
// Primitives

namespace ag {

namespace {

template <class T>
void require_same_shape(std::string_view op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class T, class F>
TensorT<T> map(const TensorT<T>& a, F fn) {
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
  return out;
}

template <class T, class F>
TensorT<T> zip(const TensorT<T>& a, const TensorT<T>& b, F fn) {
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a, b);
  return a.tape().record("add", zip(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
                         [a, b](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a, b);
  return a.tape().record("sub", zip(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
                         [a, b](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, g);
                           if (t.requires_grad(b)) t.accumulate(b, map(g, [](T v) { return -v; }));
                         });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a, b);
  return a.tape().record("mul", zip(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
                         [a, b](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           if (t.requires_grad(a)) t.accumulate(a, zip(g, b.value(), [](T x, T y) { return x * y; }));
                           if (t.requires_grad(b)) t.accumulate(b, zip(g, a.value(), [](T x, T y) { return x * y; }));
                         });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return a.tape().record("scale", map(a.value(), [s](T x) { return x * s; }), {a},
                         [a, s](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, map(g, [s](T v) { return v * s; }));
                         });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return a.tape().record("add_scalar", map(a.value(), [s](T x) { return x + s; }), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) { t.accumulate(a, g); });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().data()) total += v;
  return a.tape().record("sum", TensorT<T>::scalar(total), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, TensorT<T>(a.shape(), g[0]));
                         });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().data()) total += v;
  const T n = static_cast<T>(a.value().size());
  return a.tape().record("mean", TensorT<T>::scalar(total / n), {a},
                         [a, n](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, TensorT<T>(a.shape(), g[0] / n));
                         });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  return a.tape().record("abs", map(a.value(), [](T x) { return std::abs(x); }), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, zip(g, a.value(), [](T gv, T x) {
                                          return x > 0 ? gv : (x < 0 ? -gv : T(0));
                                        }));
                         });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return a.tape().record("square", map(a.value(), [](T x) { return x * x; }), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, zip(g, a.value(), [](T gv, T x) { return 2 * x * gv; }));
                         });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return a.tape().record("relu", map(a.value(), [](T x) { return x > 0 ? x : T(0); }), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           t.accumulate(a, zip(g, a.value(), [](T gv, T x) { return x > 0 ? gv : T(0); }));
                         });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return a.tape().record("sigmoid", map(a.value(), [](T x) { return T(1) / (T(1) + std::exp(-x)); }), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>& y) {
                           t.accumulate(a, zip(g, y, [](T gv, T yv) { return gv * yv * (T(1) - yv); }));
                         });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a},
                         [a](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) { t.accumulate(a, g); });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
  if (a.value().rank() != 2 || b.value().rank() != 2)
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  TensorT<T> lhs = trans_a ? dan::transpose(a.value()) : a.value();
  TensorT<T> rhs = trans_b ? dan::transpose(b.value()) : b.value();
  TensorT<T> out = dan::matmul(lhs, rhs);
  return a.tape().record(
      "matmul", std::move(out), {a, b}, [a, b, trans_a, trans_b](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
        const TensorT<T> lhs = trans_a ? dan::transpose(a.value()) : a.value();
        const TensorT<T> rhs = trans_b ? dan::transpose(b.value()) : b.value();
        const std::size_t m = lhs.dim(0), k = lhs.dim(1), n = rhs.dim(1);
        if (t.requires_grad(a)) {
          const TensorT<T> rhs_t = dan::transpose(rhs);
          TensorT<T> dl({m, k});
          gemm_nn(m, k, n, g.data().data(), rhs_t.data().data(), dl.data().data());
          t.accumulate(a, trans_a ? dan::transpose(dl) : dl);
        }
        if (t.requires_grad(b)) {
          TensorT<T> dr({k, n});
          gemm_tn(k, n, m, lhs.data().data(), g.data().data(), dr.data().data());
          t.accumulate(b, trans_b ? dan::transpose(dr) : dr);
        }
      });
}

template <class T>
Var<T> softmax_cols(const Var<T>& s) {
  return s.tape().record("softmax_cols", dan::softmax_cols(s.value()), {s},
                         [s](Tape<T>& t, const TensorT<T>& g, const TensorT<T>& y) {
                           const std::size_t rows = y.dim(0), cols = y.dim(1);
                           TensorT<T> ds(y.shape());
                           for (std::size_t c = 0; c < cols; ++c) {
                             T dot = 0;
                             for (std::size_t r = 0; r < rows; ++r) dot += y.at(r, c) * g.at(r, c);
                             for (std::size_t r = 0; r < rows; ++r) ds.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                           }
                           t.accumulate(s, ds);
                         });
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t padding, std::size_t stride) {
  const bool has_bias = bias.valid();
  TensorT<T> out = dan::conv2d(x.value(), kernel.value(), padding, stride, has_bias ? &bias.value() : nullptr);
  auto fn = [x, kernel, bias, has_bias, padding, stride](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
    const ConvGeometry geo = conv_geometry(x.shape(), kernel.shape(), padding, stride);
    const std::size_t cout = kernel.value().dim(0), hw = geo.out_height() * geo.out_width(), patch = geo.patch();
    const bool direct = geo.kernel_h == 1 && geo.kernel_w == 1 && padding == 0 && stride == 1;
    if (has_bias && t.requires_grad(bias)) {
      TensorT<T> db({cout});
      for (std::size_t c = 0; c < cout; ++c) {
        T acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += g[c * hw + i];
        db[c] = acc;
      }
      t.accumulate(bias, db);
    }
    if (t.requires_grad(kernel)) {
      std::vector<T> cols_t(hw * patch);
      if (direct) {
        dan::transpose(patch, hw, x.value().data().data(), cols_t.data());
      } else {
        std::vector<T> cols(patch * hw);
        im2col(geo, x.value().data().data(), cols.data());
        dan::transpose(patch, hw, cols.data(), cols_t.data());
      }
      TensorT<T>& dk = t.grad_buffer(kernel);
      gemm_nn(cout, patch, hw, g.data().data(), cols_t.data(), dk.data().data());
    }
    if (t.requires_grad(x)) {
      TensorT<T>& dx = t.grad_buffer(x);
      if (direct) {
        gemm_tn(patch, hw, cout, kernel.value().data().data(), g.data().data(), dx.data().data());
      } else {
        std::vector<T> dcols(patch * hw, T(0));
        gemm_tn(patch, hw, cout, kernel.value().data().data(), g.data().data(), dcols.data());
        col2im_add(geo, dcols.data(), dx.data().data());
      }
    }
  };
  if (has_bias) return x.tape().record("conv2d", std::move(out), {x, kernel, bias}, std::move(fn));
  return x.tape().record("conv2d", std::move(out), {x, kernel}, std::move(fn));
}

template <class T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_channels needs at least one input");
  std::vector<const TensorT<T>*> values;
  for (const auto& p : parts) values.push_back(&p.value());
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts.front().tape().record("concat_channels", dan::concat_channels(values), parts,
                                     [inputs](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                                       std::size_t offset = 0;
                                       for (const auto& p : inputs) {
                                         const std::size_t n = p.value().size();
                                         if (t.requires_grad(p)) {
                                           TensorT<T>& dst = t.grad_buffer(p);
                                           for (std::size_t i = 0; i < n; ++i) dst[i] += g[offset + i];
                                         }
                                         offset += n;
                                       }
                                     });
}

template <class T>
Var<T> gather_cols(const Var<T>& a, std::span<const std::size_t> order) {
  const TensorT<T>& x = a.value();
  if (x.rank() != 2) throw DimensionError("gather_cols expects rank 2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1), m = order.size();
  TensorT<T> out({rows, m});
  for (std::size_t j = 0; j < m; ++j)
    if (order[j] >= cols) throw DimensionError("gather_cols index out of range");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = x[r * cols + order[j]];
  std::vector<std::size_t> idx(order.begin(), order.end());
  return a.tape().record("gather_cols", std::move(out), {a},
                         [a, idx = std::move(idx)](Tape<T>& t, const TensorT<T>& g, const TensorT<T>&) {
                           TensorT<T>& dst = t.grad_buffer(a);
                           const std::size_t cols = dst.dim(1), m = idx.size(), rows = dst.dim(0);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < m; ++j) dst[r * cols + idx[j]] += g[r * m + j];
                         });
}

template <class T>
Var<T> block_mix(const Var<T>& f, const Var<T>& g, const Var<T>& h, std::size_t q, T scale) {
  auto affinity = std::make_shared<std::vector<T>>();
  TensorT<T> out;
  Tape<T>& tape = f.tape();
  block_mix_forward(f.value(), g.value(), h.value(), q, scale, out, tape.grad_enabled() ? affinity.get() : nullptr);
  return tape.record(
      "block_mix", std::move(out), {f, g, h}, [f, g, h, q, scale, affinity](Tape<T>& t, const TensorT<T>& dm, const TensorT<T>&) {
        const TensorT<T>& fv = f.value();
        const TensorT<T>& gv = g.value();
        const TensorT<T>& hv = h.value();
        const std::size_t d = fv.dim(0), n = fv.dim(1), groups = n / q;
        const bool need_f = t.requires_grad(f), need_g = t.requires_grad(g), need_h = t.requires_grad(h);
        TensorT<T>* df = need_f ? &t.grad_buffer(f) : nullptr;
        TensorT<T>* dg = need_g ? &t.grad_buffer(g) : nullptr;
        TensorT<T>* dh = need_h ? &t.grad_buffer(h) : nullptr;
        std::vector<T> da(q * q), ds(q * q);
        for (std::size_t grp = 0; grp < groups; ++grp) {
          const std::size_t s = grp * q;
          const T* a = affinity->data() + grp * q * q;
          std::fill(da.begin(), da.end(), T(0));
          for (std::size_t k = 0; k < d; ++k) {
            const T* hk = hv.data().data() + k * n + s;
            const T* dmk = dm.data().data() + k * n + s;
            for (std::size_t p = 0; p < q; ++p) {
              const T coef = hk[p];
              T* row = da.data() + p * q;
              for (std::size_t j = 0; j < q; ++j) row[j] += coef * dmk[j];
            }
            if (dh) {
              T* dhk = dh->data().data() + k * n + s;
              for (std::size_t p = 0; p < q; ++p) {
                T acc = 0;
                for (std::size_t j = 0; j < q; ++j) acc += a[p * q + j] * dmk[j];
                dhk[p] += acc;
              }
            }
          }
          if (!df && !dg) continue;
          for (std::size_t j = 0; j < q; ++j) {
            T dot = 0;
            for (std::size_t p = 0; p < q; ++p) dot += a[p * q + j] * da[p * q + j];
            for (std::size_t p = 0; p < q; ++p) ds[p * q + j] = scale * a[p * q + j] * (da[p * q + j] - dot);
          }
          for (std::size_t k = 0; k < d; ++k) {
            const T* fk = fv.data().data() + k * n + s;
            const T* gk = gv.data().data() + k * n + s;
            if (df) {
              T* dfk = df->data().data() + k * n + s;
              for (std::size_t p = 0; p < q; ++p) {
                T acc = 0;
                for (std::size_t j = 0; j < q; ++j) acc += ds[p * q + j] * gk[j];
                dfk[p] += acc;
              }
            }
            if (dg) {
              T* dgk = dg->data().data() + k * n + s;
              for (std::size_t p = 0; p < q; ++p) {
                const T coef = fk[p];
                const T* row = ds.data() + p * q;
                for (std::size_t j = 0; j < q; ++j) dgk[j] += coef * row[j];
              }
            }
          }
        }
      });
}

}  // namespace ag

template <class T>
TensorT<T> finite_diff_grad(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x, T eps) {
  if (!(eps > 0)) throw ContractError("finite_diff_grad eps must be positive");
  TensorT<T> out(x.shape());
  TensorT<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const TensorT<T> up = f(probe);
    probe[i] = orig - eps;
    const TensorT<T> down = f(probe);
    probe[i] = orig;
    if (up.size() != 1 || down.size() != 1)
      throw ContractError("finite_diff_grad needs a scalar function, got shape " + shape_str(up.shape()));
    out[i] = (up[0] - down[0]) / (2 * eps);
  }
  return out;
}

#define DAN_INSTANTIATE(T)                                                                                      \
  template struct Parameter<T>;                                                                                 \
  template class Tape<T>;                                                                                       \
  template void block_mix_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, std::size_t, T,     \
                                     TensorT<T>&, std::vector<T>*);                                             \
  template TensorT<T> finite_diff_grad<T>(const std::function<TensorT<T>(const TensorT<T>&)>&, const TensorT<T>&, \
                                          T);                                                                   \
  namespace ag {                                                                                                \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> scale<T>(const Var<T>&, T);                                                                   \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                                              \
  template Var<T> sum<T>(const Var<T>&);                                                                        \
  template Var<T> mean<T>(const Var<T>&);                                                                       \
  template Var<T> abs<T>(const Var<T>&);                                                                        \
  template Var<T> square<T>(const Var<T>&);                                                                     \
  template Var<T> relu<T>(const Var<T>&);                                                                       \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                             \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&, bool, bool);                                          \
  template Var<T> softmax_cols<T>(const Var<T>&);                                                               \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);             \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                                                  \
  template Var<T> gather_cols<T>(const Var<T>&, std::span<const std::size_t>);                                  \
  template Var<T> block_mix<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, T);                    \
  }

DAN_INSTANTIATE(float)
DAN_INSTANTIATE(double)

#undef DAN_INSTANTIATE

}  // namespace dan
