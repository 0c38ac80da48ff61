#include "dan/losses.hpp"

#include <cmath>

namespace dan {

void LossWeights::validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0)) throw ContractError("loss weights must be non-negative");
}

template <class T>
PerceptualStack<T>::PerceptualStack(std::uint64_t seed, double stddev) {
  const std::array<std::size_t, 4> ch{1, 16, 32, 64};
  for (std::size_t l = 0; l < 3; ++l) kernels_[l] = seeded_normal<T>({ch[l + 1], ch[l], 3, 3}, seed + l, stddev);
}

template <class T>
std::array<TensorT<T>, 3> PerceptualStack<T>::features(const TensorT<T>& image) const {
  std::array<TensorT<T>, 3> out;
  const TensorT<T>* x = &image;
  for (std::size_t l = 0; l < 3; ++l) {
    out[l] = conv2d(*x, kernels_[l], 1, 2);
    for (auto& v : out[l].storage()) v = v > T(0) ? v : T(0);
    x = &out[l];
  }
  return out;
}

template <class T>
std::array<Var<T>, 3> PerceptualStack<T>::features(const Var<T>& image) const {
  std::array<Var<T>, 3> out;
  Var<T> x = image;
  for (std::size_t l = 0; l < 3; ++l) {
    out[l] = ag::relu(ag::conv2d(x, image.tape().constant(kernels_[l]), Var<T>(), 1, 2));
    x = out[l];
  }
  return out;
}

namespace {

void check_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

template <class T>
TensorT<T> gram_matrix(const TensorT<T>& f) {
  if (f.rank() != 3) throw DimensionError("gram_matrix expects C×H×W, got " + shape_str(f.shape()));
  const std::size_t c = f.dim(0), hw = f.dim(1) * f.dim(2);
  TensorT<T> g({c, c});
  const TensorT<T> ft = transpose(f.reshaped({c, hw}));
  gemm_nn(c, c, hw, f.data().data(), ft.data().data(), g.data().data());
  const T norm = T(1) / static_cast<T>(c * hw);
  for (auto& v : g.storage()) v *= norm;
  return g;
}

template <class T>
T pixel_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  check_same(pred.shape(), target.shape(), "pixel_loss");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(static_cast<double>(pred[i]) - target[i]);
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <class T>
T feature_loss(const TensorT<T>& pred, const TensorT<T>& target, const PerceptualStack<T>& stack) {
  check_same(pred.shape(), target.shape(), "feature_loss");
  const auto fp = stack.features(pred), ft = stack.features(target);
  double total = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    double acc = 0;
    for (std::size_t i = 0; i < fp[l].size(); ++i) {
      const double d = static_cast<double>(fp[l][i]) - ft[l][i];
      acc += d * d;
    }
    total += acc / static_cast<double>(fp[l].size());
  }
  return static_cast<T>(total);
}

template <class T>
T style_loss(const TensorT<T>& pred, const TensorT<T>& target, const PerceptualStack<T>& stack) {
  check_same(pred.shape(), target.shape(), "style_loss");
  const auto fp = stack.features(pred), ft = stack.features(target);
  double total = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    const auto gp = gram_matrix(fp[l]), gt = gram_matrix(ft[l]);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double d = static_cast<double>(gp[i]) - gt[i];
      total += d * d;
    }
  }
  return static_cast<T>(total);
}

template <class T>
T total_loss(const TensorT<T>& pred, const TensorT<T>& target, const LossWeights& w, const PerceptualStack<T>& stack) {
  w.validate();
  return static_cast<T>(w.alpha * style_loss(pred, target, stack) + w.beta * feature_loss(pred, target, stack) +
                        w.gamma * pixel_loss(pred, target));
}

namespace ag {

template <class T>
Var<T> gram_matrix(const Var<T>& f) {
  const Shape s = f.shape();
  if (s.size() != 3) throw DimensionError("gram_matrix expects C×H×W, got " + shape_str(s));
  Var<T> flat = reshape(f, {s[0], s[1] * s[2]});
  return scale(matmul(flat, flat, false, true), T(1) / static_cast<T>(s[0] * s[1] * s[2]));
}

template <class T>
Var<T> pixel_loss(const Var<T>& pred, const Var<T>& target) {
  check_same(pred.shape(), target.shape(), "pixel_loss");
  return mean(abs(sub(pred, target)));
}

template <class T>
Var<T> feature_loss(const Var<T>& pred, const Var<T>& target, const PerceptualStack<T>& stack) {
  check_same(pred.shape(), target.shape(), "feature_loss");
  const auto fp = stack.features(pred), ft = stack.features(target);
  Var<T> total = mean(square(sub(fp[0], ft[0])));
  for (std::size_t l = 1; l < 3; ++l) total = add(total, mean(square(sub(fp[l], ft[l]))));
  return total;
}

template <class T>
Var<T> style_loss(const Var<T>& pred, const Var<T>& target, const PerceptualStack<T>& stack) {
  check_same(pred.shape(), target.shape(), "style_loss");
  const auto fp = stack.features(pred), ft = stack.features(target);
  Var<T> total;
  for (std::size_t l = 0; l < 3; ++l) {
    Var<T> term = sum(square(sub(gram_matrix(fp[l]), gram_matrix(ft[l]))));
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

template <class T>
LossTerms<T> total_loss(const Var<T>& pred, const Var<T>& target, const LossWeights& w,
                        const PerceptualStack<T>& stack) {
  w.validate();
  check_same(pred.shape(), target.shape(), "total_loss");
  LossTerms<T> t;
  const auto fp = stack.features(pred), ft = stack.features(target);
  for (std::size_t l = 0; l < 3; ++l) {
    Var<T> f = mean(square(sub(fp[l], ft[l])));
    Var<T> s = sum(square(sub(gram_matrix(fp[l]), gram_matrix(ft[l]))));
    t.feature = l == 0 ? f : add(t.feature, f);
    t.style = l == 0 ? s : add(t.style, s);
  }
  t.pixel = pixel_loss(pred, target);
  t.total = add(add(scale(t.style, static_cast<T>(w.alpha)), scale(t.feature, static_cast<T>(w.beta))),
                scale(t.pixel, static_cast<T>(w.gamma)));
  return t;
}

}  // namespace ag

#define DAN_INSTANTIATE(T)                                                                                        \
  template class PerceptualStack<T>;                                                                              \
  template TensorT<T> gram_matrix<T>(const TensorT<T>&);                                                          \
  template T pixel_loss<T>(const TensorT<T>&, const TensorT<T>&);                                                 \
  template T feature_loss<T>(const TensorT<T>&, const TensorT<T>&, const PerceptualStack<T>&);                    \
  template T style_loss<T>(const TensorT<T>&, const TensorT<T>&, const PerceptualStack<T>&);                      \
  template T total_loss<T>(const TensorT<T>&, const TensorT<T>&, const LossWeights&, const PerceptualStack<T>&);  \
  template Var<T> ag::gram_matrix<T>(const Var<T>&);                                                              \
  template Var<T> ag::pixel_loss<T>(const Var<T>&, const Var<T>&);                                                \
  template Var<T> ag::feature_loss<T>(const Var<T>&, const Var<T>&, const PerceptualStack<T>&);                   \
  template Var<T> ag::style_loss<T>(const Var<T>&, const Var<T>&, const PerceptualStack<T>&);                     \
  template ag::LossTerms<T> ag::total_loss<T>(const Var<T>&, const Var<T>&, const LossWeights&,                   \
                                              const PerceptualStack<T>&);

DAN_INSTANTIATE(float)
DAN_INSTANTIATE(double)

}  // namespace dan
