#pragma once

#include <array>
#include <cstdint>

#include "dan/autodiff.hpp"
#include "dan/tensor.hpp"

namespace dan {

struct LossWeights {
  double alpha = 1e6;  // style
  double beta = 1.0;   // feature
  double gamma = 1.0;  // pixel
  void validate() const;
};

// Frozen random feature extractor: three 3×3 stride-2 convolutions
// (1→16→32→64, padding 1, ReLU, no bias).
template <class T>
class PerceptualStack {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0xDA17;
  static constexpr double kDefaultStddev = 0.1;

  explicit PerceptualStack(std::uint64_t seed = kDefaultSeed, double stddev = kDefaultStddev);

  const std::array<TensorT<T>, 3>& kernels() const noexcept { return kernels_; }

  std::array<TensorT<T>, 3> features(const TensorT<T>& image) const;
  std::array<Var<T>, 3> features(const Var<T>& image) const;

 private:
  std::array<TensorT<T>, 3> kernels_;
};

template <class T>
TensorT<T> gram_matrix(const TensorT<T>& f);

template <class T>
T pixel_loss(const TensorT<T>& pred, const TensorT<T>& target);
template <class T>
T feature_loss(const TensorT<T>& pred, const TensorT<T>& target, const PerceptualStack<T>& stack);
template <class T>
T style_loss(const TensorT<T>& pred, const TensorT<T>& target, const PerceptualStack<T>& stack);
template <class T>
T total_loss(const TensorT<T>& pred, const TensorT<T>& target, const LossWeights& w, const PerceptualStack<T>& stack);

namespace ag {

template <class T>
Var<T> gram_matrix(const Var<T>& f);
template <class T>
Var<T> pixel_loss(const Var<T>& pred, const Var<T>& target);
template <class T>
Var<T> feature_loss(const Var<T>& pred, const Var<T>& target, const PerceptualStack<T>& stack);
template <class T>
Var<T> style_loss(const Var<T>& pred, const Var<T>& target, const PerceptualStack<T>& stack);

template <class T>
struct LossTerms {
  Var<T> total, style, feature, pixel;
};

template <class T>
LossTerms<T> total_loss(const Var<T>& pred, const Var<T>& target, const LossWeights& w,
                        const PerceptualStack<T>& stack);

}  // namespace ag

}  // namespace dan
