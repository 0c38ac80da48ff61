#include "dan/image.hpp"

#include <algorithm>
#include <cmath>

namespace dan {

ImageU8::ImageU8(std::size_t w, std::size_t h, std::uint8_t fill) : width(w), height(h), pixels(w * h, fill) {}

ImageU8::ImageU8(std::size_t w, std::size_t h, std::vector<std::uint8_t> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (pixels.size() != w * h)
    throw DimensionError("image " + std::to_string(w) + "x" + std::to_string(h) + " needs " + std::to_string(w * h) +
                         " pixels, got " + std::to_string(pixels.size()));
}

template <class T>
TensorT<T> to_tensor(const ImageU8& img) {
  TensorT<T> t({1, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<T>(img.pixels[i]) / T(255);
  return t;
}

template <class T>
ImageU8 to_image(const TensorT<T>& t) {
  if (t.rank() != 3 || t.dim(0) != 1) throw DimensionError("to_image expects 1×H×W, got " + shape_str(t.shape()));
  ImageU8 img(t.dim(2), t.dim(1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(static_cast<double>(t[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

template TensorT<float> to_tensor<float>(const ImageU8&);
template TensorT<double> to_tensor<double>(const ImageU8&);
template ImageU8 to_image<float>(const TensorT<float>&);
template ImageU8 to_image<double>(const TensorT<double>&);

}  // namespace dan
