#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dan/tensor.hpp"

namespace dan {

// 8-bit grayscale image, row-major.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t w, std::size_t h, std::uint8_t fill = 0);
  ImageU8(std::size_t w, std::size_t h, std::vector<std::uint8_t> px);

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool same_size(const ImageU8& o) const { return width == o.width && height == o.height; }

  bool operator==(const ImageU8&) const = default;
};

// 1×H×W tensor with values in [0, 1].
template <class T>
TensorT<T> to_tensor(const ImageU8& img);

// Rounds x·255 to the nearest level after clamping to [0, 1].
template <class T>
ImageU8 to_image(const TensorT<T>& t);

}  // namespace dan
