#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dan/image.hpp"

namespace dan {

struct Triplet {
  ImageU8 prev, mid, next;

  bool consistent() const { return prev.same_size(mid) && mid.same_size(next); }
  bool operator==(const Triplet&) const = default;
};

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255).

ImageU8 read_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_pgm(const ImageU8& img);

ImageU8 read_pgm_file(const std::filesystem::path& path);
void write_pgm_file(const std::filesystem::path& path, const ImageU8& img);

// ---------------------------------------------------------------------------
// Histogram specification.

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(const ImageU8& img);

// Level map sending v to the smallest u with CDF_ref(u) ≥ CDF_src(v).
// CDFs are compared exactly in integer arithmetic.
std::array<std::uint8_t, 256> specification_map(const Histogram& src, const Histogram& ref);

ImageU8 histogram_specification(const ImageU8& src, const Histogram& ref);

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentPlan {
  std::size_t crop_x = 0, crop_y = 0, crop = 0;
  bool flip_h = false, flip_v = false, swap_time = false;
};

AugmentPlan plan_augment(std::size_t width, std::size_t height, std::size_t crop, std::uint64_t seed);
Triplet apply_augment(const Triplet& t, const AugmentPlan& plan);

// Seeded crop, H/V flips shared by all frames, temporal swap with p = 1/2.
Triplet augment(const Triplet& t, std::uint64_t seed, std::size_t crop = 64);

ImageU8 flip_horizontal(const ImageU8& img);
ImageU8 flip_vertical(const ImageU8& img);
ImageU8 crop(const ImageU8& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// ---------------------------------------------------------------------------
// Synthetic deformation triplets.

struct SyntheticOptions {
  std::size_t width = 64;
  std::size_t height = 64;
  std::uint64_t seed = 0;
  int max_shift = 4;
  // Overrides the seeded translation when set.
  std::optional<std::pair<int, int>> shift;
  // Amplitude in pixels of an extra smooth sinusoidal warp (0 = pure translation).
  double warp_amplitude = 0;
  double warp_wavelength = 32;
};

struct SyntheticTriplet {
  Triplet frames;
  int dx = 0, dy = 0;
};

// mid(x, y) = T(x, y), prev(x, y) = T(x + dx, y + dy), next(x, y) = T(x − dx, y − dy)
// for a seeded band-limited texture T with soft elliptical blobs. A zero
// translation is redrawn unless max_shift is 0.
SyntheticTriplet make_synthetic(const SyntheticOptions& opts);

Triplet make_synthetic_triplet(std::size_t width, std::size_t height, std::uint64_t seed, int max_shift);

// Shifts img by (dx, dy): out(x, y) = img(x + dx, y + dy), out of range → 0.
ImageU8 shift_image(const ImageU8& img, int dx, int dy);

// ---------------------------------------------------------------------------
// Dataset directory: <root>/triplets.txt lists names; frames are
// <root>/<name>_0.pgm, <name>_1.pgm, <name>_2.pgm.

std::vector<std::string> read_manifest(const std::filesystem::path& root);
Triplet load_triplet(const std::filesystem::path& root, const std::string& name);

struct Dataset {
  std::vector<std::string> names;
  std::vector<Triplet> triplets;
  std::size_t size() const { return triplets.size(); }
};

Dataset load_dataset(const std::filesystem::path& root);
void write_dataset(const std::filesystem::path& root, const Dataset& data);

// Maps every frame onto `ref` (defaults to the histogram of the first frame).
Dataset specify_histograms(Dataset data, const std::optional<Histogram>& ref = std::nullopt);

}  // namespace dan
