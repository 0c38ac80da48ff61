#include "dan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "dan/rng.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// PGM

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw PgmError(PgmErrorKind::truncated, std::string("PGM header ends before ") + field);
    if (!std::isdigit(bytes_[pos_])) throw PgmError(PgmErrorKind::bad_header, std::string("PGM ") + field + " is not a number");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1u << 30)) throw PgmError(PgmErrorKind::bad_header, std::string("PGM ") + field + " too large");
    }
    return v;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ImageU8 read_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2) throw PgmError(PgmErrorKind::truncated, "PGM data shorter than its magic number");
  if (bytes[0] != 'P' || bytes[1] != '5')
    throw PgmError(PgmErrorKind::unsupported_format,
                   "unsupported image format '" + std::string(bytes.begin(), bytes.begin() + 2) + "', expected P5");
  HeaderReader r(bytes);
  r.pos() = 2;
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw PgmError(PgmErrorKind::bad_header, "PGM dimensions must be positive");
  if (maxval != 255) throw PgmError(PgmErrorKind::bad_maxval, "PGM maxval " + std::to_string(maxval) + " is not 255");
  std::size_t& pos = r.pos();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw PgmError(PgmErrorKind::truncated, "PGM header not terminated by whitespace");
  ++pos;
  if (bytes.size() - pos < w * h)
    throw PgmError(PgmErrorKind::truncated, "PGM payload has " + std::to_string(bytes.size() - pos) +
                                                " bytes, expected " + std::to_string(w * h));
  return ImageU8(w, h, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + w * h));
}

std::vector<std::uint8_t> write_pgm(const ImageU8& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

ImageU8 read_pgm_file(const std::filesystem::path& path) { return read_pgm(read_file(path)); }

void write_pgm_file(const std::filesystem::path& path, const ImageU8& img) {
  const auto bytes = write_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Histogram specification

Histogram histogram(const ImageU8& img) {
  Histogram h{};
  for (auto v : img.pixels) ++h[v];
  return h;
}

std::array<std::uint8_t, 256> specification_map(const Histogram& src, const Histogram& ref) {
  std::array<unsigned __int128, 256> cdf_src{}, cdf_ref{};
  unsigned __int128 acc_s = 0, acc_r = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    acc_s += src[v];
    acc_r += ref[v];
    cdf_src[v] = acc_s;
    cdf_ref[v] = acc_r;
  }
  if (acc_r == 0) throw ContractError("reference histogram is empty");
  if (acc_s == 0) throw ContractError("source histogram is empty");
  std::array<std::uint8_t, 256> map{};
  std::size_t u = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    // CDF_ref(u)/total_ref >= CDF_src(v)/total_src, cross-multiplied.
    while (u < 255 && cdf_ref[u] * acc_s < cdf_src[v] * acc_r) ++u;
    map[v] = static_cast<std::uint8_t>(u);
  }
  return map;
}

ImageU8 histogram_specification(const ImageU8& src, const Histogram& ref) {
  const auto map = specification_map(histogram(src), ref);
  ImageU8 out = src;
  for (auto& p : out.pixels) p = map[p];
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) out.at(x, y) = img.at(img.width - 1 - x, y);
  return out;
}

ImageU8 flip_vertical(const ImageU8& img) {
  ImageU8 out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, img.height - 1 - y);
  return out;
}

ImageU8 crop(const ImageU8& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height)
    throw DimensionError("crop window exceeds image bounds");
  ImageU8 out(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

AugmentPlan plan_augment(std::size_t width, std::size_t height, std::size_t crop_size, std::uint64_t seed) {
  if (crop_size == 0 || crop_size > width || crop_size > height)
    throw DimensionError("crop " + std::to_string(crop_size) + " does not fit image " + std::to_string(width) + "x" +
                         std::to_string(height));
  CounterRng rng(seed, 0xA6);
  AugmentPlan plan;
  plan.crop = crop_size;
  plan.crop_x = rng.next_below(static_cast<std::uint32_t>(width - crop_size + 1));
  plan.crop_y = rng.next_below(static_cast<std::uint32_t>(height - crop_size + 1));
  plan.flip_h = rng.next_bool();
  plan.flip_v = rng.next_bool();
  plan.swap_time = rng.next_bool();
  return plan;
}

Triplet apply_augment(const Triplet& t, const AugmentPlan& plan) {
  if (!t.consistent()) throw DimensionError("triplet frames differ in size");
  auto transform = [&](const ImageU8& img) {
    ImageU8 out = crop(img, plan.crop_x, plan.crop_y, plan.crop, plan.crop);
    if (plan.flip_h) out = flip_horizontal(out);
    if (plan.flip_v) out = flip_vertical(out);
    return out;
  };
  Triplet out{transform(t.prev), transform(t.mid), transform(t.next)};
  if (plan.swap_time) std::swap(out.prev, out.next);
  return out;
}

Triplet augment(const Triplet& t, std::uint64_t seed, std::size_t crop_size) {
  return apply_augment(t, plan_augment(t.prev.width, t.prev.height, crop_size, seed));
}

// ---------------------------------------------------------------------------
// Synthetic triplets

namespace {

struct Wave {
  double amp, kx, ky, phase;
};

struct Blob {
  double cx, cy, rx, ry, cos_t, sin_t, level;
};

class Texture {
 public:
  Texture(std::uint64_t seed, double extent_x, double extent_y) {
    CounterRng rng(seed, 0x7E);
    constexpr double two_pi = 2 * std::numbers::pi;
    for (int i = 0; i < 6; ++i) {
      const double wavelength = 6.0 + 18.0 * rng.next_uniform();
      const double theta = two_pi * rng.next_uniform();
      waves_.push_back({0.3 + 0.7 * rng.next_uniform(), two_pi / wavelength * std::cos(theta),
                        two_pi / wavelength * std::sin(theta), two_pi * rng.next_uniform()});
      amp_total_ += waves_.back().amp;
    }
    for (int i = 0; i < 5; ++i) {
      const double theta = std::numbers::pi * rng.next_uniform();
      blobs_.push_back({extent_x * rng.next_uniform(), extent_y * rng.next_uniform(), 3.0 + 7.0 * rng.next_uniform(),
                        3.0 + 7.0 * rng.next_uniform(), std::cos(theta), std::sin(theta),
                        (rng.next_bool() ? 1.0 : -1.0) * (0.5 + 0.5 * rng.next_uniform())});
    }
  }

  double operator()(double x, double y) const {
    double waves = 0;
    for (const auto& w : waves_) waves += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    double blobs = 0;
    for (const auto& b : blobs_) {
      const double u = ((x - b.cx) * b.cos_t + (y - b.cy) * b.sin_t) / b.rx;
      const double v = (-(x - b.cx) * b.sin_t + (y - b.cy) * b.cos_t) / b.ry;
      const double r = std::sqrt(u * u + v * v);
      blobs += b.level / (1.0 + std::exp(6.0 * (r - 1.0)));
    }
    return 128.0 + 55.0 * waves / amp_total_ + 70.0 * blobs;
  }

 private:
  std::vector<Wave> waves_;
  std::vector<Blob> blobs_;
  double amp_total_ = 0;
};

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

SyntheticTriplet make_synthetic(const SyntheticOptions& o) {
  if (o.width < 4 || o.height < 4) throw DimensionError("synthetic frames must be at least 4x4");
  if (o.max_shift < 0 || 4 * static_cast<std::size_t>(o.max_shift) >= std::min(o.width, o.height))
    throw ContractError("max_shift must satisfy 0 <= max_shift < min(width, height)/4");
  int dx = 0, dy = 0;
  CounterRng rng(o.seed, 0x5F);
  if (o.shift) {
    std::tie(dx, dy) = *o.shift;
  } else if (o.max_shift > 0) {
    const auto span = static_cast<std::uint32_t>(2 * o.max_shift + 1);
    do {
      dx = static_cast<int>(rng.next_below(span)) - o.max_shift;
      dy = static_cast<int>(rng.next_below(span)) - o.max_shift;
    } while (dx == 0 && dy == 0);
  }
  const Texture tex(o.seed, static_cast<double>(o.width), static_cast<double>(o.height));
  const double phase_x = 2 * std::numbers::pi * rng.next_uniform();
  const double phase_y = 2 * std::numbers::pi * rng.next_uniform();
  const double k = 2 * std::numbers::pi / o.warp_wavelength;

  SyntheticTriplet out;
  out.dx = dx;
  out.dy = dy;
  out.frames = {ImageU8(o.width, o.height), ImageU8(o.width, o.height), ImageU8(o.width, o.height)};
  for (std::size_t y = 0; y < o.height; ++y) {
    for (std::size_t x = 0; x < o.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double wx = 0, wy = 0;
      if (o.warp_amplitude != 0) {
        wx = o.warp_amplitude * std::sin(k * fy + phase_x);
        wy = o.warp_amplitude * std::sin(k * fx + phase_y);
      }
      out.frames.mid.at(x, y) = quantize(tex(fx, fy));
      out.frames.prev.at(x, y) = quantize(tex(fx + dx + wx, fy + dy + wy));
      out.frames.next.at(x, y) = quantize(tex(fx - dx - wx, fy - dy - wy));
    }
  }
  return out;
}

Triplet make_synthetic_triplet(std::size_t width, std::size_t height, std::uint64_t seed, int max_shift) {
  SyntheticOptions o;
  o.width = width;
  o.height = height;
  o.seed = seed;
  o.max_shift = max_shift;
  return make_synthetic(o).frames;
}

ImageU8 shift_image(const ImageU8& img, int dx, int dy) {
  ImageU8 out(img.width, img.height);
  const auto w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const long sx = x + dx, sy = y + dy;
      if (sx >= 0 && sx < w && sy >= 0 && sy < h)
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
            img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directories

std::vector<std::string> read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "triplets.txt");
  if (!in) throw IoError("cannot open manifest " + (root / "triplets.txt").string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

Triplet load_triplet(const std::filesystem::path& root, const std::string& name) {
  Triplet t{read_pgm_file(root / (name + "_0.pgm")), read_pgm_file(root / (name + "_1.pgm")),
            read_pgm_file(root / (name + "_2.pgm"))};
  if (!t.consistent()) throw DimensionError("triplet '" + name + "' has frames of different sizes");
  return t;
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset d;
  d.names = read_manifest(root);
  for (const auto& n : d.names) d.triplets.push_back(load_triplet(root, n));
  return d;
}

void write_dataset(const std::filesystem::path& root, const Dataset& data) {
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "triplets.txt", std::ios::binary);
  if (!manifest) throw IoError("cannot write manifest in " + root.string());
  for (std::size_t i = 0; i < data.triplets.size(); ++i) {
    const auto& n = data.names.at(i);
    manifest << n << '\n';
    write_pgm_file(root / (n + "_0.pgm"), data.triplets[i].prev);
    write_pgm_file(root / (n + "_1.pgm"), data.triplets[i].mid);
    write_pgm_file(root / (n + "_2.pgm"), data.triplets[i].next);
  }
}

Dataset specify_histograms(Dataset data, const std::optional<Histogram>& ref) {
  if (data.triplets.empty()) return data;
  const Histogram target = ref ? *ref : histogram(data.triplets.front().prev);
  for (auto& t : data.triplets) {
    t.prev = histogram_specification(t.prev, target);
    t.mid = histogram_specification(t.mid, target);
    t.next = histogram_specification(t.next, target);
  }
  return data;
}

}  // namespace dan
