#pragma once

#include <array>
#include <cstdint>

namespace dan {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A counter-based generator: the output block is a pure function of a 128-bit
// counter and a 64-bit key, so any implementation reproduces the same stream.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

PhiloxKey philox_key(std::uint64_t seed) noexcept;

// Sequential view over the Philox stream for a (seed, stream) pair.
// Block b of the stream uses counter {lo(b), hi(b), lo(stream), hi(stream)}.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint32_t next_u32() noexcept;
  // Uniform on [0, 1) with 32-bit resolution.
  double next_uniform() noexcept;
  // Uniform integer in [0, n); n must be > 0.
  std::uint32_t next_below(std::uint32_t n) noexcept;
  bool next_bool() noexcept { return (next_u32() >> 31) != 0; }

 private:
  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  unsigned used_ = 4;
};

// Mixes several values into one 64-bit seed (splitmix64 finalizer chain).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

}  // namespace dan
