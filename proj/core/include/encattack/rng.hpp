#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace encattack {

/// Counter-based generator (Philox4x32-10) keyed by (seed, stream).
///
/// Streams are independent and addressable: `split(id)` derives a child keyed
/// by the parent's identity and `id`, so modules draw from their own streams
/// without coordinating call order. All outputs, including normal variates,
/// are bit-reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  Rng split(std::uint64_t stream_id) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept;
  std::uint32_t next_u32() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Unbiased; n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Binomial(n, p) by direct summation; fine for the n used here.
  std::uint64_t binomial(std::uint64_t n, double p) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int block_pos_ = 4;
  std::optional<double> spare_normal_;
};

/// Stateless seed derivation for per-item streams (per-image, per-trial).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace encattack
