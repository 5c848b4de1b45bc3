#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "encattack/rng.hpp"

namespace encattack {

/// A bijection on {0, ..., n-1}. `p[i]` is the image of i.
class Permutation {
 public:
  Permutation() = default;

  static Permutation identity(std::size_t n);
  static Permutation random(std::size_t n, Rng& rng);

  /// Throws a validation error unless `indices` is a bijection.
  static Permutation from_indices(std::vector<std::size_t> indices);

  std::size_t size() const noexcept { return map_.size(); }
  std::size_t operator[](std::size_t i) const noexcept { return map_[i]; }
  const std::vector<std::size_t>& indices() const noexcept { return map_; }

  Permutation inverse() const;
  bool is_identity() const noexcept;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  explicit Permutation(std::vector<std::size_t> map) : map_(std::move(map)) {}
  std::vector<std::size_t> map_;
};

/// (outer ∘ inner)(i) = outer[inner[i]].
Permutation compose(const Permutation& outer, const Permutation& inner);

bool is_bijection(std::span<const std::size_t> indices) noexcept;

/// Number of positions where a and b agree.
std::size_t agreements(const Permutation& a, const Permutation& b);

}  // namespace encattack
