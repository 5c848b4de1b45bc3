#include "encattack/permutation.hpp"

#include <numeric>
#include <string>

#include "encattack/error.hpp"

namespace encattack {

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> map(n);
  std::iota(map.begin(), map.end(), std::size_t{0});
  return Permutation(std::move(map));
}

Permutation Permutation::random(std::size_t n, Rng& rng) {
  std::vector<std::size_t> map(n);
  std::iota(map.begin(), map.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(map[i - 1], map[j]);
  }
  return Permutation(std::move(map));
}

Permutation Permutation::from_indices(std::vector<std::size_t> indices) {
  if (!is_bijection(indices)) {
    fail(ErrorKind::validation,
         "index array of length " + std::to_string(indices.size()) + " is not a permutation");
  }
  return Permutation(std::move(indices));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) inv[map_[i]] = i;
  return Permutation(std::move(inv));
}

bool Permutation::is_identity() const noexcept {
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] != i) return false;
  }
  return true;
}

Permutation compose(const Permutation& outer, const Permutation& inner) {
  require(outer.size() == inner.size(), ErrorKind::shape, "composing permutations of different sizes");
  std::vector<std::size_t> map(inner.size());
  for (std::size_t i = 0; i < inner.size(); ++i) map[i] = outer[inner[i]];
  return Permutation::from_indices(std::move(map));
}

bool is_bijection(std::span<const std::size_t> indices) noexcept {
  std::vector<bool> seen(indices.size(), false);
  for (const std::size_t v : indices) {
    if (v >= indices.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

std::size_t agreements(const Permutation& a, const Permutation& b) {
  require(a.size() == b.size(), ErrorKind::shape, "comparing permutations of different sizes");
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) count += a[i] == b[i] ? 1 : 0;
  return count;
}

}  // namespace encattack
