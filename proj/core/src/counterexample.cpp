#include "encattack/counterexample.hpp"

#include <numeric>

#include "encattack/challenge.hpp"
#include "encattack/error.hpp"
#include "encattack/rng.hpp"

namespace encattack {

std::vector<double> BinaryScheme::tag(std::uint64_t x) const {
  Rng rng(derive_seed(key_seed, x));
  std::vector<double> out(tag_bits);
  std::uint64_t word = 0;
  for (std::size_t t = 0; t < tag_bits; ++t) {
    if (t % 64 == 0) word = rng.next_u64();
    out[t] = (word >> (t % 64)) & 1U ? 1.0 : -1.0;
  }
  return out;
}

std::vector<double> BinaryScheme::encode(std::uint64_t x) const {
  require(n >= 1 && n <= 63 && tag_bits >= 1, ErrorKind::configuration, "scheme needs 1 <= n <= 63 and a tag");
  require(x < (std::uint64_t{1} << n), ErrorKind::validation, "input does not fit in n bits");
  std::vector<double> out(n);
  for (std::size_t b = 0; b < n; ++b) out[b] = (x >> b) & 1U ? 1.0 : -1.0;
  const auto t = tag(x);
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

std::uint64_t reconstruct(const std::vector<double>& encoding, std::size_t n) {
  require(encoding.size() >= n, ErrorKind::shape, "encoding shorter than n");
  std::uint64_t x = 0;
  for (std::size_t b = 0; b < n; ++b) x |= encoding[b] > 0.0 ? std::uint64_t{1} << b : 0;
  return x;
}

std::string to_string(TagGuess g) {
  switch (g) {
    case TagGuess::independent_random: return "independent_random";
    case TagGuess::constant: return "constant";
    case TagGuess::exact_key: return "exact_key";
  }
  return "independent_random";
}

TagGuess tag_guess_from_string(const std::string& s) {
  if (s == "independent_random") return TagGuess::independent_random;
  if (s == "constant") return TagGuess::constant;
  if (s == "exact_key") return TagGuess::exact_key;
  fail(ErrorKind::configuration, "unknown tag guess '" + s + "'");
}

Challenge2Result challenge2_counterexample(std::size_t n, std::size_t tag_bits, std::size_t count,
                                           std::size_t trials, std::uint64_t seed, TagGuess guess) {
  require(n >= 1 && n <= 20, ErrorKind::configuration, "counterexample needs 1 <= n <= 20");
  require(tag_bits >= 1 && count >= 1 && trials >= 1, ErrorKind::configuration,
          "counterexample needs positive tag bits, count and trials");
  require(count <= (std::size_t{1} << n), ErrorKind::configuration, "cannot draw that many distinct n-bit points");
  Challenge2Result res;
  res.reconstruction_exact = true;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, t));
    const BinaryScheme truth{n, tag_bits, rng.next_u64()};
    const BinaryScheme other{n, tag_bits, rng.next_u64()};
    const Permutation order = Permutation::random(std::size_t{1} << n, rng);
    std::vector<std::vector<double>> y, y_guess;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t z = order[i];
      y.push_back(truth.encode(z));
      res.reconstruction_exact = res.reconstruction_exact && reconstruct(y.back(), n) == z;
      std::vector<double> g;
      switch (guess) {
        case TagGuess::exact_key: g = truth.encode(z); break;
        case TagGuess::independent_random: g = other.encode(z); break;
        case TagGuess::constant:
          g = truth.encode(z);
          std::fill(g.begin() + static_cast<std::ptrdiff_t>(n), g.end(), 1.0);
          break;
      }
      y_guess.push_back(std::move(g));
    }
    res.scores.push_back(score_challenge2(y, y_guess, Distance::hamming).score);
  }
  res.mean_score = static_cast<double>(std::accumulate(res.scores.begin(), res.scores.end(), std::size_t{0})) /
                   static_cast<double>(trials);
  return res;
}

}  // namespace encattack
