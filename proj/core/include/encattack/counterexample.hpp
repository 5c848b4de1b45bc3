#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace encattack {

/// E(x, k) = (x, k(x)) on n-bit inputs, with k a random function to
/// {-1, 1}^tag_bits realized by a keyed hash of x. Bits are written as +-1.
struct BinaryScheme {
  std::size_t n = 8;
  std::size_t tag_bits = 256;
  std::uint64_t key_seed = 0;

  std::vector<double> tag(std::uint64_t x) const;
  std::vector<double> encode(std::uint64_t x) const;
};

/// Reads x back from the first n entries of an encoding.
std::uint64_t reconstruct(const std::vector<double>& encoding, std::size_t n);

/// How the adversary picks its tag function k'.
enum class TagGuess { independent_random, constant, exact_key };

std::string to_string(TagGuess g);
TagGuess tag_guess_from_string(const std::string& s);

struct Challenge2Result {
  double mean_score = 0.0;
  bool reconstruction_exact = false;
  std::vector<std::size_t> scores;  // per trial
};

/// Each trial draws a fresh key and N distinct points, encodes them with E
/// and with the adversary's E' = (x, k'(x)), and scores with Hamming
/// distance. Also checks that every encoding reveals its input verbatim.
Challenge2Result challenge2_counterexample(std::size_t n, std::size_t tag_bits, std::size_t count,
                                           std::size_t trials, std::uint64_t seed,
                                           TagGuess guess = TagGuess::independent_random);

}  // namespace encattack
