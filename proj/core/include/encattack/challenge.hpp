#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "encattack/encoder.hpp"
#include "encattack/permutation.hpp"

namespace encattack {

/// What Bob receives: the ordered originals and the shuffled encodings.
struct ChallengeBundle {
  ImageSpec spec;
  std::vector<Image> originals;
  std::vector<EncodedImage> encodings;

  std::size_t size() const noexcept { return originals.size(); }
  void validate() const;
};

struct ChallengeSeeds {
  std::uint64_t key_seed = 0;
  std::uint64_t sigma_seed = 0;
  std::uint64_t perm_seed = 0;
};

/// Alice's secrets. `sigma[i]` is the encoding index that holds original i;
/// `patch_perms[i]` is the patch permutation used for original i.
struct HiddenSolution {
  Permutation sigma;
  EncoderKey key;
  std::vector<Permutation> patch_perms;
  std::vector<std::size_t> dataset_indices;  // which dataset images were drawn
  ChallengeSeeds seeds;
};

struct ScoreReport {
  std::size_t score = 0;
  std::size_t n = 0;
  std::vector<bool> correct;
};

/// Draws N images from `dataset` in random order, encodes each with a fresh
/// patch permutation, and shuffles the encodings by sigma. The key is drawn
/// from `key_seed`, the subset and sigma from `sigma_seed`, and image i's
/// patch permutation from derive_seed(perm_seed, i).
std::pair<ChallengeBundle, HiddenSolution> make_challenge(std::span<const Image> dataset, std::size_t n,
                                                          const ChallengeSeeds& seeds,
                                                          const KeyDistribution& dist = {},
                                                          unsigned threads = 1);

/// Counts i with guess[i] == sigma[i]. Validation error unless `guess` is a
/// permutation of {0..N-1}.
ScoreReport score_matching(std::span<const std::size_t> guess, const HiddenSolution& solution);
ScoreReport score_matching(std::span<const std::size_t> guess, const Permutation& sigma);

enum class Distance { hamming, euclidean };

std::string to_string(Distance d);
Distance distance_from_string(const std::string& s);

/// Counts i such that i is the smallest j minimizing D(guessed[j], truth[i]).
ScoreReport score_challenge2(std::span<const std::vector<double>> truth,
                             std::span<const std::vector<double>> guessed, Distance metric);

// On-disk layout: a bundle directory holds originals.{json,bin} and
// encodings.{json,bin}; solution.{json,bin} live in a separate directory.
void save_bundle(const ChallengeBundle& bundle, const std::filesystem::path& dir);
ChallengeBundle load_bundle(const std::filesystem::path& dir);

void save_solution(const HiddenSolution& solution, const std::filesystem::path& dir);
HiddenSolution load_solution(const std::filesystem::path& dir);

/// guess.json: {"format": "encattack.guess/1", "guess": [...]}.
void save_guess(std::span<const std::size_t> guess, const std::filesystem::path& path);
std::vector<std::size_t> load_guess(const std::filesystem::path& path);

void save_score_report(const ScoreReport& report, const std::filesystem::path& path);

}  // namespace encattack
