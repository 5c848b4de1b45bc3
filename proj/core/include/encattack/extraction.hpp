#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encattack/encoder.hpp"
#include "encattack/nn.hpp"
#include "encattack/permutation.hpp"

namespace encattack {

/// Starting point for the extracted encoder.
///   small_uniform: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
///     positional encoding zero
///   key_distribution: a fresh key from the encoder's own distribution
enum class ExtractionInit { small_uniform, key_distribution };

std::string to_string(ExtractionInit i);
ExtractionInit extraction_init_from_string(const std::string& s);

struct ExtractionConfig {
  std::size_t steps = 2000;
  AdamConfig adam;
  ExtractionInit init = ExtractionInit::small_uniform;
  std::size_t max_pairs = 0;  // 0 = use every matched pair
  std::size_t trace_every = 100;
};

struct ExtractionResult {
  EncoderKey key;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // every `trace_every` steps, then the last
};

EncoderKey init_extraction_key(const ImageSpec& spec, ExtractionInit init, std::uint64_t seed);

/// Full-batch Adam on the mean squared error between the candidate's
/// pre-permutation encoding of image i and targets[i]. Every patch weight,
/// bias, positional row and the projection are trained. Extraction error if
/// the loss turns non-finite.
ExtractionResult fit_encoder(std::span<const Image> images, std::span<const Matrix2D> targets,
                             const ImageSpec& spec, const ExtractionConfig& cfg, std::uint64_t seed);

/// Encoded rows of y in original patch order: row p is y row
/// local.inverse()[rho[p]], where local maps y rows to reference rows and rho
/// maps original positions to reference rows.
Matrix2D depermute(const EncodedImage& y, const Permutation& local, const Permutation& rho);

/// Pairs original i with encoding m[i] and fits an encoder to the
/// de-permuted targets.
ExtractionResult extract_encoder(std::span<const Image> originals, std::span<const EncodedImage> encodings,
                                 const Permutation& m, std::span<const Permutation> local_perms,
                                 const Permutation& rho, const ImageSpec& spec, const ExtractionConfig& cfg,
                                 std::uint64_t seed);

/// ||T_est(x) - T_true(x)|| / ||T_true(x)|| over the unpermuted encodings of
/// `images`, summed over all of them.
double relative_residual(const EncoderKey& estimate, const EncoderKey& truth, std::span<const Image> images);

}  // namespace encattack
