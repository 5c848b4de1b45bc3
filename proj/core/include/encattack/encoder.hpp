#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "encattack/blob_io.hpp"
#include "encattack/nn.hpp"
#include "encattack/permutation.hpp"

namespace encattack {

/// Geometry of images and of the keyed patch encoder.
struct ImageSpec {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t channels = 1;
  std::size_t patches_per_side = 4;  // a; the image splits into a*a patches
  std::size_t latent_width = 64;     // d
  std::size_t output_width = 64;     // d_out
  std::size_t depth = 2;             // k, layers in the patch network

  /// Configuration error unless the patch grid tiles the image exactly.
  void validate() const;

  std::size_t patch_width() const noexcept { return width / patches_per_side; }
  std::size_t patch_height() const noexcept { return height / patches_per_side; }
  std::size_t patch_length() const noexcept { return patch_width() * patch_height() * channels; }
  std::size_t patch_count() const noexcept { return patches_per_side * patches_per_side; }
  std::size_t pixel_count() const noexcept { return width * height * channels; }

  friend bool operator==(const ImageSpec&, const ImageSpec&) = default;
};

/// Pixels stored row-major over (row, column, channel).
struct Image {
  ImageSpec spec;
  std::vector<double> pixels;

  double& at(std::size_t row, std::size_t col, std::size_t ch) noexcept {
    return pixels[(row * spec.width + col) * spec.channels + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const noexcept {
    return pixels[(row * spec.width + col) * spec.channels + ch];
  }

  /// Shape error on size mismatch; validation error on non-finite pixels.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;
};

enum class DeeperWeights { unit_normal, fan_in_scaled };

/// Distribution the secret key is drawn from. Every entry is Normal(0, ·).
///
/// The first patch layer uses `first_layer_std`. Later patch layers and the
/// final projection either use unit variance or variance `deeper_gain /
/// fan_in`; the latter keeps the latent scale independent of depth, which is
/// what leaves the positional encoding visible in the output.
struct KeyDistribution {
  double first_layer_std = 1.0;
  DeeperWeights deeper = DeeperWeights::fan_in_scaled;
  double deeper_gain = 2.0;
  double bias_std = 1.0;
  double positional_std = 1.0;

  /// Every weight and bias i.i.d. Normal(0, 1).
  static KeyDistribution unit_normal() {
    return {1.0, DeeperWeights::unit_normal, 1.0, 1.0, 1.0};
  }

  friend bool operator==(const KeyDistribution&, const KeyDistribution&) = default;
};

/// All parameters of one encoding transform T.
struct EncoderKey {
  ImageSpec spec;
  MlpParams patch_mlp;    // f_1 .. f_k with ReLU between
  Matrix2D positional;    // a^2 rows of width d
  DenseLayer projection;  // f_{k+1}: d -> d_out
  SeedLineage lineage;

  void validate() const;

  friend bool operator==(const EncoderKey&, const EncoderKey&) = default;
};

/// a^2 encoded patch rows of width d_out, in post-permutation order.
struct EncodedImage {
  Matrix2D rows;

  friend bool operator==(const EncodedImage&, const EncodedImage&) = default;
};

struct EncodingResult {
  EncodedImage encoded;
  Permutation permutation;  // output row permutation[i] holds patch i
};

EncoderKey sample_key(const ImageSpec& spec, std::uint64_t seed, const KeyDistribution& dist = {});

/// Rows are patches in row-major grid order; each patch is flattened
/// row-major over (row, column, channel).
Matrix2D patchify(const Image& image);
Image unpatchify(const ImageSpec& spec, const Matrix2D& patches);

/// Latent of one flattened patch: the patch network alone.
std::vector<double> encode_patch(const EncoderKey& key, std::span<const double> patch);

/// Pre-permutation encoding: row i is A_{k+1} ReLU(z_i + delta_i) + b_{k+1}.
Matrix2D encode_unpermuted(const EncoderKey& key, const Image& image);

/// Same for a stack of patches whose row r sits at grid position r % a^2.
Matrix2D encode_patch_rows(const EncoderKey& key, const Matrix2D& patch_rows);

Matrix2D apply_row_permutation(const Matrix2D& rows, const Permutation& perm);

EncodedImage encode_image(const EncoderKey& key, const Image& image, const Permutation& perm);

/// Draws a fresh uniform patch permutation from `perm_seed`.
EncodingResult encode_image(const EncoderKey& key, const Image& image, std::uint64_t perm_seed);

/// Image i uses derive_seed(perm_seed, i); serial and parallel runs agree.
std::vector<EncodingResult> encode_dataset(const EncoderKey& key, std::span<const Image> images,
                                           std::uint64_t perm_seed, unsigned threads = 1);

void save_key(const EncoderKey& key, const std::filesystem::path& dir, const std::string& stem);
EncoderKey load_key(const std::filesystem::path& dir, const std::string& stem);

/// `<stem>.json` manifest (spec, count, seeds_withheld) + `<stem>.bin` of
/// shape N x a^2 x d_out.
void save_encodings(std::span<const EncodedImage> encodings, const ImageSpec& spec,
                    const std::filesystem::path& dir, const std::string& stem, bool seeds_withheld);
std::vector<EncodedImage> load_encodings(const std::filesystem::path& dir, const std::string& stem,
                                         ImageSpec* spec = nullptr);

/// `<stem>.json` + `<stem>.bin` of shape N x h x w x c.
void save_images(std::span<const Image> images, const ImageSpec& spec, const std::filesystem::path& dir,
                 const std::string& stem);
std::vector<Image> load_images(const std::filesystem::path& dir, const std::string& stem,
                               ImageSpec* spec = nullptr);

}  // namespace encattack
