#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "encattack/encoder.hpp"
#include "encattack/nn.hpp"

namespace encattack {

struct MomentConfig {
  std::size_t max_order = 4;  // K

  /// Configuration error unless K >= 2.
  void validate() const;
  std::size_t feature_length() const noexcept { return max_order; }
};

/// [mu_0, mu_2, ..., mu_K] where mu_0 is the mean and mu_k the k-th central
/// moment. mu_1 is always zero and left out.
std::vector<double> moment_features(std::span<const double> v, const MomentConfig& cfg);

/// Row-wise moment features passed through sign(m) * log(1 + |m|).
Matrix2D log_moment_rows(const Matrix2D& rows, const MomentConfig& cfg);

/// Per-column standardization.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static FeatureScaler fit(const Matrix2D& features);
  void apply(Matrix2D& features) const;
};

/// Reference frame for standardizing encoded-side features.
///   per_set: one mean/scale over every encoded row of one key
///   per_position: one mean/scale per patch position over the images of one
///     key; needs rows in a consistent position frame
enum class EncodedNorm { per_set, per_position };

std::string to_string(EncodedNorm n);
EncodedNorm encoded_norm_from_string(const std::string& s);

/// Encoded rows of one key, stacked as images x positions, to standardized
/// log-moment features.
Matrix2D encoded_features(const Matrix2D& rows, std::size_t positions, EncodedNorm norm, const MomentConfig& cfg);

/// The learned patch similarity: score = <n_x(feat(x)), n_y(feat(y))>.
/// Higher means more likely to be a matching (patch, encoding) pair.
struct SimilarityModel {
  MomentConfig moments;
  MlpParams n_x;
  MlpParams n_y;
  FeatureScaler raw_scaler;  // fitted on the training patches
  EncodedNorm encoded_norm = EncodedNorm::per_set;
  double threshold = 0.0;    // score cut with the best calibration balanced accuracy
  double heldout_balanced_accuracy = 0.5;
  double final_loss = 0.0;

  std::size_t embedding_width() const { return n_x.output_width(); }
  void validate() const;
};

/// Same pair structure for both training and held-out evaluation.
struct PairDatasetConfig {
  std::size_t num_encoders = 64;
  std::size_t images_per_encoder = 32;  // 0 = every image
  KeyDistribution key_distribution;
};

/// Pairs from attacker-sampled keys, stored group by group. Group g holds
/// `images_per_group` images x a^2 positions; row r of the group is patch
/// r % a^2 of image r / a^2, next to its pre-permutation encoding.
struct PairDataset {
  ImageSpec spec;
  Matrix2D raw;
  Matrix2D encoded;
  std::vector<std::size_t> group;
  std::vector<std::size_t> position;
  std::vector<std::size_t> image;
  std::size_t groups = 0;
  std::size_t images_per_group = 0;

  std::size_t size() const noexcept { return raw.rows; }
  std::size_t group_rows() const noexcept { return images_per_group * spec.patch_count(); }
};

PairDataset build_pair_dataset(std::span<const Image> images, const ImageSpec& spec, const PairDatasetConfig& cfg,
                               std::uint64_t seed);

/// Same, with the attacker keys given explicitly.
PairDataset build_pair_dataset(std::span<const Image> images, std::span<const EncoderKey> keys,
                               std::size_t images_per_encoder, std::uint64_t seed);

struct SimTrainConfig {
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t embedding_width = 32;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  AdamConfig adam;
  PairDatasetConfig heldout{24, 32, {}};
  std::size_t heldout_pairs = 10000;
};

/// Untrained nets with the training layout.
SimilarityModel init_similarity(const MomentConfig& moments, const SimTrainConfig& cfg, EncodedNorm norm,
                                std::uint64_t seed);

/// Contrastive softmax training. Each batch draws B pairs from one group;
/// the loss is -(1/B) sum_i log softmax_j(s_ij)[i]. The raw-side scaler is
/// fitted on `pairs`. Training error when the loss becomes non-finite.
SimilarityModel train_patch_sim(const PairDataset& pairs, const SimTrainConfig& cfg, EncodedNorm norm,
                                std::uint64_t seed, const MomentConfig& moments = {});

/// Loss of one batch of already-standardized features, for diagnostics.
double contrastive_loss(const SimilarityModel& model, const Matrix2D& raw_features, const Matrix2D& enc_features);

/// Scores of positive and negative pairs drawn from held-out groups.
/// Negatives pair a patch with another row of the same group.
struct PairScores {
  std::vector<double> positive;
  std::vector<double> negative;
};

PairScores score_pairs(const SimilarityModel& model, const PairDataset& pairs, std::size_t count,
                       std::uint64_t seed);

/// Best balanced accuracy over thresholds, and the threshold attaining it.
std::pair<double, double> best_threshold(const PairScores& scores);
double balanced_accuracy(const PairScores& scores, double threshold);

/// Fits the threshold on one held-out dataset and records balanced accuracy
/// on another.
void calibrate(SimilarityModel& model, const PairDataset& calibration, const PairDataset& evaluation,
               std::size_t pairs, std::uint64_t seed);

/// Builds training, calibration and evaluation pair sets from disjoint
/// attacker keys, trains, and calibrates.
SimilarityModel learn_patch_similarity(std::span<const Image> images, const ImageSpec& spec,
                                       const PairDatasetConfig& train_pairs, const SimTrainConfig& cfg,
                                       EncodedNorm norm, std::uint64_t seed, const MomentConfig& moments = {});

/// Embeddings, one row per patch.
Matrix2D embed_raw(const SimilarityModel& model, const Matrix2D& patch_rows);
Matrix2D embed_encoded(const SimilarityModel& model, const Matrix2D& encoded_rows, std::size_t positions);

/// Single pair score. `context` is the set of encoded rows the encoded patch
/// is standardized against (its own key's rows, in a consistent frame for
/// per-position models); `row` indexes the patch inside it.
double p_sim(const SimilarityModel& model, std::span<const double> raw_patch, const Matrix2D& context,
             std::size_t row, std::size_t positions);

void save_similarity(const SimilarityModel& model, const std::filesystem::path& dir, const std::string& stem);
SimilarityModel load_similarity(const std::filesystem::path& dir, const std::string& stem);

}  // namespace encattack
