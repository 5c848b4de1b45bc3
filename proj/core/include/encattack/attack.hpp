#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "encattack/challenge.hpp"
#include "encattack/extraction.hpp"
#include "encattack/matching.hpp"
#include "encattack/similarity.hpp"

namespace encattack {

/// Per-image embeddings, one a^2 x e matrix per image.
using EmbeddingSet = std::vector<Matrix2D>;

EmbeddingSet embed_originals(const SimilarityModel& model, std::span<const Image> originals);

/// Embeds all encodings together, so per-set statistics span the bundle.
/// For per-position models the rows of each encoding must already share one
/// position frame.
EmbeddingSet embed_encodings(const SimilarityModel& model, std::span<const Matrix2D> encodings);

struct ImageSim {
  double score = 0.0;  // mean matched patch similarity
  Permutation rho;     // rho[p] = encoded row assigned to patch p
};

/// max over rho of the mean of p-sim(x patch p, y row rho[p]).
ImageSim i_sim(const Matrix2D& raw_embedding, const Matrix2D& encoded_embedding);

/// All-pairs i_sim scores; entry (i, j) compares original i with encoding j.
/// The result does not depend on `threads`.
Matrix2D i_sim_matrix(const EmbeddingSet& raw, const EmbeddingSet& encoded, unsigned threads = 1);

/// Max-similarity assignment on an all-pairs score matrix; m[i] = encoding
/// index guessed for original i.
Permutation initial_matching(const Matrix2D& isim);

struct AlignmentConfig {
  std::size_t pca_components = 4;  // leading principal directions removed before alignment
  std::size_t template_rounds = 3; // re-alignments against the mean aligned image
};

/// Local permutations relative to encoding `ref`: result[j][v] is the
/// reference row that y_j row v is aligned with, found by maximizing summed
/// inner products. result[ref] is the identity.
std::vector<Permutation> recover_local_perms(std::span<const Matrix2D> encodings, std::size_t ref,
                                             const AlignmentConfig& cfg = {});

/// Rows of every encoding reordered into the reference frame.
std::vector<Matrix2D> align_encodings(std::span<const Matrix2D> encodings, std::span<const Permutation> local);

struct GlobalPerm {
  Permutation rho;      // rho[p] = reference row holding original position p
  double score = 0.0;   // summed similarity of the chosen assignment
};

/// Sums the p-sim matrices of (x_i, aligned y_{m[i]}) over i and solves one
/// assignment over patch positions.
GlobalPerm recover_global_perm(const EmbeddingSet& raw, const EmbeddingSet& aligned, const Permutation& m);

/// Correlation between patch positions, pooled over images and embedding
/// coordinates. P x P with unit diagonal.
Matrix2D position_correlation(const EmbeddingSet& e);

struct StructureConfig {
  std::size_t restarts = 20;  // annealing starts; 0 skips the structure search
  std::size_t steps = 20000;  // swap proposals per start
};

/// rho maximizing the sum over p != q of raw_corr(p, q) * aligned_corr(rho[p], rho[q]),
/// by simulated annealing over swaps. Deterministic in `seed`.
GlobalPerm match_position_structure(const Matrix2D& raw_corr, const Matrix2D& aligned_corr,
                                    const StructureConfig& cfg, std::uint64_t seed);

/// The eight symmetries of a side x side grid applied on the raw side:
/// result[g][p] = rho[g(p)]. result[0] is rho.
std::vector<Permutation> grid_symmetries(const Permutation& rho, std::size_t side);

/// Max-similarity matching with i-sim evaluated at the fixed rho.
Permutation refine_matching(const EmbeddingSet& raw, const EmbeddingSet& aligned, const Permutation& rho);

struct StageRecord {
  std::string stage;
  double seconds = 0.0;
  double objective = 0.0;  // the stage's own assignment value; no oracle
  std::vector<std::size_t> matching;  // empty for stages without one
  std::optional<std::size_t> score;   // filled only by score_stages
};

struct AttackState {
  Permutation matching;
  std::vector<Permutation> local_perms;
  Permutation global_perm;
  std::optional<EncoderKey> extracted;
  std::vector<StageRecord> log;
};

/// Alternates recover_global_perm and refine_matching until the matching is
/// unchanged or `max_rounds` rounds ran. `state.matching` must be set.
/// Returns the number of rounds run.
std::size_t boost_loop(const EmbeddingSet& raw, const EmbeddingSet& aligned, AttackState& state,
                       std::size_t max_rounds);

/// Min-cost matching with cost(i, j) = mean squared distance between the
/// extracted encoding of x_i and the de-permuted y_j.
Permutation final_matching(const EncoderKey& extracted, std::span<const Image> originals,
                           std::span<const EncodedImage> encodings, std::span<const Permutation> local_perms,
                           const Permutation& rho);

struct AttackConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  MomentConfig moments;
  PairDatasetConfig pairs;
  SimTrainConfig similarity;
  bool aligned_model = true;  // second model on position-standardized features
  std::size_t reference_index = 0;
  AlignmentConfig alignment;
  StructureConfig structure;  // extra boost starts from position correlations
  std::size_t boost_rounds = 5;
  bool extraction = true;
  ExtractionConfig extraction_config;
  std::optional<std::filesystem::path> csv_dir;  // per-stage cost-matrix dumps
};

/// Missing fields keep their defaults; unknown fields are a schema error.
AttackConfig attack_config_from_json_text(const std::string& text, const std::string& where);
std::string attack_config_to_json_text(const AttackConfig& cfg);

struct AttackReport {
  std::size_t n = 0;
  std::vector<std::size_t> guess;
  std::vector<StageRecord> stages;
  std::size_t boost_rounds_run = 0;
  double similarity_heldout_accuracy = 0.0;
  double aligned_heldout_accuracy = 0.0;
  double total_seconds = 0.0;
  AttackConfig config;
};

struct AttackResult {
  AttackState state;
  AttackReport report;
  SimilarityModel model;
  std::optional<SimilarityModel> aligned_model;
  Matrix2D isim;
};

/// Runs every stage on a bundle. Never touches solution material. Errors
/// from a stage are rethrown with the stage name prefixed.
AttackResult run_attack(const ChallengeBundle& bundle, const AttackConfig& cfg);

/// Fills each stage's score from the solution, for reports made after the fact.
void score_stages(AttackReport& report, const Permutation& sigma);

/// Everything except wall-clock times, so equal seeds give equal bytes.
void save_attack_report(const AttackReport& report, const std::filesystem::path& path);

/// Per-stage and total seconds.
void save_attack_timings(const AttackReport& report, const std::filesystem::path& path);

}  // namespace encattack
