#include "encattack/challenge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "encattack/error.hpp"
#include "schema.hpp"
#include "tensor_store.hpp"

namespace encattack {

void ChallengeBundle::validate() const {
  spec.validate();
  require(originals.size() == encodings.size(), ErrorKind::shape,
          "bundle has " + std::to_string(originals.size()) + " originals but " +
              std::to_string(encodings.size()) + " encodings");
  for (const auto& img : originals) {
    require(img.spec == spec, ErrorKind::shape, "bundle original does not match the bundle spec");
    img.validate();
  }
  for (const auto& e : encodings) {
    require(e.rows.rows == spec.patch_count() && e.rows.cols == spec.output_width, ErrorKind::shape,
            "bundle encoding does not match the bundle spec");
  }
}

std::pair<ChallengeBundle, HiddenSolution> make_challenge(std::span<const Image> dataset, std::size_t n,
                                                          const ChallengeSeeds& seeds,
                                                          const KeyDistribution& dist, unsigned threads) {
  require(n >= 1, ErrorKind::configuration, "challenge size must be at least 1");
  require(n <= dataset.size(), ErrorKind::configuration,
          "challenge size " + std::to_string(n) + " exceeds dataset size " + std::to_string(dataset.size()));
  const ImageSpec spec = dataset.front().spec;
  for (const auto& img : dataset) require(img.spec == spec, ErrorKind::shape, "dataset images differ in spec");

  Rng pick_rng = Rng(seeds.sigma_seed).split(0);
  Rng sigma_rng = Rng(seeds.sigma_seed).split(1);
  const Permutation order = Permutation::random(dataset.size(), pick_rng);

  HiddenSolution sol;
  sol.seeds = seeds;
  sol.key = sample_key(spec, seeds.key_seed, dist);
  sol.sigma = Permutation::random(n, sigma_rng);
  sol.dataset_indices.assign(order.indices().begin(), order.indices().begin() + static_cast<std::ptrdiff_t>(n));

  ChallengeBundle bundle;
  bundle.spec = spec;
  for (const std::size_t idx : sol.dataset_indices) bundle.originals.push_back(dataset[idx]);
  auto encoded = encode_dataset(sol.key, bundle.originals, seeds.perm_seed, threads);
  bundle.encodings.resize(n);
  sol.patch_perms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    bundle.encodings[sol.sigma[i]] = std::move(encoded[i].encoded);
    sol.patch_perms[i] = std::move(encoded[i].permutation);
  }
  return {std::move(bundle), std::move(sol)};
}

ScoreReport score_matching(std::span<const std::size_t> guess, const Permutation& sigma) {
  require(guess.size() == sigma.size(), ErrorKind::validation,
          "guess has " + std::to_string(guess.size()) + " entries, expected " + std::to_string(sigma.size()));
  require(is_bijection(guess), ErrorKind::validation, "guess is not a permutation of 0..N-1");
  ScoreReport r;
  r.n = guess.size();
  r.correct.resize(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    r.correct[i] = guess[i] == sigma[i];
    r.score += r.correct[i] ? 1 : 0;
  }
  return r;
}

ScoreReport score_matching(std::span<const std::size_t> guess, const HiddenSolution& solution) {
  return score_matching(guess, solution.sigma);
}

std::string to_string(Distance d) { return d == Distance::hamming ? "hamming" : "euclidean"; }

Distance distance_from_string(const std::string& s) {
  if (s == "hamming") return Distance::hamming;
  if (s == "euclidean") return Distance::euclidean;
  fail(ErrorKind::configuration, "unknown distance '" + s + "' (expected hamming or euclidean)");
}

ScoreReport score_challenge2(std::span<const std::vector<double>> truth,
                             std::span<const std::vector<double>> guessed, Distance metric) {
  require(!truth.empty(), ErrorKind::validation, "challenge-2 scoring needs at least one instance");
  require(truth.size() == guessed.size(), ErrorKind::validation, "true and guessed encodings differ in count");
  const std::size_t width = truth.front().size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i].size() == width && guessed[i].size() == width, ErrorKind::shape,
            "challenge-2 encodings differ in width");
  }
  auto distance = [metric](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      if (metric == Distance::hamming) {
        d += a[t] != b[t] ? 1.0 : 0.0;
      } else {
        d += (a[t] - b[t]) * (a[t] - b[t]);
      }
    }
    return d;
  };
  ScoreReport r;
  r.n = truth.size();
  r.correct.resize(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < r.n; ++j) {
      const double d = distance(guessed[j], truth[i]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    r.correct[i] = best == i;
    r.score += r.correct[i] ? 1 : 0;
  }
  return r;
}

void save_bundle(const ChallengeBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  save_images(bundle.originals, bundle.spec, dir, "originals");
  save_encodings(bundle.encodings, bundle.spec, dir, "encodings", true);
}

ChallengeBundle load_bundle(const std::filesystem::path& dir) {
  ChallengeBundle b;
  ImageSpec enc_spec;
  b.originals = load_images(dir, "originals", &b.spec);
  b.encodings = load_encodings(dir, "encodings", &enc_spec);
  require(enc_spec == b.spec, ErrorKind::schema, "originals and encodings manifests disagree on the image spec");
  b.validate();
  return b;
}

void save_solution(const HiddenSolution& solution, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::TensorWriter w;
  detail::json key = detail::key_manifest(solution.key, w);
  detail::json perms = detail::json::array();
  for (const auto& p : solution.patch_perms) perms.push_back(detail::to_json(p));
  const detail::json manifest = {
      {"format", "encattack.solution/1"},
      {"sigma", detail::to_json(solution.sigma)},
      {"patch_perms", perms},
      {"dataset_indices", solution.dataset_indices},
      {"seeds",
       {{"key_seed", solution.seeds.key_seed},
        {"sigma_seed", solution.seeds.sigma_seed},
        {"perm_seed", solution.seeds.perm_seed}}},
      {"key", key},
      {"blob", "solution.bin"},
      {"dtype", "f64le"},
      {"tensors", w.entries()},
  };
  w.write_blob(dir / "solution.bin");
  detail::write_json_file(dir / "solution.json", manifest);
}

HiddenSolution load_solution(const std::filesystem::path& dir) {
  const auto path = dir / "solution.json";
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  require(detail::field<std::string>(m, "format", where) == "encattack.solution/1", ErrorKind::schema,
          where + ": unsupported solution format");
  HiddenSolution s;
  s.sigma = detail::permutation_from_json(m.at("sigma"), where);
  for (const auto& p : m.at("patch_perms")) s.patch_perms.push_back(detail::permutation_from_json(p, where));
  s.dataset_indices = detail::field<std::vector<std::size_t>>(m, "dataset_indices", where);
  const auto& seeds = m.at("seeds");
  s.seeds = {detail::field<std::uint64_t>(seeds, "key_seed", where),
             detail::field<std::uint64_t>(seeds, "sigma_seed", where),
             detail::field<std::uint64_t>(seeds, "perm_seed", where)};
  const detail::TensorReader r(dir / detail::field<std::string>(m, "blob", where), m.at("tensors"));
  s.key = detail::key_from_manifest(m.at("key"), r, where);
  require(s.patch_perms.size() == s.sigma.size(), ErrorKind::schema, where + ": one patch permutation per image");
  return s;
}

void save_guess(std::span<const std::size_t> guess, const std::filesystem::path& path) {
  detail::write_json_file(path, {{"format", "encattack.guess/1"},
                                 {"guess", std::vector<std::size_t>(guess.begin(), guess.end())}});
}

std::vector<std::size_t> load_guess(const std::filesystem::path& path) {
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  return detail::field<std::vector<std::size_t>>(m, "guess", where);
}

void save_score_report(const ScoreReport& report, const std::filesystem::path& path) {
  detail::write_json_file(path, {{"format", "encattack.score/1"},
                                 {"score", report.score},
                                 {"n", report.n},
                                 {"correct", report.correct}});
}

}  // namespace encattack
