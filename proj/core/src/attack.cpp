#include "encattack/attack.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "encattack/error.hpp"
#include "encattack/parallel.hpp"
#include "encattack/rng.hpp"
#include "schema.hpp"
#include "tensor_store.hpp"

namespace encattack {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

ConstMatMap view(const Matrix2D& m) {
  return ConstMatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}
MatMap view(Matrix2D& m) {
  return MatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}

Matrix2D stack(std::span<const Matrix2D> parts) {
  require(!parts.empty(), ErrorKind::shape, "nothing to stack");
  const std::size_t rows = parts.front().rows;
  const std::size_t cols = parts.front().cols;
  Matrix2D out(parts.size() * rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(parts[i].rows == rows && parts[i].cols == cols, ErrorKind::shape, "stacked matrices differ in shape");
    std::copy(parts[i].data.begin(), parts[i].data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * rows * cols));
  }
  return out;
}

EmbeddingSet unstack(const Matrix2D& all, std::size_t per) {
  EmbeddingSet out(all.rows / per);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Matrix2D(per, all.cols);
    std::copy(all.data.begin() + static_cast<std::ptrdiff_t>(i * per * all.cols),
              all.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per * all.cols), out[i].data.begin());
  }
  return out;
}

Matrix2D product_transposed(const Matrix2D& a, const Matrix2D& b) {
  Matrix2D out(a.rows, b.rows);
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix2D permute_rows(const Matrix2D& m, const std::vector<std::size_t>& take) {
  Matrix2D out(take.size(), m.cols);
  for (std::size_t r = 0; r < take.size(); ++r) {
    const auto src = m.row(take[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void check_embeddings(const EmbeddingSet& raw, const EmbeddingSet& enc) {
  require(!raw.empty() && raw.size() == enc.size(), ErrorKind::shape, "embedding sets differ in size");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    require(raw[i].rows == raw.front().rows && enc[i].rows == raw.front().rows && raw[i].cols == enc[i].cols,
            ErrorKind::shape, "embedding shapes are inconsistent");
  }
}

std::vector<Matrix2D> encoding_rows(std::span<const EncodedImage> encodings) {
  std::vector<Matrix2D> out;
  out.reserve(encodings.size());
  for (const auto& e : encodings) out.push_back(e.rows);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EmbeddingSet embed_originals(const SimilarityModel& model, std::span<const Image> originals) {
  require(!originals.empty(), ErrorKind::shape, "no originals to embed");
  std::vector<Matrix2D> patches;
  patches.reserve(originals.size());
  for (const auto& img : originals) patches.push_back(patchify(img));
  return unstack(embed_raw(model, stack(patches)), originals.front().spec.patch_count());
}

EmbeddingSet embed_encodings(const SimilarityModel& model, std::span<const Matrix2D> encodings) {
  require(!encodings.empty(), ErrorKind::shape, "no encodings to embed");
  const std::size_t positions = encodings.front().rows;
  return unstack(embed_encoded(model, stack(encodings), positions), positions);
}

ImageSim i_sim(const Matrix2D& raw_embedding, const Matrix2D& encoded_embedding) {
  require(raw_embedding.rows == encoded_embedding.rows && raw_embedding.cols == encoded_embedding.cols,
          ErrorKind::shape, "i_sim embeddings differ in shape");
  const Assignment a = solve_max_assignment(product_transposed(raw_embedding, encoded_embedding));
  return {a.total_cost / static_cast<double>(raw_embedding.rows), a.as_permutation()};
}

Matrix2D i_sim_matrix(const EmbeddingSet& raw, const EmbeddingSet& encoded, unsigned threads) {
  check_embeddings(raw, encoded);
  const std::size_t n = raw.size();
  Matrix2D out(n, n);
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = i_sim(raw[i], encoded[j]).score;
  });
  return out;
}

Permutation initial_matching(const Matrix2D& isim) {
  require(isim.rows == isim.cols && isim.rows > 0, ErrorKind::shape, "matching needs a square score matrix");
  return solve_max_assignment(isim).as_permutation();
}

std::vector<Permutation> recover_local_perms(std::span<const Matrix2D> encodings, std::size_t ref,
                                             const AlignmentConfig& cfg) {
  require(!encodings.empty(), ErrorKind::shape, "no encodings to align");
  require(ref < encodings.size(), ErrorKind::configuration, "reference index outside the bundle");
  const std::size_t n = encodings.size();
  const std::size_t positions = encodings.front().rows;
  const std::size_t width = encodings.front().cols;
  require(cfg.pca_components < width, ErrorKind::configuration, "cannot remove every principal direction");

  std::vector<Matrix2D> z(encodings.begin(), encodings.end());
  if (cfg.pca_components > 0) {
    const Matrix2D all = stack(encodings);
    const Eigen::RowVectorXd mean = view(all).colwise().mean();
    const RowMat centered = view(all).rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(all.rows);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::MatrixXd top = eig.eigenvectors().rightCols(static_cast<Eigen::Index>(cfg.pca_components));
    const Eigen::MatrixXd proj =
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width)) -
        top * top.transpose();
    for (auto& m : z) view(m) = (view(m).rowwise() - mean) * proj;
  }

  // align[j][u] = row of encoding j matched to template row u.
  auto align_to = [&](const Matrix2D& tmpl) {
    std::vector<std::vector<std::size_t>> align(n);
    for (std::size_t j = 0; j < n; ++j) align[j] = solve_max_assignment(product_transposed(tmpl, z[j])).mapping;
    return align;
  };
  auto align = align_to(z[ref]);
  for (std::size_t round = 0; round < cfg.template_rounds; ++round) {
    Matrix2D tmpl(positions, width);
    for (std::size_t j = 0; j < n; ++j) view(tmpl) += view(permute_rows(z[j], align[j]));
    view(tmpl) /= static_cast<double>(n);
    align = align_to(tmpl);
  }

  // Re-express every alignment in the reference encoding's own row order.
  std::vector<std::size_t> tmpl_of_ref_row(positions);
  for (std::size_t u = 0; u < positions; ++u) tmpl_of_ref_row[align[ref][u]] = u;
  std::vector<Permutation> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::size_t> to_ref(positions);
    for (std::size_t r = 0; r < positions; ++r) to_ref[align[j][tmpl_of_ref_row[r]]] = r;
    out.push_back(Permutation::from_indices(std::move(to_ref)));
  }
  return out;
}

std::vector<Matrix2D> align_encodings(std::span<const Matrix2D> encodings, std::span<const Permutation> local) {
  require(encodings.size() == local.size(), ErrorKind::shape, "one local permutation per encoding");
  std::vector<Matrix2D> out;
  out.reserve(encodings.size());
  for (std::size_t j = 0; j < encodings.size(); ++j) {
    out.push_back(permute_rows(encodings[j], local[j].inverse().indices()));
  }
  return out;
}

GlobalPerm recover_global_perm(const EmbeddingSet& raw, const EmbeddingSet& aligned, const Permutation& m) {
  check_embeddings(raw, aligned);
  require(m.size() == raw.size(), ErrorKind::shape, "matching size differs from the bundle");
  const std::size_t positions = raw.front().rows;
  Matrix2D sum(positions, positions);
  for (std::size_t i = 0; i < raw.size(); ++i) view(sum) += view(raw[i]) * view(aligned[m[i]]).transpose();
  const Assignment a = solve_max_assignment(sum);
  return {a.as_permutation(), a.total_cost};
}

namespace {

// Entry (i, j) = mean over positions p of <raw_i[p], aligned_j[rho[p]]>.
Matrix2D fixed_rho_scores(const EmbeddingSet& raw, const EmbeddingSet& aligned, const Permutation& rho) {
  check_embeddings(raw, aligned);
  const std::size_t positions = raw.front().rows;
  require(rho.size() == positions, ErrorKind::shape, "rho size differs from the patch count");
  const std::size_t flat = positions * raw.front().cols;
  Matrix2D xs(raw.size(), flat), ys(aligned.size(), flat);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::copy(raw[i].data.begin(), raw[i].data.end(), xs.row(i).begin());
    const Matrix2D y = permute_rows(aligned[i], rho.indices());
    std::copy(y.data.begin(), y.data.end(), ys.row(i).begin());
  }
  Matrix2D out = product_transposed(xs, ys);
  view(out) /= static_cast<double>(positions);
  return out;
}

}  // namespace

Permutation refine_matching(const EmbeddingSet& raw, const EmbeddingSet& aligned, const Permutation& rho) {
  return solve_max_assignment(fixed_rho_scores(raw, aligned, rho)).as_permutation();
}

Matrix2D position_correlation(const EmbeddingSet& e) {
  require(!e.empty(), ErrorKind::shape, "position correlation needs embeddings");
  const std::size_t positions = e.front().rows;
  const std::size_t width = e.front().cols;
  RowMat mean = RowMat::Zero(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(width));
  for (const auto& m : e) {
    require(m.rows == positions && m.cols == width, ErrorKind::shape, "embeddings differ in shape");
    mean += view(m);
  }
  mean /= static_cast<double>(e.size());
  RowMat cov = RowMat::Zero(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(positions));
  for (const auto& m : e) {
    const RowMat c = view(m) - mean;
    cov.noalias() += c * c.transpose();
  }
  Matrix2D out(positions, positions);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t q = 0; q < positions; ++q) {
      const double d = std::sqrt(cov(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) *
                                 cov(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q)));
      out(p, q) = d > 0.0 ? cov(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) / d : (p == q ? 1.0 : 0.0);
    }
  }
  return out;
}

GlobalPerm match_position_structure(const Matrix2D& raw_corr, const Matrix2D& aligned_corr,
                                    const StructureConfig& cfg, std::uint64_t seed) {
  const std::size_t n = raw_corr.rows;
  require(raw_corr.cols == n && aligned_corr.rows == n && aligned_corr.cols == n && n > 0, ErrorKind::shape,
          "correlation matrices must be square and equal in size");
  const auto objective = [&](const std::vector<std::size_t>& rho) {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (p != q) s += raw_corr(p, q) * aligned_corr(rho[p], rho[q]);
    return s;
  };
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  GlobalPerm best{Permutation::identity(n), objective(identity)};
  if (n < 2) return best;
  Rng rng(seed);
  constexpr double kStartTemp = 0.05;
  constexpr double kCooling = 2e-4;  // final temperature as a fraction of the start
  for (std::size_t start = 0; start < cfg.restarts; ++start) {
    std::vector<std::size_t> rho = Permutation::random(n, rng).indices();
    double cur = objective(rho);
    if (cur > best.score) best = {Permutation::from_indices(rho), cur};
    for (std::size_t it = 0; it < cfg.steps; ++it) {
      const std::size_t a = rng.below(n);
      const std::size_t b = rng.below(n);
      if (a == b) continue;
      // Only pairs touching a or b change; the (a, b) term is symmetric.
      double delta = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        if (q == a || q == b) continue;
        delta += (raw_corr(a, q) - raw_corr(b, q)) * (aligned_corr(rho[b], rho[q]) - aligned_corr(rho[a], rho[q]));
        delta += (raw_corr(q, a) - raw_corr(q, b)) * (aligned_corr(rho[q], rho[b]) - aligned_corr(rho[q], rho[a]));
      }
      const double temp =
          kStartTemp * std::pow(kCooling, static_cast<double>(it) / static_cast<double>(cfg.steps));
      if (delta >= 0.0 || rng.uniform() < std::exp(delta / temp)) {
        std::swap(rho[a], rho[b]);
        cur += delta;
        if (cur > best.score + 1e-12) best = {Permutation::from_indices(rho), cur};
      }
    }
  }
  best.score = objective(best.rho.indices());
  return best;
}

std::vector<Permutation> grid_symmetries(const Permutation& rho, std::size_t side) {
  require(side * side == rho.size(), ErrorKind::shape, "permutation does not cover the grid");
  std::vector<Permutation> out;
  out.reserve(8);
  for (unsigned g = 0; g < 8; ++g) {
    std::vector<std::size_t> idx(rho.size());
    for (std::size_t p = 0; p < rho.size(); ++p) {
      std::size_t y = p / side;
      std::size_t x = p % side;
      if (g & 1U) x = side - 1 - x;
      if (g & 2U) y = side - 1 - y;
      if (g & 4U) std::swap(x, y);
      idx[p] = rho[y * side + x];
    }
    out.push_back(Permutation::from_indices(idx));
  }
  return out;
}

std::size_t boost_loop(const EmbeddingSet& raw, const EmbeddingSet& aligned, AttackState& state,
                       std::size_t max_rounds) {
  require(state.matching.size() == raw.size(), ErrorKind::shape, "boost needs an initial matching");
  std::size_t rounds = 0;
  bool stable = false;
  while (rounds < max_rounds && !stable) {
    const auto t0 = std::chrono::steady_clock::now();
    const GlobalPerm g = recover_global_perm(raw, aligned, state.matching);
    const Matrix2D scores = fixed_rho_scores(raw, aligned, g.rho);
    const Assignment a = solve_max_assignment(scores);
    Permutation next = a.as_permutation();
    stable = next == state.matching;
    state.global_perm = g.rho;
    state.matching = std::move(next);
    ++rounds;
    state.log.push_back({"boost_round_" + std::to_string(rounds), seconds_since(t0), a.total_cost,
                         state.matching.indices(), std::nullopt});
  }
  if (!stable && rounds > 0) state.global_perm = recover_global_perm(raw, aligned, state.matching).rho;
  return rounds;
}

Permutation final_matching(const EncoderKey& extracted, std::span<const Image> originals,
                           std::span<const EncodedImage> encodings, std::span<const Permutation> local_perms,
                           const Permutation& rho) {
  require(originals.size() == encodings.size() && local_perms.size() == encodings.size() && !originals.empty(),
          ErrorKind::shape, "final matching inputs differ in length");
  const std::size_t n = originals.size();
  const std::size_t flat = extracted.spec.patch_count() * extracted.spec.output_width;
  Matrix2D pred(n, flat), targ(n, flat);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix2D p = encode_unpermuted(extracted, originals[i]);
    std::copy(p.data.begin(), p.data.end(), pred.row(i).begin());
    const Matrix2D t = depermute(encodings[i], local_perms[i], rho);
    std::copy(t.data.begin(), t.data.end(), targ.row(i).begin());
  }
  // ||a - b||^2 = ||a||^2 + ||b||^2 - 2 <a, b>, divided by the entry count.
  Matrix2D cost = product_transposed(pred, targ);
  const Eigen::VectorXd pn = view(pred).rowwise().squaredNorm();
  const Eigen::VectorXd tn = view(targ).rowwise().squaredNorm();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost(i, j) = (pn(static_cast<Eigen::Index>(i)) + tn(static_cast<Eigen::Index>(j)) - 2.0 * cost(i, j)) /
                   static_cast<double>(flat);
    }
  }
  return solve_assignment(cost).as_permutation();
}

namespace {

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + name + "': " + e.what());
  }
}

void maybe_dump(const AttackConfig& cfg, const std::string& file, const Matrix2D& m) {
  if (cfg.csv_dir) dump_csv(m, *cfg.csv_dir / file);
}

}  // namespace

AttackResult run_attack(const ChallengeBundle& bundle, const AttackConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  run_stage("validate", [&] { bundle.validate(); });
  const std::size_t n = bundle.size();
  require(n >= 1, ErrorKind::configuration, "bundle is empty");
  require(cfg.reference_index < n, ErrorKind::configuration, "reference_index outside the bundle");
  if (cfg.csv_dir) std::filesystem::create_directories(*cfg.csv_dir);
  const Rng root(cfg.seed);
  const std::vector<Matrix2D> enc_rows = encoding_rows(bundle.encodings);

  AttackResult res;
  AttackState& st = res.state;
  res.report.config = cfg;
  res.report.n = n;
  if (n == 1) {
    st.matching = Permutation::identity(1);
    st.local_perms = {Permutation::identity(bundle.spec.patch_count())};
    st.global_perm = Permutation::identity(bundle.spec.patch_count());
    st.log.push_back({"single_image", 0.0, 0.0, st.matching.indices(), std::nullopt});
    res.report.guess = st.matching.indices();
    res.report.stages = st.log;
    res.report.total_seconds = seconds_since(t_start);
    return res;
  }
  PairDatasetConfig pairs = cfg.pairs;
  pairs.images_per_encoder = std::min(pairs.images_per_encoder, n);

  auto t0 = std::chrono::steady_clock::now();
  res.model = run_stage("patch_similarity", [&] {
    return learn_patch_similarity(bundle.originals, bundle.spec, pairs, cfg.similarity, EncodedNorm::per_set,
                                  root.split(0).next_u64(), cfg.moments);
  });
  st.log.push_back({"patch_similarity", seconds_since(t0), res.model.heldout_balanced_accuracy, {}, std::nullopt});

  t0 = std::chrono::steady_clock::now();
  const EmbeddingSet ex = embed_originals(res.model, bundle.originals);
  const EmbeddingSet ey = embed_encodings(res.model, enc_rows);
  res.isim = run_stage("image_similarity", [&] { return i_sim_matrix(ex, ey, cfg.threads); });
  maybe_dump(cfg, "isim.csv", res.isim);
  st.matching = run_stage("initial_matching", [&] { return initial_matching(res.isim); });
  double init_obj = 0.0;
  for (std::size_t i = 0; i < n; ++i) init_obj += res.isim(i, st.matching[i]);
  st.log.push_back({"initial_matching", seconds_since(t0), init_obj, st.matching.indices(), std::nullopt});

  t0 = std::chrono::steady_clock::now();
  st.local_perms = run_stage("local_permutations",
                             [&] { return recover_local_perms(enc_rows, cfg.reference_index, cfg.alignment); });
  const std::vector<Matrix2D> aligned_rows = align_encodings(enc_rows, st.local_perms);
  st.log.push_back({"local_permutations", seconds_since(t0), 0.0, {}, std::nullopt});

  EmbeddingSet ex2 = ex;
  EmbeddingSet ey2;
  if (cfg.aligned_model) {
    t0 = std::chrono::steady_clock::now();
    res.aligned_model = run_stage("aligned_similarity", [&] {
      return learn_patch_similarity(bundle.originals, bundle.spec, pairs, cfg.similarity, EncodedNorm::per_position,
                                    root.split(1).next_u64(), cfg.moments);
    });
    ex2 = embed_originals(*res.aligned_model, bundle.originals);
    ey2 = embed_encodings(*res.aligned_model, aligned_rows);
    st.log.push_back(
        {"aligned_similarity", seconds_since(t0), res.aligned_model->heldout_balanced_accuracy, {}, std::nullopt});
  } else {
    ey2.reserve(n);
    for (std::size_t j = 0; j < n; ++j) ey2.push_back(permute_rows(ey[j], st.local_perms[j].inverse().indices()));
  }

  std::vector<Permutation> starts;
  if (cfg.structure.restarts > 0 && cfg.boost_rounds > 0) {
    t0 = std::chrono::steady_clock::now();
    const std::size_t side = bundle.spec.patches_per_side;
    const Matrix2D raw_corr = position_correlation(ex);
    EmbeddingSet ey_aligned;
    ey_aligned.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
      ey_aligned.push_back(permute_rows(ey[j], st.local_perms[j].inverse().indices()));
    const GlobalPerm s1 = run_stage("position_structure", [&] {
      return match_position_structure(raw_corr, position_correlation(ey_aligned), cfg.structure,
                                      root.split(3).next_u64());
    });
    starts = grid_symmetries(s1.rho, side);
    double best_obj = s1.score;
    if (cfg.aligned_model) {
      const GlobalPerm s2 = run_stage("position_structure", [&] {
        return match_position_structure(position_correlation(ex2), position_correlation(ey2), cfg.structure,
                                        root.split(4).next_u64());
      });
      for (auto& g : grid_symmetries(s2.rho, side)) starts.push_back(std::move(g));
      best_obj = std::max(best_obj, s2.score);
    }
    st.log.push_back({"position_structure", seconds_since(t0), best_obj, {}, std::nullopt});
  }

  res.report.boost_rounds_run = run_stage("boost", [&] {
    // Boost from the initial matching and from every structural start; keep
    // the run whose final assignment value is largest.
    AttackState best = st;
    best.log.clear();
    std::size_t best_rounds = boost_loop(ex2, ey2, best, cfg.boost_rounds);
    const auto final_value = [](const AttackState& s) {
      return s.log.empty() ? -std::numeric_limits<double>::infinity() : s.log.back().objective;
    };
    for (const auto& rho : starts) {
      AttackState cand = st;
      cand.log.clear();
      cand.matching = refine_matching(ex2, ey2, rho);
      const std::size_t rounds = boost_loop(ex2, ey2, cand, cfg.boost_rounds);
      if (final_value(cand) > final_value(best)) {
        best = std::move(cand);
        best_rounds = rounds;
      }
    }
    st.matching = std::move(best.matching);
    st.global_perm = std::move(best.global_perm);
    st.log.insert(st.log.end(), best.log.begin(), best.log.end());
    return best_rounds;
  });
  if (st.global_perm.size() == 0) st.global_perm = recover_global_perm(ex2, ey2, st.matching).rho;

  if (cfg.extraction) {
    t0 = std::chrono::steady_clock::now();
    const ExtractionResult ext = run_stage("extraction", [&] {
      return extract_encoder(bundle.originals, bundle.encodings, st.matching, st.local_perms, st.global_perm,
                             bundle.spec, cfg.extraction_config, root.split(2).next_u64());
    });
    st.extracted = ext.key;
    st.log.push_back({"extraction", seconds_since(t0), ext.final_loss, {}, std::nullopt});

    t0 = std::chrono::steady_clock::now();
    st.matching = run_stage("final_matching", [&] {
      return final_matching(*st.extracted, bundle.originals, bundle.encodings, st.local_perms, st.global_perm);
    });
    st.log.push_back({"final_matching", seconds_since(t0), ext.final_loss, st.matching.indices(), std::nullopt});
  }

  require(is_bijection(st.matching.indices()), ErrorKind::validation, "attack produced a non-bijective guess");
  res.report.n = n;
  res.report.guess = st.matching.indices();
  res.report.stages = st.log;
  res.report.similarity_heldout_accuracy = res.model.heldout_balanced_accuracy;
  res.report.aligned_heldout_accuracy = res.aligned_model ? res.aligned_model->heldout_balanced_accuracy : 0.0;
  res.report.config = cfg;
  res.report.total_seconds = seconds_since(t_start);
  if (cfg.csv_dir) {
    std::ofstream out(*cfg.csv_dir / "stages.csv");
    out << "stage,seconds,objective\n";
    for (const auto& s : res.report.stages) out << s.stage << ',' << s.seconds << ',' << s.objective << '\n';
  }
  return res;
}

void score_stages(AttackReport& report, const Permutation& sigma) {
  for (auto& s : report.stages) {
    if (!s.matching.empty()) s.score = score_matching(s.matching, sigma).score;
  }
}

namespace {

detail::json config_to_json(const AttackConfig& c) {
  detail::json j = {
      {"seed", c.seed},
      {"threads", c.threads},
      {"moment_order", c.moments.max_order},
      {"pairs", {{"num_encoders", c.pairs.num_encoders}, {"images_per_encoder", c.pairs.images_per_encoder}}},
      {"key_distribution", detail::to_json(c.pairs.key_distribution)},
      {"similarity",
       {{"hidden", c.similarity.hidden},
        {"embedding_width", c.similarity.embedding_width},
        {"batch_size", c.similarity.batch_size},
        {"epochs", c.similarity.epochs},
        {"learning_rate", c.similarity.adam.learning_rate},
        {"heldout_encoders", c.similarity.heldout.num_encoders},
        {"heldout_images_per_encoder", c.similarity.heldout.images_per_encoder},
        {"heldout_pairs", c.similarity.heldout_pairs}}},
      {"aligned_model", c.aligned_model},
      {"reference_index", c.reference_index},
      {"alignment",
       {{"pca_components", c.alignment.pca_components}, {"template_rounds", c.alignment.template_rounds}}},
      {"structure", {{"restarts", c.structure.restarts}, {"steps", c.structure.steps}}},
      {"boost_rounds", c.boost_rounds},
      {"extraction",
       {{"enabled", c.extraction},
        {"steps", c.extraction_config.steps},
        {"learning_rate", c.extraction_config.adam.learning_rate},
        {"init", to_string(c.extraction_config.init)},
        {"max_pairs", c.extraction_config.max_pairs}}},
  };
  j["csv_dir"] = c.csv_dir ? detail::json(c.csv_dir->string()) : detail::json(nullptr);
  return j;
}

}  // namespace

AttackConfig attack_config_from_json_text(const std::string& text, const std::string& where) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw Error(ErrorKind::schema, where + ": invalid JSON: " + e.what());
  }
  AttackConfig c;
  using detail::optional_field;
  detail::check_keys(j,
                     {"seed", "threads", "moment_order", "pairs", "key_distribution", "similarity", "aligned_model",
                      "reference_index", "alignment", "structure", "boost_rounds", "extraction", "csv_dir"},
                     where);
  optional_field(j, "seed", c.seed, where);
  optional_field(j, "threads", c.threads, where);
  optional_field(j, "moment_order", c.moments.max_order, where);
  if (j.contains("pairs")) {
    const auto& p = j.at("pairs");
    const std::string w = where + ".pairs";
    detail::check_keys(p, {"num_encoders", "images_per_encoder"}, w);
    optional_field(p, "num_encoders", c.pairs.num_encoders, w);
    optional_field(p, "images_per_encoder", c.pairs.images_per_encoder, w);
  }
  if (j.contains("key_distribution")) {
    c.pairs.key_distribution =
        detail::key_distribution_overlay(j.at("key_distribution"), c.pairs.key_distribution, where + ".key_distribution");
  }
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    const std::string w = where + ".similarity";
    detail::check_keys(s,
                       {"hidden", "embedding_width", "batch_size", "epochs", "learning_rate", "heldout_encoders",
                        "heldout_images_per_encoder", "heldout_pairs"},
                       w);
    optional_field(s, "hidden", c.similarity.hidden, w);
    optional_field(s, "embedding_width", c.similarity.embedding_width, w);
    optional_field(s, "batch_size", c.similarity.batch_size, w);
    optional_field(s, "epochs", c.similarity.epochs, w);
    optional_field(s, "learning_rate", c.similarity.adam.learning_rate, w);
    optional_field(s, "heldout_encoders", c.similarity.heldout.num_encoders, w);
    optional_field(s, "heldout_images_per_encoder", c.similarity.heldout.images_per_encoder, w);
    optional_field(s, "heldout_pairs", c.similarity.heldout_pairs, w);
  }
  optional_field(j, "aligned_model", c.aligned_model, where);
  optional_field(j, "reference_index", c.reference_index, where);
  if (j.contains("alignment")) {
    const auto& a = j.at("alignment");
    const std::string w = where + ".alignment";
    detail::check_keys(a, {"pca_components", "template_rounds"}, w);
    optional_field(a, "pca_components", c.alignment.pca_components, w);
    optional_field(a, "template_rounds", c.alignment.template_rounds, w);
  }
  if (j.contains("structure")) {
    const auto& a = j.at("structure");
    const std::string w = where + ".structure";
    detail::check_keys(a, {"restarts", "steps"}, w);
    optional_field(a, "restarts", c.structure.restarts, w);
    optional_field(a, "steps", c.structure.steps, w);
  }
  optional_field(j, "boost_rounds", c.boost_rounds, where);
  if (j.contains("extraction")) {
    const auto& e = j.at("extraction");
    const std::string w = where + ".extraction";
    detail::check_keys(e, {"enabled", "steps", "learning_rate", "init", "max_pairs"}, w);
    optional_field(e, "enabled", c.extraction, w);
    optional_field(e, "steps", c.extraction_config.steps, w);
    optional_field(e, "learning_rate", c.extraction_config.adam.learning_rate, w);
    optional_field(e, "max_pairs", c.extraction_config.max_pairs, w);
    if (e.contains("init")) {
      c.extraction_config.init = extraction_init_from_string(detail::field<std::string>(e, "init", w));
    }
  }
  if (j.contains("csv_dir") && !j.at("csv_dir").is_null()) {
    c.csv_dir = detail::field<std::string>(j, "csv_dir", where);
  }
  c.moments.validate();
  return c;
}

std::string attack_config_to_json_text(const AttackConfig& cfg) { return config_to_json(cfg).dump(2); }

void save_attack_report(const AttackReport& report, const std::filesystem::path& path) {
  detail::json stages = detail::json::array();
  for (const auto& s : report.stages) {
    detail::json js = {{"stage", s.stage}, {"objective", s.objective}};
    if (!s.matching.empty()) js["matching"] = s.matching;
    if (s.score) js["score"] = *s.score;
    stages.push_back(std::move(js));
  }
  detail::write_json_file(path, {{"format", "encattack.attack_report/1"},
                                 {"n", report.n},
                                 {"guess", report.guess},
                                 {"stages", stages},
                                 {"boost_rounds_run", report.boost_rounds_run},
                                 {"similarity_heldout_accuracy", report.similarity_heldout_accuracy},
                                 {"aligned_heldout_accuracy", report.aligned_heldout_accuracy},
                                 {"config", config_to_json(report.config)}});
}

void save_attack_timings(const AttackReport& report, const std::filesystem::path& path) {
  detail::json stages = detail::json::array();
  for (const auto& s : report.stages) stages.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  detail::write_json_file(path, {{"format", "encattack.attack_timings/1"},
                                 {"stages", stages},
                                 {"total_seconds", report.total_seconds}});
}

}  // namespace encattack
