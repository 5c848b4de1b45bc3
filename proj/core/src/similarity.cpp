#include "encattack/similarity.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "encattack/error.hpp"
#include "encattack/rng.hpp"
#include "tensor_store.hpp"

namespace encattack {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap view(const Matrix2D& m) {
  return ConstMatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}
MatMap view(Matrix2D& m) {
  return MatMap(m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
}

Matrix2D gather_rows(const Matrix2D& src, std::span<const std::size_t> idx) {
  Matrix2D out(idx.size(), src.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = src.row(idx[r]);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

Matrix2D slice_rows(const Matrix2D& src, std::size_t begin, std::size_t count) {
  Matrix2D out(count, src.cols);
  std::copy(src.data.begin() + static_cast<std::ptrdiff_t>(begin * src.cols),
            src.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * src.cols), out.data.begin());
  return out;
}

double signed_log(double v) { return std::copysign(std::log1p(std::abs(v)), v); }

// Encoded-side features of every group, concatenated in dataset row order.
Matrix2D group_encoded_features(const PairDataset& pairs, EncodedNorm norm, const MomentConfig& cfg) {
  const std::size_t k = cfg.feature_length();
  Matrix2D out(pairs.size(), k);
  const std::size_t per = pairs.group_rows();
  for (std::size_t g = 0; g < pairs.groups; ++g) {
    const Matrix2D f =
        encoded_features(slice_rows(pairs.encoded, g * per, per), pairs.spec.patch_count(), norm, cfg);
    std::copy(f.data.begin(), f.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(g * per * k));
  }
  return out;
}

}  // namespace

void MomentConfig::validate() const {
  require(max_order >= 2, ErrorKind::configuration, "moment order K must be at least 2");
}

std::vector<double> moment_features(std::span<const double> v, const MomentConfig& cfg) {
  cfg.validate();
  require(!v.empty(), ErrorKind::validation, "moment features need a nonempty vector");
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  std::vector<double> out(cfg.feature_length(), 0.0);
  out[0] = mean;
  for (const double x : v) {
    const double c = x - mean;
    double power = c;
    for (std::size_t k = 2; k <= cfg.max_order; ++k) {
      power *= c;
      out[k - 1] += power;
    }
  }
  for (std::size_t k = 1; k < out.size(); ++k) out[k] /= n;
  return out;
}

Matrix2D log_moment_rows(const Matrix2D& rows, const MomentConfig& cfg) {
  Matrix2D out(rows.rows, cfg.feature_length());
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const auto f = moment_features(rows.row(r), cfg);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < f.size(); ++k) dst[k] = signed_log(f[k]);
  }
  return out;
}

FeatureScaler FeatureScaler::fit(const Matrix2D& features) {
  require(features.rows > 0, ErrorKind::validation, "cannot fit a scaler on zero rows");
  FeatureScaler s;
  s.mean.assign(features.cols, 0.0);
  s.scale.assign(features.cols, 0.0);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < features.cols; ++c) s.mean[c] += features(r, c);
  }
  for (double& m : s.mean) m /= static_cast<double>(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < features.cols; ++c) {
      const double d = features(r, c) - s.mean[c];
      s.scale[c] += d * d;
    }
  }
  for (double& v : s.scale) v = std::sqrt(v / static_cast<double>(features.rows)) + 1e-12;
  return s;
}

void FeatureScaler::apply(Matrix2D& features) const {
  require(features.cols == mean.size(), ErrorKind::shape, "feature width differs from the scaler");
  for (std::size_t r = 0; r < features.rows; ++r) {
    auto row = features.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / scale[c];
  }
}

std::string to_string(EncodedNorm n) { return n == EncodedNorm::per_set ? "per_set" : "per_position"; }

EncodedNorm encoded_norm_from_string(const std::string& s) {
  if (s == "per_set") return EncodedNorm::per_set;
  if (s == "per_position") return EncodedNorm::per_position;
  fail(ErrorKind::schema, "unknown encoded normalization '" + s + "'");
}

Matrix2D encoded_features(const Matrix2D& rows, std::size_t positions, EncodedNorm norm, const MomentConfig& cfg) {
  Matrix2D f = log_moment_rows(rows, cfg);
  if (norm == EncodedNorm::per_set) {
    FeatureScaler::fit(f).apply(f);
    return f;
  }
  require(positions > 0 && rows.rows % positions == 0, ErrorKind::shape,
          "per-position features need whole images of " + std::to_string(positions) + " rows");
  const std::size_t images = rows.rows / positions;
  for (std::size_t p = 0; p < positions; ++p) {
    std::vector<std::size_t> idx(images);
    for (std::size_t i = 0; i < images; ++i) idx[i] = i * positions + p;
    Matrix2D sub = gather_rows(f, idx);
    FeatureScaler::fit(sub).apply(sub);
    for (std::size_t i = 0; i < images; ++i) {
      std::copy(sub.row(i).begin(), sub.row(i).end(), f.row(idx[i]).begin());
    }
  }
  return f;
}

void SimilarityModel::validate() const {
  moments.validate();
  n_x.validate();
  n_y.validate();
  require(n_x.output_width() == n_y.output_width(), ErrorKind::shape, "embedding nets differ in output width");
  require(n_x.input_width() == moments.feature_length() && n_y.input_width() == moments.feature_length(),
          ErrorKind::shape, "embedding nets do not take moment features");
  require(raw_scaler.mean.size() == moments.feature_length() && raw_scaler.scale.size() == moments.feature_length(),
          ErrorKind::shape, "raw feature scaler has the wrong width");
}

PairDataset build_pair_dataset(std::span<const Image> images, std::span<const EncoderKey> keys,
                               std::size_t images_per_encoder, std::uint64_t seed) {
  require(!images.empty(), ErrorKind::configuration, "pair dataset needs images");
  require(!keys.empty(), ErrorKind::configuration, "pair dataset needs at least one encoder");
  const ImageSpec spec = keys.front().spec;
  for (const auto& img : images) require(img.spec == spec, ErrorKind::shape, "image spec differs from key spec");
  const std::size_t per_key = images_per_encoder == 0 ? images.size() : images_per_encoder;
  require(per_key <= images.size(), ErrorKind::configuration,
          "images_per_encoder " + std::to_string(per_key) + " exceeds the " + std::to_string(images.size()) +
              " available images");
  const std::size_t positions = spec.patch_count();

  std::vector<Matrix2D> patches(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) patches[i] = patchify(images[i]);

  PairDataset d;
  d.spec = spec;
  d.groups = keys.size();
  d.images_per_group = per_key;
  const std::size_t total = keys.size() * per_key * positions;
  d.raw = Matrix2D(total, spec.patch_length());
  d.encoded = Matrix2D(total, spec.output_width);
  d.group.resize(total);
  d.position.resize(total);
  d.image.resize(total);

  const Rng root(seed);
  std::size_t row = 0;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    require(keys[g].spec == spec, ErrorKind::shape, "pair-dataset keys differ in spec");
    Rng pick = root.split(g);
    const Permutation order = Permutation::random(images.size(), pick);
    Matrix2D stack(per_key * positions, spec.patch_length());
    for (std::size_t t = 0; t < per_key; ++t) {
      const auto& src = patches[order[t]];
      std::copy(src.data.begin(), src.data.end(),
                stack.data.begin() + static_cast<std::ptrdiff_t>(t * positions * spec.patch_length()));
    }
    const Matrix2D enc = encode_patch_rows(keys[g], stack);
    std::copy(stack.data.begin(), stack.data.end(),
              d.raw.data.begin() + static_cast<std::ptrdiff_t>(row * spec.patch_length()));
    std::copy(enc.data.begin(), enc.data.end(),
              d.encoded.data.begin() + static_cast<std::ptrdiff_t>(row * spec.output_width));
    for (std::size_t r = 0; r < per_key * positions; ++r, ++row) {
      d.group[row] = g;
      d.position[row] = r % positions;
      d.image[row] = order[r / positions];
    }
  }
  return d;
}

PairDataset build_pair_dataset(std::span<const Image> images, const ImageSpec& spec, const PairDatasetConfig& cfg,
                               std::uint64_t seed) {
  require(cfg.num_encoders > 0, ErrorKind::configuration, "pair dataset needs at least one encoder");
  const Rng root(seed);
  std::vector<EncoderKey> keys;
  keys.reserve(cfg.num_encoders);
  for (std::size_t g = 0; g < cfg.num_encoders; ++g) {
    keys.push_back(sample_key(spec, root.split(g).next_u64(), cfg.key_distribution));
  }
  return build_pair_dataset(images, keys, cfg.images_per_encoder, root.split(1u << 20).next_u64());
}

SimilarityModel init_similarity(const MomentConfig& moments, const SimTrainConfig& cfg, EncodedNorm norm,
                                std::uint64_t seed) {
  moments.validate();
  require(cfg.embedding_width > 0, ErrorKind::configuration, "embedding width must be positive");
  std::vector<std::size_t> dims{moments.feature_length()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.embedding_width);
  const Rng root(seed);
  // Weight variance 1/(3 fan_in), bias variance 1/(3 fan_in).
  auto make = [&](std::uint64_t id) {
    MlpParams p = init_mlp(dims, 1.0 / std::sqrt(3.0), root.split(id).next_u64());
    for (auto& l : p.layers) {
      const double shrink = 1.0 / std::sqrt(static_cast<double>(l.weight.cols));
      for (double& b : l.bias) b *= shrink;
    }
    return p;
  };
  SimilarityModel m;
  m.moments = moments;
  m.n_x = make(0);
  m.n_y = make(1);
  m.encoded_norm = norm;
  m.raw_scaler.mean.assign(moments.feature_length(), 0.0);
  m.raw_scaler.scale.assign(moments.feature_length(), 1.0);
  return m;
}

namespace {

// Loss and, when grads are given, gradients of one contrastive batch.
double contrastive_step(const SimilarityModel& model, const Matrix2D& xb, const Matrix2D& yb, MlpGrads* gx,
                        MlpGrads* gy) {
  MlpTape tx, ty;
  const bool train = gx != nullptr;
  const Matrix2D ex = forward_batch(model.n_x, xb, train ? &tx : nullptr);
  const Matrix2D ey = forward_batch(model.n_y, yb, train ? &ty : nullptr);
  const auto b = static_cast<Eigen::Index>(xb.rows);
  RowMat s = view(ex) * view(ey).transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mx = s.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      s(i, j) = std::exp(s(i, j) - mx);
      z += s(i, j);
    }
    s.row(i) /= z;
    loss -= std::log(std::max(s(i, i), 1e-300));
  }
  loss /= static_cast<double>(b);
  if (!train) return loss;
  // d loss / d s = (softmax - I) / B
  for (Eigen::Index i = 0; i < b; ++i) s(i, i) -= 1.0;
  s /= static_cast<double>(b);
  Matrix2D dex(ex.rows, ex.cols), dey(ey.rows, ey.cols);
  view(dex).noalias() = s * view(ey);
  view(dey).noalias() = s.transpose() * view(ex);
  backward_batch(model.n_x, tx, dex, *gx);
  backward_batch(model.n_y, ty, dey, *gy);
  return loss;
}

void zero(MlpGrads& g) {
  for (auto& l : g.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

}  // namespace

double contrastive_loss(const SimilarityModel& model, const Matrix2D& raw_features, const Matrix2D& enc_features) {
  require(raw_features.rows == enc_features.rows && raw_features.rows > 0, ErrorKind::shape,
          "contrastive batch halves differ in size");
  return contrastive_step(model, raw_features, enc_features, nullptr, nullptr);
}

SimilarityModel train_patch_sim(const PairDataset& pairs, const SimTrainConfig& cfg, EncodedNorm norm,
                                std::uint64_t seed, const MomentConfig& moments) {
  require(cfg.batch_size >= 2, ErrorKind::configuration, "contrastive batches need at least two pairs");
  require(pairs.group_rows() >= cfg.batch_size, ErrorKind::configuration,
          "each encoder group holds " + std::to_string(pairs.group_rows()) + " pairs, fewer than batch size " +
              std::to_string(cfg.batch_size));
  const Rng root(seed);
  SimilarityModel model = init_similarity(moments, cfg, norm, root.split(0).next_u64());

  Matrix2D fx = log_moment_rows(pairs.raw, moments);
  model.raw_scaler = FeatureScaler::fit(fx);
  model.raw_scaler.apply(fx);
  const Matrix2D fy = group_encoded_features(pairs, norm, moments);

  MlpGrads gx = zeros_like(model.n_x);
  MlpGrads gy = zeros_like(model.n_y);
  std::vector<std::span<double>> params = tensors(model.n_x);
  for (auto t : tensors(model.n_y)) params.push_back(t);
  std::vector<std::span<const double>> grads = tensors(static_cast<const MlpGrads&>(gx));
  for (auto t : tensors(static_cast<const MlpGrads&>(gy))) grads.push_back(t);
  std::vector<std::span<const double>> shapes(params.begin(), params.end());
  OptimState state = make_optim_state(shapes, cfg.adam);

  Rng rng = root.split(1);
  const std::size_t per = pairs.group_rows();
  const std::size_t bsz = cfg.batch_size;
  std::vector<std::size_t> batch(bsz);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t g = 0; g < pairs.groups; ++g) {
      const Permutation order = Permutation::random(per, rng);
      for (std::size_t start = 0; start + bsz <= per; start += bsz) {
        std::vector<std::size_t> b(bsz);
        for (std::size_t t = 0; t < bsz; ++t) b[t] = g * per + order[start + t];
        batches.push_back(std::move(b));
      }
    }
    const Permutation batch_order = Permutation::random(batches.size(), rng);
    for (std::size_t s = 0; s < batches.size(); ++s) {
      const auto& b = batches[batch_order[s]];
      zero(gx);
      zero(gy);
      const double loss = contrastive_step(model, gather_rows(fx, b), gather_rows(fy, b), &gx, &gy);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::training, "contrastive loss became non-finite at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(s) + " (last finite loss " +
                                      std::to_string(model.final_loss) + ", lr " +
                                      std::to_string(cfg.adam.learning_rate) + ")");
      }
      model.final_loss = loss;
      adam_update(params, grads, state);
    }
  }
  return model;
}

Matrix2D embed_raw(const SimilarityModel& model, const Matrix2D& patch_rows) {
  Matrix2D f = log_moment_rows(patch_rows, model.moments);
  model.raw_scaler.apply(f);
  return forward_batch(model.n_x, f);
}

Matrix2D embed_encoded(const SimilarityModel& model, const Matrix2D& encoded_rows, std::size_t positions) {
  return forward_batch(model.n_y, encoded_features(encoded_rows, positions, model.encoded_norm, model.moments));
}

PairScores score_pairs(const SimilarityModel& model, const PairDataset& pairs, std::size_t count,
                       std::uint64_t seed) {
  require(pairs.size() >= 2, ErrorKind::configuration, "scoring needs at least two pairs");
  const Matrix2D ex = embed_raw(model, pairs.raw);
  const Matrix2D ey = forward_batch(model.n_y, group_encoded_features(pairs, model.encoded_norm, model.moments));
  auto dot = [&](std::size_t i, std::size_t j) {
    const auto a = ex.row(i);
    const auto b = ey.row(j);
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  Rng rng(seed);
  const std::size_t per = pairs.group_rows();
  PairScores s;
  const std::size_t half = count / 2;
  for (std::size_t t = 0; t < half; ++t) {
    const std::size_t i = rng.below(pairs.size());
    s.positive.push_back(dot(i, i));
  }
  for (std::size_t t = 0; t < count - half; ++t) {
    const std::size_t i = rng.below(pairs.size());
    const std::size_t base = pairs.group[i] * per;
    std::size_t j = base + rng.below(per - 1);
    if (j >= i) ++j;
    s.negative.push_back(dot(i, j));
  }
  return s;
}

double balanced_accuracy(const PairScores& scores, double threshold) {
  require(!scores.positive.empty() && !scores.negative.empty(), ErrorKind::validation,
          "balanced accuracy needs both classes");
  const auto tp = std::count_if(scores.positive.begin(), scores.positive.end(), [&](double v) { return v > threshold; });
  const auto tn = std::count_if(scores.negative.begin(), scores.negative.end(), [&](double v) { return v <= threshold; });
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(scores.positive.size()) +
                static_cast<double>(tn) / static_cast<double>(scores.negative.size()));
}

std::pair<double, double> best_threshold(const PairScores& scores) {
  require(!scores.positive.empty() && !scores.negative.empty(), ErrorKind::validation,
          "threshold search needs both classes");
  std::vector<std::pair<double, int>> all;
  for (const double v : scores.positive) all.emplace_back(v, 1);
  for (const double v : scores.negative) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end());
  const auto np = static_cast<double>(scores.positive.size());
  const auto nn = static_cast<double>(scores.negative.size());
  // Threshold below everything: all predicted positive.
  double tp = np, tn = 0.0;
  double best_acc = 0.5 * (tp / np + tn / nn);
  double best_th = all.front().first - 1.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].second == 1) {
      tp -= 1.0;
    } else {
      tn += 1.0;
    }
    if (i + 1 < all.size() && all[i + 1].first == all[i].first) continue;
    const double acc = 0.5 * (tp / np + tn / nn);
    if (acc > best_acc) {
      best_acc = acc;
      best_th = i + 1 < all.size() ? 0.5 * (all[i].first + all[i + 1].first) : all[i].first;
    }
  }
  return {best_acc, best_th};
}

void calibrate(SimilarityModel& model, const PairDataset& calibration, const PairDataset& evaluation,
               std::size_t pairs, std::uint64_t seed) {
  const Rng root(seed);
  model.threshold = best_threshold(score_pairs(model, calibration, pairs, root.split(0).next_u64())).second;
  model.heldout_balanced_accuracy =
      balanced_accuracy(score_pairs(model, evaluation, pairs, root.split(1).next_u64()), model.threshold);
}

SimilarityModel learn_patch_similarity(std::span<const Image> images, const ImageSpec& spec,
                                       const PairDatasetConfig& train_pairs, const SimTrainConfig& cfg,
                                       EncodedNorm norm, std::uint64_t seed, const MomentConfig& moments) {
  const Rng root(seed);
  const PairDataset train = build_pair_dataset(images, spec, train_pairs, root.split(0).next_u64());
  SimilarityModel model = train_patch_sim(train, cfg, norm, root.split(1).next_u64(), moments);
  PairDatasetConfig held = cfg.heldout;
  held.key_distribution = train_pairs.key_distribution;
  held.images_per_encoder = std::min(held.images_per_encoder, images.size());
  const std::size_t total = held.num_encoders;
  require(total >= 2, ErrorKind::configuration, "held-out evaluation needs at least two encoders");
  PairDatasetConfig cal = held;
  cal.num_encoders = std::max<std::size_t>(1, total / 3);
  held.num_encoders = total - cal.num_encoders;
  calibrate(model, build_pair_dataset(images, spec, cal, root.split(2).next_u64()),
            build_pair_dataset(images, spec, held, root.split(3).next_u64()), cfg.heldout_pairs,
            root.split(4).next_u64());
  return model;
}

double p_sim(const SimilarityModel& model, std::span<const double> raw_patch, const Matrix2D& context,
             std::size_t row, std::size_t positions) {
  require(row < context.rows, ErrorKind::shape, "p_sim row index outside the encoded context");
  Matrix2D x(1, raw_patch.size());
  std::copy(raw_patch.begin(), raw_patch.end(), x.data.begin());
  const Matrix2D ex = embed_raw(model, x);
  const Matrix2D ey = embed_encoded(model, context, positions);
  const auto b = ey.row(row);
  return std::inner_product(ex.data.begin(), ex.data.end(), b.begin(), 0.0);
}

void save_similarity(const SimilarityModel& model, const std::filesystem::path& dir, const std::string& stem) {
  model.validate();
  detail::TensorWriter w;
  w.append_mlp("n_x.", model.n_x);
  w.append_mlp("n_y.", model.n_y);
  const detail::json manifest = {
      {"format", "encattack.similarity/1"},
      {"moment_order", model.moments.max_order},
      {"n_x_dims", model.n_x.dims()},
      {"n_y_dims", model.n_y.dims()},
      {"activation", to_string(model.n_x.activation)},
      {"encoded_norm", to_string(model.encoded_norm)},
      {"raw_mean", model.raw_scaler.mean},
      {"raw_scale", model.raw_scaler.scale},
      {"threshold", model.threshold},
      {"heldout_balanced_accuracy", model.heldout_balanced_accuracy},
      {"final_loss", model.final_loss},
      {"blob", stem + ".bin"},
      {"dtype", "f64le"},
      {"tensors", w.entries()},
  };
  w.write_blob(dir / (stem + ".bin"));
  detail::write_json_file(dir / (stem + ".json"), manifest);
}

SimilarityModel load_similarity(const std::filesystem::path& dir, const std::string& stem) {
  const auto path = dir / (stem + ".json");
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  require(detail::field<std::string>(m, "format", where) == "encattack.similarity/1", ErrorKind::schema,
          where + ": unsupported similarity format");
  SimilarityModel model;
  model.moments.max_order = detail::field<std::size_t>(m, "moment_order", where);
  const auto act = activation_from_string(detail::field<std::string>(m, "activation", where));
  const detail::TensorReader r(dir / detail::field<std::string>(m, "blob", where), m.at("tensors"));
  model.n_x = r.get_mlp("n_x.", detail::field<std::vector<std::size_t>>(m, "n_x_dims", where), act);
  model.n_y = r.get_mlp("n_y.", detail::field<std::vector<std::size_t>>(m, "n_y_dims", where), act);
  model.encoded_norm = encoded_norm_from_string(detail::field<std::string>(m, "encoded_norm", where));
  model.raw_scaler.mean = detail::field<std::vector<double>>(m, "raw_mean", where);
  model.raw_scaler.scale = detail::field<std::vector<double>>(m, "raw_scale", where);
  model.threshold = detail::field<double>(m, "threshold", where);
  model.heldout_balanced_accuracy = detail::field<double>(m, "heldout_balanced_accuracy", where);
  model.final_loss = detail::field<double>(m, "final_loss", where);
  model.validate();
  return model;
}

}  // namespace encattack
