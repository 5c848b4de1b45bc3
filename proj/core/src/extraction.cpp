#include "encattack/extraction.hpp"

#include <algorithm>
#include <cmath>

#include "encattack/error.hpp"
#include "encattack/rng.hpp"

namespace encattack {

std::string to_string(ExtractionInit i) {
  return i == ExtractionInit::small_uniform ? "small_uniform" : "key_distribution";
}

ExtractionInit extraction_init_from_string(const std::string& s) {
  if (s == "small_uniform") return ExtractionInit::small_uniform;
  if (s == "key_distribution") return ExtractionInit::key_distribution;
  fail(ErrorKind::configuration, "unknown extraction init '" + s + "'");
}

EncoderKey init_extraction_key(const ImageSpec& spec, ExtractionInit init, std::uint64_t seed) {
  if (init == ExtractionInit::key_distribution) {
    EncoderKey key = sample_key(spec, seed);
    key.lineage = {seed, "extraction_init"};
    return key;
  }
  spec.validate();
  const Rng root(seed);
  auto uniform_layer = [](std::size_t out, std::size_t in, Rng rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer l{Matrix2D(out, in), std::vector<double>(out)};
    for (double& w : l.weight.data) w = rng.uniform(-bound, bound);
    for (double& b : l.bias) b = rng.uniform(-bound, bound);
    return l;
  };
  EncoderKey key;
  key.spec = spec;
  key.lineage = {seed, "extraction_init"};
  key.patch_mlp.activation = Activation::relu;
  std::size_t fan_in = spec.patch_length();
  for (std::size_t t = 0; t < spec.depth; ++t) {
    key.patch_mlp.layers.push_back(uniform_layer(spec.latent_width, fan_in, root.split(t)));
    fan_in = spec.latent_width;
  }
  key.positional = Matrix2D(spec.patch_count(), spec.latent_width, 0.0);
  key.projection = uniform_layer(spec.output_width, spec.latent_width, root.split(1000));
  return key;
}

ExtractionResult fit_encoder(std::span<const Image> images, std::span<const Matrix2D> targets,
                             const ImageSpec& spec, const ExtractionConfig& cfg, std::uint64_t seed) {
  require(!images.empty(), ErrorKind::configuration, "extraction needs at least one image-encoding pair");
  require(images.size() == targets.size(), ErrorKind::shape, "extraction images and targets differ in count");
  const std::size_t positions = spec.patch_count();
  const std::size_t rows = images.size() * positions;

  Matrix2D x(rows, spec.patch_length());
  Matrix2D target(rows, spec.output_width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].spec == spec, ErrorKind::shape, "extraction image does not match the image spec");
    require(targets[i].rows == positions && targets[i].cols == spec.output_width, ErrorKind::shape,
            "extraction target does not match the image spec");
    const Matrix2D p = patchify(images[i]);
    std::copy(p.data.begin(), p.data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * p.data.size()));
    std::copy(targets[i].data.begin(), targets[i].data.end(),
              target.data.begin() + static_cast<std::ptrdiff_t>(i * targets[i].data.size()));
  }

  ExtractionResult result;
  result.key = init_extraction_key(spec, cfg.init, seed);
  MlpParams& mlp = result.key.patch_mlp;
  Matrix2D& delta = result.key.positional;
  MlpParams proj;
  proj.activation = Activation::identity;
  proj.layers.push_back(result.key.projection);

  MlpGrads g_mlp = zeros_like(mlp);
  MlpGrads g_proj = zeros_like(proj);
  Matrix2D g_delta(delta.rows, delta.cols);

  std::vector<std::span<double>> params = tensors(mlp);
  params.emplace_back(delta.data);
  for (auto t : tensors(proj)) params.push_back(t);
  std::vector<std::span<const double>> grads = tensors(static_cast<const MlpGrads&>(g_mlp));
  grads.emplace_back(g_delta.data);
  for (auto t : tensors(static_cast<const MlpGrads&>(g_proj))) grads.push_back(t);
  const std::vector<std::span<const double>> shapes(params.begin(), params.end());
  OptimState state = make_optim_state(shapes, cfg.adam);

  auto zero = [](MlpGrads& g) {
    for (auto& l : g.layers) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  };

  const double count = static_cast<double>(target.data.size());
  MlpTape tape_mlp, tape_proj;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    const Matrix2D z = forward_batch(mlp, x, &tape_mlp);
    Matrix2D u = z;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto d = delta.row(r % positions);
      auto row = u.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = std::max(row[c] + d[c], 0.0);
    }
    const Matrix2D out = forward_batch(proj, u, &tape_proj);
    Matrix2D grad_out(out.rows, out.cols);
    double loss = 0.0;
    for (std::size_t t = 0; t < out.data.size(); ++t) {
      const double diff = out.data[t] - target.data[t];
      loss += diff * diff;
      grad_out.data[t] = 2.0 * diff / count;
    }
    loss /= count;
    if (!std::isfinite(loss)) {
      fail(ErrorKind::extraction, "extraction loss became non-finite at step " + std::to_string(step) +
                                      " (last finite loss " + std::to_string(result.final_loss) + ")");
    }
    result.final_loss = loss;
    if ((cfg.trace_every > 0 && step % cfg.trace_every == 0) || step == cfg.steps) result.loss_trace.push_back(loss);
    if (step == cfg.steps) break;

    zero(g_mlp);
    zero(g_proj);
    std::fill(g_delta.data.begin(), g_delta.data.end(), 0.0);
    Matrix2D gu = backward_batch(proj, tape_proj, grad_out, g_proj);
    for (std::size_t r = 0; r < rows; ++r) {
      auto g = gu.row(r);
      const auto ur = u.row(r);
      auto gd = g_delta.row(r % positions);
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (ur[c] <= 0.0) g[c] = 0.0;
        gd[c] += g[c];
      }
    }
    backward_batch(mlp, tape_mlp, gu, g_mlp);
    adam_update(params, grads, state);
  }
  result.key.projection = proj.layers.front();
  return result;
}

Matrix2D depermute(const EncodedImage& y, const Permutation& local, const Permutation& rho) {
  require(local.size() == y.rows.rows && rho.size() == y.rows.rows, ErrorKind::shape,
          "permutation sizes differ from the encoded row count");
  const Permutation to_y = local.inverse();
  Matrix2D out(y.rows.rows, y.rows.cols);
  for (std::size_t p = 0; p < out.rows; ++p) {
    const auto src = y.rows.row(to_y[rho[p]]);
    std::copy(src.begin(), src.end(), out.row(p).begin());
  }
  return out;
}

ExtractionResult extract_encoder(std::span<const Image> originals, std::span<const EncodedImage> encodings,
                                 const Permutation& m, std::span<const Permutation> local_perms,
                                 const Permutation& rho, const ImageSpec& spec, const ExtractionConfig& cfg,
                                 std::uint64_t seed) {
  require(originals.size() == encodings.size() && m.size() == originals.size() &&
              local_perms.size() == encodings.size(),
          ErrorKind::shape, "extraction inputs differ in length");
  const std::size_t n = cfg.max_pairs == 0 ? originals.size() : std::min(cfg.max_pairs, originals.size());
  std::vector<Matrix2D> targets;
  targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) targets.push_back(depermute(encodings[m[i]], local_perms[m[i]], rho));
  return fit_encoder(originals.first(n), targets, spec, cfg, seed);
}

double relative_residual(const EncoderKey& estimate, const EncoderKey& truth, std::span<const Image> images) {
  require(!images.empty(), ErrorKind::configuration, "residual needs at least one image");
  double num = 0.0, den = 0.0;
  for (const auto& img : images) {
    const Matrix2D a = encode_unpermuted(estimate, img);
    const Matrix2D b = encode_unpermuted(truth, img);
    for (std::size_t t = 0; t < a.data.size(); ++t) {
      num += (a.data[t] - b.data[t]) * (a.data[t] - b.data[t]);
      den += b.data[t] * b.data[t];
    }
  }
  return std::sqrt(num / den);
}

}  // namespace encattack
