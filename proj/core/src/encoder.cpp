#include "encattack/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "encattack/error.hpp"
#include "encattack/parallel.hpp"
#include "schema.hpp"
#include "tensor_store.hpp"

namespace encattack {

void ImageSpec::validate() const {
  require(width > 0 && height > 0 && channels > 0, ErrorKind::configuration,
          "image dimensions must be positive");
  require(patches_per_side > 0, ErrorKind::configuration, "patches_per_side must be positive");
  require(width % patches_per_side == 0 && height % patches_per_side == 0, ErrorKind::configuration,
          "patches_per_side " + std::to_string(patches_per_side) + " must divide " + std::to_string(width) +
              "x" + std::to_string(height));
  require(latent_width > 0 && output_width > 0, ErrorKind::configuration, "encoder widths must be positive");
  require(depth >= 1, ErrorKind::configuration, "encoder depth must be at least 1");
}

void Image::validate() const {
  require(pixels.size() == spec.pixel_count(), ErrorKind::shape,
          "image holds " + std::to_string(pixels.size()) + " values, spec expects " +
              std::to_string(spec.pixel_count()));
  require(std::all_of(pixels.begin(), pixels.end(), [](double v) { return std::isfinite(v); }),
          ErrorKind::validation, "image contains non-finite pixels");
}

void EncoderKey::validate() const {
  spec.validate();
  patch_mlp.validate();
  require(patch_mlp.layers.size() == spec.depth, ErrorKind::shape, "patch network depth differs from spec");
  require(patch_mlp.input_width() == spec.patch_length(), ErrorKind::shape,
          "patch network input width differs from patch length");
  require(patch_mlp.output_width() == spec.latent_width, ErrorKind::shape,
          "patch network output width differs from latent width");
  require(positional.rows == spec.patch_count() && positional.cols == spec.latent_width, ErrorKind::shape,
          "positional encoding must have one latent-width row per patch");
  require(projection.weight.rows == spec.output_width && projection.weight.cols == spec.latent_width &&
              projection.bias.size() == spec.output_width,
          ErrorKind::shape, "final projection shape differs from spec");
}

EncoderKey sample_key(const ImageSpec& spec, std::uint64_t seed, const KeyDistribution& dist) {
  spec.validate();
  require(dist.first_layer_std > 0 && dist.deeper_gain > 0 && dist.bias_std >= 0 && dist.positional_std >= 0,
          ErrorKind::configuration, "key distribution scales must be positive");
  const Rng root(seed);
  const auto deeper_std = [&](std::size_t fan_in) {
    return dist.deeper == DeeperWeights::unit_normal
               ? 1.0
               : std::sqrt(dist.deeper_gain / static_cast<double>(fan_in));
  };

  EncoderKey key;
  key.spec = spec;
  key.lineage = {seed, "sample_key"};
  key.patch_mlp.activation = Activation::relu;
  std::size_t fan_in = spec.patch_length();
  for (std::size_t t = 0; t < spec.depth; ++t) {
    Rng rng = root.split(t);
    const double w_std = t == 0 ? dist.first_layer_std : deeper_std(fan_in);
    DenseLayer layer{Matrix2D(spec.latent_width, fan_in), std::vector<double>(spec.latent_width)};
    for (double& w : layer.weight.data) w = w_std * rng.normal();
    for (double& b : layer.bias) b = dist.bias_std * rng.normal();
    key.patch_mlp.layers.push_back(std::move(layer));
    fan_in = spec.latent_width;
  }
  Rng pos_rng = root.split(1000);
  key.positional = Matrix2D(spec.patch_count(), spec.latent_width);
  for (double& v : key.positional.data) v = dist.positional_std * pos_rng.normal();

  Rng proj_rng = root.split(1001);
  key.projection = {Matrix2D(spec.output_width, spec.latent_width), std::vector<double>(spec.output_width)};
  const double p_std = deeper_std(spec.latent_width);
  for (double& w : key.projection.weight.data) w = p_std * proj_rng.normal();
  for (double& b : key.projection.bias) b = dist.bias_std * proj_rng.normal();
  return key;
}

Matrix2D patchify(const Image& image) {
  image.spec.validate();
  require(image.pixels.size() == image.spec.pixel_count(), ErrorKind::shape,
          "image size does not match its spec");
  const auto& s = image.spec;
  const std::size_t pw = s.patch_width();
  const std::size_t ph = s.patch_height();
  Matrix2D patches(s.patch_count(), s.patch_length());
  for (std::size_t gr = 0; gr < s.patches_per_side; ++gr) {
    for (std::size_t gc = 0; gc < s.patches_per_side; ++gc) {
      auto out = patches.row(gr * s.patches_per_side + gc);
      std::size_t k = 0;
      for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) {
          for (std::size_t ch = 0; ch < s.channels; ++ch) out[k++] = image.at(gr * ph + r, gc * pw + c, ch);
        }
      }
    }
  }
  return patches;
}

Image unpatchify(const ImageSpec& spec, const Matrix2D& patches) {
  spec.validate();
  require(patches.rows == spec.patch_count() && patches.cols == spec.patch_length(), ErrorKind::shape,
          "patch matrix does not match spec");
  Image image{spec, std::vector<double>(spec.pixel_count())};
  const std::size_t pw = spec.patch_width();
  const std::size_t ph = spec.patch_height();
  for (std::size_t gr = 0; gr < spec.patches_per_side; ++gr) {
    for (std::size_t gc = 0; gc < spec.patches_per_side; ++gc) {
      const auto in = patches.row(gr * spec.patches_per_side + gc);
      std::size_t k = 0;
      for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) {
          for (std::size_t ch = 0; ch < spec.channels; ++ch) image.at(gr * ph + r, gc * pw + c, ch) = in[k++];
        }
      }
    }
  }
  return image;
}

std::vector<double> encode_patch(const EncoderKey& key, std::span<const double> patch) {
  require(patch.size() == key.spec.patch_length(), ErrorKind::shape,
          "patch length " + std::to_string(patch.size()) + " differs from spec patch length " +
              std::to_string(key.spec.patch_length()));
  return forward(key.patch_mlp, patch);
}

Matrix2D encode_patch_rows(const EncoderKey& key, const Matrix2D& patch_rows) {
  const std::size_t positions = key.spec.patch_count();
  require(patch_rows.cols == key.spec.patch_length(), ErrorKind::shape, "patch rows have the wrong length");
  require(patch_rows.rows % positions == 0, ErrorKind::shape, "patch rows are not a whole number of images");
  Matrix2D latent = forward_batch(key.patch_mlp, patch_rows);
  for (std::size_t r = 0; r < latent.rows; ++r) {
    const auto delta = key.positional.row(r % positions);
    auto row = latent.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = std::max(row[c] + delta[c], 0.0);
  }
  MlpParams projection;
  projection.activation = Activation::identity;
  projection.layers.push_back(key.projection);
  return forward_batch(projection, latent);
}

Matrix2D encode_unpermuted(const EncoderKey& key, const Image& image) {
  require(image.spec == key.spec, ErrorKind::shape, "image spec differs from key spec");
  return encode_patch_rows(key, patchify(image));
}

Matrix2D apply_row_permutation(const Matrix2D& rows, const Permutation& perm) {
  require(perm.size() == rows.rows, ErrorKind::shape, "permutation size differs from row count");
  Matrix2D out(rows.rows, rows.cols);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const auto src = rows.row(i);
    std::copy(src.begin(), src.end(), out.row(perm[i]).begin());
  }
  return out;
}

EncodedImage encode_image(const EncoderKey& key, const Image& image, const Permutation& perm) {
  return {apply_row_permutation(encode_unpermuted(key, image), perm)};
}

EncodingResult encode_image(const EncoderKey& key, const Image& image, std::uint64_t perm_seed) {
  Rng rng(perm_seed);
  Permutation perm = Permutation::random(key.spec.patch_count(), rng);
  EncodedImage encoded = encode_image(key, image, perm);
  return {std::move(encoded), std::move(perm)};
}

std::vector<EncodingResult> encode_dataset(const EncoderKey& key, std::span<const Image> images,
                                           std::uint64_t perm_seed, unsigned threads) {
  std::vector<EncodingResult> out(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { out[i] = encode_image(key, images[i], derive_seed(perm_seed, i)); });
  return out;
}

namespace detail {

json key_manifest(const EncoderKey& key, TensorWriter& w) {
  key.validate();
  w.append_mlp("patch.", key.patch_mlp);
  w.append("positional", key.positional);
  w.append("projection.weight", key.projection.weight);
  w.append("projection.bias", {key.projection.bias.size()}, key.projection.bias);
  return {{"spec", to_json(key.spec)},
          {"patch_dims", key.patch_mlp.dims()},
          {"activation", to_string(key.patch_mlp.activation)},
          {"lineage", {{"seed", key.lineage.seed}, {"origin", key.lineage.origin}}}};
}

EncoderKey key_from_manifest(const json& m, const TensorReader& r, const std::string& where) {
  EncoderKey key;
  require(m.is_object() && m.contains("spec") && m.contains("lineage"), ErrorKind::schema,
          where + ": key manifest needs 'spec' and 'lineage'");
  key.spec = spec_from_json(m.at("spec"), where);
  const auto dims = field<std::vector<std::size_t>>(m, "patch_dims", where);
  key.patch_mlp = r.get_mlp("patch.", dims, activation_from_string(field<std::string>(m, "activation", where)));
  key.positional = r.get_matrix("positional", key.spec.patch_count(), key.spec.latent_width);
  key.projection.weight = r.get_matrix("projection.weight", key.spec.output_width, key.spec.latent_width);
  key.projection.bias = r.get("projection.bias", {key.spec.output_width});
  key.lineage.seed = field<std::uint64_t>(m.at("lineage"), "seed", where);
  key.lineage.origin = field<std::string>(m.at("lineage"), "origin", where);
  key.validate();
  return key;
}

}  // namespace detail

void save_key(const EncoderKey& key, const std::filesystem::path& dir, const std::string& stem) {
  detail::TensorWriter w;
  detail::json manifest = detail::key_manifest(key, w);
  manifest["format"] = "encattack.key/1";
  manifest["blob"] = stem + ".bin";
  manifest["dtype"] = "f64le";
  manifest["tensors"] = w.entries();
  w.write_blob(dir / (stem + ".bin"));
  detail::write_json_file(dir / (stem + ".json"), manifest);
}

EncoderKey load_key(const std::filesystem::path& dir, const std::string& stem) {
  const auto path = dir / (stem + ".json");
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  require(detail::field<std::string>(m, "format", where) == "encattack.key/1", ErrorKind::schema,
          where + ": unsupported key format");
  const detail::TensorReader r(dir / detail::field<std::string>(m, "blob", where), m.at("tensors"));
  return detail::key_from_manifest(m, r, where);
}

void save_encodings(std::span<const EncodedImage> encodings, const ImageSpec& spec,
                    const std::filesystem::path& dir, const std::string& stem, bool seeds_withheld) {
  std::vector<double> flat;
  flat.reserve(encodings.size() * spec.patch_count() * spec.output_width);
  for (const auto& e : encodings) {
    require(e.rows.rows == spec.patch_count() && e.rows.cols == spec.output_width, ErrorKind::shape,
            "encoded image shape differs from spec");
    flat.insert(flat.end(), e.rows.data.begin(), e.rows.data.end());
  }
  write_f64_blob(dir / (stem + ".bin"), flat);
  detail::write_json_file(dir / (stem + ".json"),
                          {{"format", "encattack.encodings/1"},
                           {"spec", detail::to_json(spec)},
                           {"count", encodings.size()},
                           {"shape", {encodings.size(), spec.patch_count(), spec.output_width}},
                           {"dtype", "f64le"},
                           {"blob", stem + ".bin"},
                           {"seeds_withheld", seeds_withheld}});
}

std::vector<EncodedImage> load_encodings(const std::filesystem::path& dir, const std::string& stem,
                                         ImageSpec* spec_out) {
  const auto path = dir / (stem + ".json");
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  require(detail::field<std::string>(m, "format", where) == "encattack.encodings/1", ErrorKind::schema,
          where + ": unsupported encodings format");
  const ImageSpec spec = detail::spec_from_json(m.at("spec"), where);
  const auto count = detail::field<std::size_t>(m, "count", where);
  const auto flat = read_f64_blob(dir / detail::field<std::string>(m, "blob", where));
  const std::size_t per = spec.patch_count() * spec.output_width;
  require(flat.size() == count * per, ErrorKind::schema, where + ": blob size differs from N x a^2 x d_out");
  std::vector<EncodedImage> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].rows = Matrix2D(spec.patch_count(), spec.output_width);
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(i * per),
              flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), out[i].rows.data.begin());
    require(out[i].rows.all_finite(), ErrorKind::validation, where + ": non-finite encoding values");
  }
  if (spec_out) *spec_out = spec;
  return out;
}

void save_images(std::span<const Image> images, const ImageSpec& spec, const std::filesystem::path& dir,
                 const std::string& stem) {
  std::vector<double> flat;
  flat.reserve(images.size() * spec.pixel_count());
  for (const auto& img : images) {
    require(img.spec == spec, ErrorKind::shape, "image spec differs from dataset spec");
    flat.insert(flat.end(), img.pixels.begin(), img.pixels.end());
  }
  write_f64_blob(dir / (stem + ".bin"), flat);
  detail::write_json_file(dir / (stem + ".json"),
                          {{"format", "encattack.images/1"},
                           {"spec", detail::to_json(spec)},
                           {"count", images.size()},
                           {"shape", {images.size(), spec.height, spec.width, spec.channels}},
                           {"dtype", "f64le"},
                           {"blob", stem + ".bin"}});
}

std::vector<Image> load_images(const std::filesystem::path& dir, const std::string& stem, ImageSpec* spec_out) {
  const auto path = dir / (stem + ".json");
  const std::string where = path.string();
  const auto m = detail::read_json_file(path);
  require(detail::field<std::string>(m, "format", where) == "encattack.images/1", ErrorKind::schema,
          where + ": unsupported image format");
  const ImageSpec spec = detail::spec_from_json(m.at("spec"), where);
  const auto count = detail::field<std::size_t>(m, "count", where);
  const auto flat = read_f64_blob(dir / detail::field<std::string>(m, "blob", where));
  const std::size_t per = spec.pixel_count();
  require(flat.size() == count * per, ErrorKind::schema, where + ": blob size differs from N x h x w x c");
  std::vector<Image> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].spec = spec;
    out[i].pixels.assign(flat.begin() + static_cast<std::ptrdiff_t>(i * per),
                         flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out[i].validate();
  }
  if (spec_out) *spec_out = spec;
  return out;
}

}  // namespace encattack
