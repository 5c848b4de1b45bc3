#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "encattack/dataset.hpp"
#include "encattack/encoder.hpp"
#include "encattack/error.hpp"
#include "test_support.hpp"

using namespace encattack;
using encattack::testing::random_image;
using encattack::testing::TempDir;

namespace {

ImageSpec small_spec() {
  ImageSpec s;
  s.width = 8;
  s.height = 8;
  s.patches_per_side = 2;
  s.latent_width = 6;
  s.output_width = 5;
  s.depth = 2;
  return s;
}

template <typename F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(ImageSpec, GridMustTileImage) {
  ImageSpec s;
  s.patches_per_side = 3;
  EXPECT_EQ(error_kind_of([&] { s.validate(); }), ErrorKind::configuration);
  s = ImageSpec{};
  s.depth = 0;
  EXPECT_EQ(error_kind_of([&] { s.validate(); }), ErrorKind::configuration);
  EXPECT_NO_THROW(ImageSpec{}.validate());
}

TEST(SampleKey, DeterministicAndSized) {
  const ImageSpec spec;
  const EncoderKey a = sample_key(spec, 5);
  EXPECT_EQ(a, sample_key(spec, 5));
  EXPECT_NE(a, sample_key(spec, 6));
  EXPECT_EQ(a.positional.rows, 16u);
  EXPECT_EQ(a.positional.cols, spec.latent_width);
  EXPECT_EQ(a.patch_mlp.layers.size(), spec.depth);
  EXPECT_EQ(a.projection.weight.rows, spec.output_width);
}

TEST(SampleKey, PositionalEntriesAreStandardNormal) {
  const ImageSpec spec;
  std::vector<double> all;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const EncoderKey k = sample_key(spec, seed);
    all.insert(all.end(), k.positional.data.begin(), k.positional.data.end());
  }
  ASSERT_GE(all.size(), 100000u);
  const double n = static_cast<double>(all.size());
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double var = 0.0;
  for (const double v : all) var += (v - mean) * (v - mean);
  var /= n;
  EXPECT_LT(std::abs(mean), 3.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(SampleKey, UnitNormalDistributionUsesUnitVarianceEverywhere) {
  const ImageSpec spec;
  std::vector<double> w;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EncoderKey k = sample_key(spec, seed, KeyDistribution::unit_normal());
    w.insert(w.end(), k.patch_mlp.layers[1].weight.data.begin(), k.patch_mlp.layers[1].weight.data.end());
    w.insert(w.end(), k.projection.weight.data.begin(), k.projection.weight.data.end());
  }
  double sq = 0.0;
  for (const double v : w) sq += v * v;
  EXPECT_NEAR(sq / static_cast<double>(w.size()), 1.0, 0.05);
}

TEST(SampleKey, FanInScaledDeeperLayers) {
  const ImageSpec spec;
  double sq = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EncoderKey k = sample_key(spec, seed);
    for (const double v : k.patch_mlp.layers[1].weight.data) {
      sq += v * v;
      ++n;
    }
  }
  EXPECT_NEAR(sq / static_cast<double>(n), 2.0 / 64.0, 0.1 * 2.0 / 64.0);
}

TEST(Patchify, TwoByTwoImage) {
  ImageSpec spec;
  spec.width = 2;
  spec.height = 2;
  spec.patches_per_side = 2;
  const Image img{spec, {1, 2, 3, 4}};
  const Matrix2D p = patchify(img);
  ASSERT_EQ(p.rows, 4u);
  ASSERT_EQ(p.cols, 1u);
  EXPECT_EQ(p.data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(Patchify, RowMajorInsidePatch) {
  ImageSpec spec;
  spec.width = 4;
  spec.height = 4;
  spec.patches_per_side = 2;
  Image img{spec, std::vector<double>(16)};
  std::iota(img.pixels.begin(), img.pixels.end(), 0.0);
  const Matrix2D p = patchify(img);
  // Patch 1 is the top-right 2x2 block.
  EXPECT_EQ(std::vector<double>(p.row(1).begin(), p.row(1).end()), (std::vector<double>{2, 3, 6, 7}));
  EXPECT_EQ(std::vector<double>(p.row(2).begin(), p.row(2).end()), (std::vector<double>{8, 9, 12, 13}));
}

TEST(Patchify, RoundTripAndCount) {
  const ImageSpec spec;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Image img = random_image(spec, rng);
    const Matrix2D p = patchify(img);
    EXPECT_EQ(p.rows, 16u);
    EXPECT_EQ(p.cols, 64u);
    EXPECT_EQ(unpatchify(spec, p), img);
  }
}

TEST(Patchify, WrongSizeIsShapeError) {
  const ImageSpec spec;
  const Image bad{spec, std::vector<double>(10)};
  EXPECT_EQ(error_kind_of([&] { patchify(bad); }), ErrorKind::shape);
}

TEST(EncodePatch, DepthOneIdentityReturnsPatch) {
  ImageSpec spec;
  spec.width = 2;
  spec.height = 2;
  spec.patches_per_side = 1;
  spec.latent_width = 4;
  spec.output_width = 4;
  spec.depth = 1;
  EncoderKey key = sample_key(spec, 1);
  key.patch_mlp.layers[0] = {Matrix2D::identity(4), std::vector<double>(4, 0.0)};
  const std::vector<double> patch = {0.1, -0.2, 0.3, 0.4};
  EXPECT_EQ(encode_patch(key, patch), patch);
}

TEST(EncodePatch, ZeroPatchFollowsBiasPath) {
  const ImageSpec spec = small_spec();
  const EncoderKey key = sample_key(spec, 3);
  const std::vector<double> zero(spec.patch_length(), 0.0);
  // Hand unroll: h1 = relu(b1), z = A2 h1 + b2.
  const auto& l1 = key.patch_mlp.layers[0];
  const auto& l2 = key.patch_mlp.layers[1];
  std::vector<double> h1(l1.bias.size());
  for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = std::max(l1.bias[i], 0.0);
  std::vector<double> want(l2.bias);
  for (std::size_t r = 0; r < want.size(); ++r) want[r] += dot(l2.weight.row(r), h1);
  const auto got = encode_patch(key, zero);
  ASSERT_EQ(got.size(), spec.latent_width);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(EncodeImage, UnpermutedRowsFollowTheFormula) {
  const ImageSpec spec = small_spec();
  const EncoderKey key = sample_key(spec, 4);
  Rng rng(2);
  const Image img = random_image(spec, rng);
  const Matrix2D rows = encode_unpermuted(key, img);
  const Matrix2D patches = patchify(img);
  for (std::size_t i = 0; i < spec.patch_count(); ++i) {
    auto z = encode_patch(key, patches.row(i));
    for (std::size_t c = 0; c < z.size(); ++c) z[c] = std::max(z[c] + key.positional(i, c), 0.0);
    for (std::size_t r = 0; r < spec.output_width; ++r) {
      const double want = key.projection.bias[r] + dot(key.projection.weight.row(r), z);
      EXPECT_NEAR(rows(i, r), want, 1e-12);
    }
  }
}

TEST(EncodeImage, IdentityPermutationKeepsOrder) {
  const ImageSpec spec = small_spec();
  const EncoderKey key = sample_key(spec, 4);
  Rng rng(3);
  const Image img = random_image(spec, rng);
  EXPECT_EQ(encode_image(key, img, Permutation::identity(spec.patch_count())).rows, encode_unpermuted(key, img));
}

TEST(EncodeImage, RowPiOfIHoldsPatchI) {
  const ImageSpec spec;
  const EncoderKey key = sample_key(spec, 4);
  Rng rng(4);
  const Image img = random_image(spec, rng);
  const EncodingResult res = encode_image(key, img, 77);
  const Matrix2D plain = encode_unpermuted(key, img);
  ASSERT_EQ(res.permutation.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto a = res.encoded.rows.row(res.permutation[i]);
    const auto b = plain.row(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  EXPECT_EQ(encode_image(key, img, 77).encoded, res.encoded);
}

TEST(EncodeImage, SameImageTwiceIsIdentical) {
  const ImageSpec spec;
  const EncoderKey key = sample_key(spec, 9);
  Rng rng(5);
  const Image img = random_image(spec, rng);
  EXPECT_EQ(encode_unpermuted(key, img), encode_unpermuted(key, img));
}

TEST(EncodeDataset, ParallelMatchesSerial) {
  const ImageSpec spec;
  const EncoderKey key = sample_key(spec, 2);
  const auto images = generate_lowfreq(spec, 24, 8);
  const auto serial = encode_dataset(key, images, 31, 1);
  const auto parallel = encode_dataset(key, images, 31, 4);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].encoded, parallel[i].encoded);
    EXPECT_EQ(serial[i].permutation, parallel[i].permutation);
  }
}

TEST(PositionSignal, SamePositionInnerProductsDominate) {
  const ImageSpec spec;
  std::vector<double> same, cross;
  for (std::uint64_t k = 0; k < 32; ++k) {
    const EncoderKey key = sample_key(spec, 1000 + k);
    const auto images = generate_lowfreq(spec, 40, 2000 + k);
    std::vector<Matrix2D> enc;
    for (const auto& img : images) enc.push_back(encode_unpermuted(key, img));
    for (std::size_t i = 0; i + 1 < enc.size(); i += 2) {
      for (std::size_t p = 0; p < 16; ++p) {
        same.push_back(dot(enc[i].row(p), enc[i + 1].row(p)));
        cross.push_back(dot(enc[i].row(p), enc[i + 1].row((p + 1 + i % 15) % 16)));
      }
    }
  }
  ASSERT_GE(same.size(), 10000u);
  auto mean_var = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [ms, vs] = mean_var(same);
  const auto [mc, vc] = mean_var(cross);
  const double se = std::sqrt(vs / static_cast<double>(same.size()) + vc / static_cast<double>(cross.size()));
  EXPECT_GE(ms - mc, 5.0 * se);
}

TEST(KeyIo, RoundTripIsExact) {
  TempDir dir;
  const EncoderKey key = sample_key(ImageSpec{}, 12);
  save_key(key, dir.path(), "key");
  EXPECT_EQ(load_key(dir.path(), "key"), key);
}

TEST(EncodingIo, RoundTripAndWithheldFlag) {
  TempDir dir;
  const ImageSpec spec = small_spec();
  const EncoderKey key = sample_key(spec, 1);
  const auto images = generate_lowfreq(spec, 5, 3);
  std::vector<EncodedImage> enc;
  for (const auto& r : encode_dataset(key, images, 4)) enc.push_back(r.encoded);
  save_encodings(enc, spec, dir.path(), "enc", true);
  ImageSpec loaded_spec;
  EXPECT_EQ(load_encodings(dir.path(), "enc", &loaded_spec), enc);
  EXPECT_EQ(loaded_spec, spec);
  EXPECT_NE(read_text_file(dir / "enc.json").find("\"seeds_withheld\": true"), std::string::npos);
}

TEST(EncodingIo, TruncatedBlobIsRejected) {
  TempDir dir;
  const ImageSpec spec = small_spec();
  const auto images = generate_lowfreq(spec, 3, 3);
  save_images(images, spec, dir.path(), "img");
  std::filesystem::resize_file(dir / "img.bin", 8);
  EXPECT_THROW(load_images(dir.path(), "img"), Error);
}

TEST(Dataset, LowfreqIsDeterministicNormalizedAndPrefixStable) {
  const ImageSpec spec;
  const auto a = generate_lowfreq(spec, 20, 9);
  EXPECT_EQ(a, generate_lowfreq(spec, 20, 9));
  const auto b = generate_lowfreq(spec, 5, 9);
  EXPECT_TRUE(std::equal(b.begin(), b.end(), a.begin()));
  for (const auto& img : a) {
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    EXPECT_DOUBLE_EQ(*lo, 0.0);
    EXPECT_DOUBLE_EQ(*hi, 1.0);
  }
}

TEST(Dataset, ThousandLowfreqImagesArePairwiseDistinct) {
  const auto images = generate_lowfreq(ImageSpec{}, 1000, 10);
  EXPECT_GT(min_pairwise_distance(images), 0.0);
}

TEST(Dataset, EmptyDatasetWritesValidManifest) {
  TempDir dir;
  const ImageSpec spec;
  const auto images = generate_lowfreq(spec, 0, 1);
  EXPECT_TRUE(images.empty());
  save_images(images, spec, dir.path(), "images");
  EXPECT_TRUE(load_images(dir.path(), "images").empty());
}

TEST(Dataset, BlobsInUnitRange) {
  const auto images = generate_blobs(ImageSpec{}, 10, 4);
  for (const auto& img : images) {
    for (const double v : img.pixels) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_GT(min_pairwise_distance(images), 0.0);
}

TEST(Dataset, PgmRoundTripAndMismatchListing) {
  TempDir dir;
  const ImageSpec spec;
  const auto images = generate_lowfreq(spec, 3, 5);
  for (std::size_t i = 0; i < images.size(); ++i) write_pgm(images[i], dir / ("img" + std::to_string(i) + ".pgm"));
  const auto loaded = import_pgm_dir(spec, dir.path());
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(encattack::testing::max_abs_diff(loaded[i].pixels, images[i].pixels), 0.5 / 255.0 + 1e-12);
  }
  {
    std::ofstream f(dir / "bad1.pgm", std::ios::binary);
    f << "P5\n4 4\n255\n" << std::string(16, '\0');
  }
  {
    std::ofstream f(dir / "bad2.pgm", std::ios::binary);
    f << "P5\n8 8\n255\n" << std::string(64, '\0');
  }
  try {
    import_pgm_dir(spec, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad1.pgm"), std::string::npos);
    EXPECT_NE(msg.find("bad2.pgm"), std::string::npos);
  }
}
