#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "encattack/encoder.hpp"

namespace encattack {

enum class DatasetStyle { lowfreq, blobs, import };

std::string to_string(DatasetStyle style);
DatasetStyle dataset_style_from_string(const std::string& s);

struct LowFreqConfig {
  std::size_t components = 6;
  double max_frequency = 2.0;  // cycles per image along each axis
};

struct BlobsConfig {
  std::size_t min_blobs = 2;
  std::size_t max_blobs = 6;
  double min_radius = 0.05;  // as a fraction of image width
  double max_radius = 0.25;
};

/// Each image is a sum of random sinusoids, min-max normalized to [0, 1].
/// Image i draws from its own stream, so a prefix of a larger dataset equals
/// the smaller dataset.
std::vector<Image> generate_lowfreq(const ImageSpec& spec, std::size_t count, std::uint64_t seed,
                                    const LowFreqConfig& cfg = {});

/// Sums of random Gaussian bumps, normalized to [0, 1].
std::vector<Image> generate_blobs(const ImageSpec& spec, std::size_t count, std::uint64_t seed,
                                  const BlobsConfig& cfg = {});

/// Reads every `*.pgm` (binary P5) file in `dir`, sorted by file name, scaled
/// to [0, 1]. The image spec must have one channel. Files whose size differs from
/// the image spec are all listed in one shape error.
std::vector<Image> import_pgm_dir(const ImageSpec& spec, const std::filesystem::path& dir);

void write_pgm(const Image& image, const std::filesystem::path& path);

/// Smallest pairwise L2 distance; +inf for fewer than two images.
double min_pairwise_distance(const std::vector<Image>& images);

}  // namespace encattack
