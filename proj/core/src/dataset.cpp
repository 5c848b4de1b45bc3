#include "encattack/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "encattack/error.hpp"
#include "encattack/rng.hpp"

namespace encattack {
namespace {

void normalize_unit(Image& img) {
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : img.pixels) v = range > 0.0 ? (v - min) / range : 0.0;
}

Image lowfreq_image(const ImageSpec& spec, Rng rng, const LowFreqConfig& cfg) {
  Image img{spec, std::vector<double>(spec.pixel_count(), 0.0)};
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    for (std::size_t t = 0; t < cfg.components; ++t) {
      const double fx = rng.uniform(-cfg.max_frequency, cfg.max_frequency);
      const double fy = rng.uniform(-cfg.max_frequency, cfg.max_frequency);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = rng.normal();
      for (std::size_t r = 0; r < spec.height; ++r) {
        for (std::size_t c = 0; c < spec.width; ++c) {
          const double x = static_cast<double>(c) / static_cast<double>(spec.width);
          const double y = static_cast<double>(r) / static_cast<double>(spec.height);
          img.at(r, c, ch) += amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
        }
      }
    }
  }
  normalize_unit(img);
  return img;
}

Image blobs_image(const ImageSpec& spec, Rng rng, const BlobsConfig& cfg) {
  Image img{spec, std::vector<double>(spec.pixel_count(), 0.0)};
  const auto w = static_cast<double>(spec.width);
  const auto h = static_cast<double>(spec.height);
  const std::size_t count = cfg.min_blobs + rng.below(cfg.max_blobs - cfg.min_blobs + 1);
  for (std::size_t b = 0; b < count; ++b) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double radius = rng.uniform(cfg.min_radius, cfg.max_radius) * w;
    const double amp = rng.uniform(-1.0, 1.0);
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      const double ch_amp = amp * rng.uniform(0.5, 1.0);
      for (std::size_t r = 0; r < spec.height; ++r) {
        for (std::size_t c = 0; c < spec.width; ++c) {
          const double dx = static_cast<double>(c) - cx;
          const double dy = static_cast<double>(r) - cy;
          img.at(r, c, ch) += ch_amp * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
        }
      }
    }
  }
  normalize_unit(img);
  return img;
}

template <typename Make>
std::vector<Image> generate_distinct(const ImageSpec& spec, std::size_t count, std::uint64_t seed, Make make) {
  spec.validate();
  const Rng root(seed);
  std::vector<Image> out;
  out.reserve(count);
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const Rng item = root.split(i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      require(attempt < 1000, ErrorKind::configuration, "cannot draw a distinct image; the style is degenerate");
      Image img = make(attempt == 0 ? item : item.split(attempt));
      if (seen.insert(img.pixels).second) {
        out.push_back(std::move(img));
        break;
      }
    }
  }
  return out;
}

}  // namespace

std::string to_string(DatasetStyle style) {
  switch (style) {
    case DatasetStyle::lowfreq: return "lowfreq";
    case DatasetStyle::blobs: return "blobs";
    case DatasetStyle::import: return "import";
  }
  return "lowfreq";
}

DatasetStyle dataset_style_from_string(const std::string& s) {
  if (s == "lowfreq") return DatasetStyle::lowfreq;
  if (s == "blobs") return DatasetStyle::blobs;
  if (s == "import") return DatasetStyle::import;
  fail(ErrorKind::configuration, "unknown dataset style '" + s + "' (expected lowfreq, blobs or import)");
}

std::vector<Image> generate_lowfreq(const ImageSpec& spec, std::size_t count, std::uint64_t seed,
                                    const LowFreqConfig& cfg) {
  require(cfg.components > 0 && cfg.max_frequency > 0.0, ErrorKind::configuration,
          "lowfreq needs at least one component and a positive frequency bound");
  return generate_distinct(spec, count, seed, [&](Rng rng) { return lowfreq_image(spec, rng, cfg); });
}

std::vector<Image> generate_blobs(const ImageSpec& spec, std::size_t count, std::uint64_t seed,
                                  const BlobsConfig& cfg) {
  require(cfg.min_blobs >= 1 && cfg.max_blobs >= cfg.min_blobs, ErrorKind::configuration,
          "blobs needs 1 <= min_blobs <= max_blobs");
  require(cfg.min_radius > 0.0 && cfg.max_radius >= cfg.min_radius, ErrorKind::configuration,
          "blobs needs 0 < min_radius <= max_radius");
  return generate_distinct(spec, count, seed, [&](Rng rng) { return blobs_image(spec, rng, cfg); });
}

namespace {

struct PgmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
};

// Reads the next header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

std::vector<Image> import_pgm_dir(const ImageSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  require(spec.channels == 1, ErrorKind::configuration, "PGM import needs a single-channel spec");
  require(std::filesystem::is_directory(dir), ErrorKind::io, "'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Image> out;
  std::vector<std::string> problems;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      problems.push_back(path.filename().string() + ": cannot open");
      continue;
    }
    PgmHeader hdr;
    if (pgm_token(in) != "P5") {
      problems.push_back(path.filename().string() + ": not a binary (P5) PGM");
      continue;
    }
    try {
      hdr.width = std::stoul(pgm_token(in));
      hdr.height = std::stoul(pgm_token(in));
      hdr.maxval = std::stoul(pgm_token(in));
    } catch (const std::exception&) {
      problems.push_back(path.filename().string() + ": malformed header");
      continue;
    }
    if (hdr.width != spec.width || hdr.height != spec.height) {
      problems.push_back(path.filename().string() + ": " + std::to_string(hdr.width) + "x" +
                         std::to_string(hdr.height) + ", expected " + std::to_string(spec.width) + "x" +
                         std::to_string(spec.height));
      continue;
    }
    if (hdr.maxval == 0 || hdr.maxval > 65535) {
      problems.push_back(path.filename().string() + ": maxval out of range");
      continue;
    }
    const std::size_t bytes_per = hdr.maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(spec.pixel_count() * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      problems.push_back(path.filename().string() + ": truncated pixel data");
      continue;
    }
    Image img{spec, std::vector<double>(spec.pixel_count())};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const std::size_t v = bytes_per == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1];
      img.pixels[i] = static_cast<double>(v) / static_cast<double>(hdr.maxval);
    }
    out.push_back(std::move(img));
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << problems.size() << " PGM file(s) rejected:";
    for (const auto& p : problems) msg << "\n  " << p;
    fail(ErrorKind::shape, msg.str());
  }
  return out;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  require(image.spec.channels == 1, ErrorKind::configuration, "PGM export needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path.string() + "'");
  out << "P5\n" << image.spec.width << " " << image.spec.height << "\n255\n";
  for (const double v : image.pixels) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
}

double min_pairwise_distance(const std::vector<Image>& images) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      const auto& a = images[i].pixels;
      const auto& b = images[j].pixels;
      require(a.size() == b.size(), ErrorKind::shape, "images in one dataset differ in size");
      double d2 = 0.0;
      for (std::size_t t = 0; t < a.size(); ++t) d2 += (a[t] - b[t]) * (a[t] - b[t]);
      best = std::min(best, std::sqrt(d2));
    }
  }
  return best;
}

}  // namespace encattack
