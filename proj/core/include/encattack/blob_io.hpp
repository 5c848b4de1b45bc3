#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "encattack/nn.hpp"

namespace encattack {

/// Raw little-endian IEEE-754 binary64 arrays.
void write_f64_blob(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_blob(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Where a parameter set came from: the seed it was drawn with and a short tag.
struct SeedLineage {
  std::uint64_t seed = 0;
  std::string origin;

  friend bool operator==(const SeedLineage&, const SeedLineage&) = default;
};

/// Checkpoint as `<stem>.json` (layer dims, activation, lineage, tensor
/// offsets) plus `<stem>.bin` (the f64 blob).
void save_mlp(const MlpParams& params, const std::filesystem::path& dir, const std::string& stem,
              const SeedLineage& lineage);
MlpParams load_mlp(const std::filesystem::path& dir, const std::string& stem,
                   SeedLineage* lineage = nullptr);

}  // namespace encattack
