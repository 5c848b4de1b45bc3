#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace encattack::cli {

/// SHA-1 of "blob <size>\0<content>", as git computes object ids.
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

/// Hashes every regular file directly inside `dir`, sorted by name.
nlohmann::json hash_inputs(const std::filesystem::path& dir);

/// Writes `<out>/run.json` with the command, the resolved configuration and
/// the input hashes.
void write_run_record(const std::filesystem::path& out, const std::string& command,
                      const nlohmann::json& resolved, const nlohmann::json& inputs);

}  // namespace encattack::cli
