#pragma once

// Private helpers for JSON-manifest + f64-blob storage. Not installed.

#include <cstddef>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "encattack/error.hpp"
#include "encattack/nn.hpp"

namespace encattack::detail {

using json = nlohmann::json;

class TensorWriter {
 public:
  void append(const std::string& name, std::vector<std::size_t> shape, std::span<const double> values);
  void append(const std::string& name, const Matrix2D& m) { append(name, {m.rows, m.cols}, m.data); }
  void append_mlp(const std::string& prefix, const MlpParams& params);

  /// Array of {name, shape, offset (bytes), count}.
  const json& entries() const noexcept { return entries_; }
  void write_blob(const std::filesystem::path& path) const;

 private:
  json entries_ = json::array();
  std::vector<double> data_;
};

class TensorReader {
 public:
  TensorReader(const std::filesystem::path& blob_path, const json& entries);

  std::vector<double> get(const std::string& name, const std::vector<std::size_t>& shape) const;
  Matrix2D get_matrix(const std::string& name, std::size_t rows, std::size_t cols) const;
  MlpParams get_mlp(const std::string& prefix, const std::vector<std::size_t>& dims, Activation act) const;

 private:
  std::vector<double> data_;
  json entries_;
  std::filesystem::path blob_path_;
};

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

/// Checked field access: schema error naming the file and key.
template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::schema, where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::schema, where + ": field '" + key + "' has wrong type (" + e.what() + ")");
  }
}

}  // namespace encattack::detail
