#include "encattack/blob_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "encattack/error.hpp"
#include "tensor_store.hpp"

namespace encattack {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

void write_f64_blob(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  require(out.good(), ErrorKind::io, "short write to '" + path.string() + "'");
}

std::vector<double> read_f64_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  require(bytes % sizeof(double) == 0, ErrorKind::schema,
          "'" + path.string() + "' size is not a multiple of 8 bytes");
  std::vector<double> values(bytes / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  require(in.good(), ErrorKind::io, "short read from '" + path.string() + "'");
  return values;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  require(out.good(), ErrorKind::io, "short write to '" + path.string() + "'");
}

namespace detail {

void TensorWriter::append(const std::string& name, std::vector<std::size_t> shape,
                          std::span<const double> values) {
  std::size_t count = 1;
  for (const auto s : shape) count *= s;
  require(count == values.size(), ErrorKind::shape, "tensor '" + name + "' shape does not match data");
  entries_.push_back({{"name", name},
                      {"shape", shape},
                      {"offset", data_.size() * sizeof(double)},
                      {"count", values.size()}});
  data_.insert(data_.end(), values.begin(), values.end());
}

void TensorWriter::append_mlp(const std::string& prefix, const MlpParams& params) {
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    const auto& l = params.layers[t];
    append(prefix + "layer" + std::to_string(t) + ".weight", l.weight);
    append(prefix + "layer" + std::to_string(t) + ".bias", {l.bias.size()}, l.bias);
  }
}

void TensorWriter::write_blob(const std::filesystem::path& path) const { write_f64_blob(path, data_); }

TensorReader::TensorReader(const std::filesystem::path& blob_path, const json& entries)
    : data_(read_f64_blob(blob_path)), entries_(entries), blob_path_(blob_path) {
  require(entries_.is_array(), ErrorKind::schema, "tensor list must be an array");
}

std::vector<double> TensorReader::get(const std::string& name, const std::vector<std::size_t>& shape) const {
  const std::string where = blob_path_.string() + " tensor '" + name + "'";
  for (const auto& e : entries_) {
    if (field<std::string>(e, "name", where) != name) continue;
    const auto stored_shape = field<std::vector<std::size_t>>(e, "shape", where);
    require(stored_shape == shape, ErrorKind::schema, where + ": stored shape differs from expected");
    const auto offset = field<std::size_t>(e, "offset", where);
    const auto count = field<std::size_t>(e, "count", where);
    require(offset % sizeof(double) == 0, ErrorKind::schema, where + ": misaligned offset");
    const std::size_t first = offset / sizeof(double);
    require(first + count <= data_.size(), ErrorKind::schema, where + ": extends past end of blob");
    return {data_.begin() + static_cast<std::ptrdiff_t>(first),
            data_.begin() + static_cast<std::ptrdiff_t>(first + count)};
  }
  fail(ErrorKind::schema, where + ": not present in manifest");
}

Matrix2D TensorReader::get_matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
  Matrix2D m;
  m.rows = rows;
  m.cols = cols;
  m.data = get(name, {rows, cols});
  return m;
}

MlpParams TensorReader::get_mlp(const std::string& prefix, const std::vector<std::size_t>& dims,
                                Activation act) const {
  require(dims.size() >= 2, ErrorKind::schema, "network '" + prefix + "' needs at least two widths");
  MlpParams p;
  p.activation = act;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    DenseLayer l;
    l.weight = get_matrix(prefix + "layer" + std::to_string(t) + ".weight", dims[t + 1], dims[t]);
    l.bias = get(prefix + "layer" + std::to_string(t) + ".bias", {dims[t + 1]});
    p.layers.push_back(std::move(l));
  }
  return p;
}

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::schema, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace detail

void save_mlp(const MlpParams& params, const std::filesystem::path& dir, const std::string& stem,
              const SeedLineage& lineage) {
  params.validate();
  detail::TensorWriter writer;
  writer.append_mlp("", params);
  const detail::json manifest = {
      {"format", "encattack.mlp/1"},
      {"dims", params.dims()},
      {"activation", to_string(params.activation)},
      {"lineage", {{"seed", lineage.seed}, {"origin", lineage.origin}}},
      {"blob", stem + ".bin"},
      {"dtype", "f64le"},
      {"tensors", writer.entries()},
  };
  writer.write_blob(dir / (stem + ".bin"));
  detail::write_json_file(dir / (stem + ".json"), manifest);
}

MlpParams load_mlp(const std::filesystem::path& dir, const std::string& stem, SeedLineage* lineage) {
  const auto path = dir / (stem + ".json");
  const auto manifest = detail::read_json_file(path);
  const std::string where = path.string();
  require(detail::field<std::string>(manifest, "format", where) == "encattack.mlp/1", ErrorKind::schema,
          where + ": unsupported checkpoint format");
  const auto dims = detail::field<std::vector<std::size_t>>(manifest, "dims", where);
  const auto act = activation_from_string(detail::field<std::string>(manifest, "activation", where));
  const detail::TensorReader reader(dir / detail::field<std::string>(manifest, "blob", where),
                                    manifest.at("tensors"));
  auto params = reader.get_mlp("", dims, act);
  if (lineage) {
    const auto& lin = manifest.at("lineage");
    lineage->seed = detail::field<std::uint64_t>(lin, "seed", where);
    lineage->origin = detail::field<std::string>(lin, "origin", where);
  }
  return params;
}

}  // namespace encattack
