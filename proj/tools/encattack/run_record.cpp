#include "run_record.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "encattack/error.hpp"

namespace encattack::cli {

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx.get(), header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx.get(), content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx.get(), digest, &len) == 1;
  require(ok, ErrorKind::io, "SHA-1 computation failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string git_blob_sha1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_sha1(buf.str());
}

nlohmann::json hash_inputs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "run.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : files) out[f.filename().string()] = git_blob_sha1_file(f);
  return out;
}

void write_run_record(const std::filesystem::path& out, const std::string& command,
                      const nlohmann::json& resolved, const nlohmann::json& inputs) {
  std::filesystem::create_directories(out);
  const nlohmann::json record = {
      {"format", "encattack.run/1"}, {"command", command}, {"config", resolved}, {"inputs", inputs}};
  std::ofstream f(out / "run.json");
  f << record.dump(2) << '\n';
  require(static_cast<bool>(f), ErrorKind::io, "cannot write " + (out / "run.json").string());
}

}  // namespace encattack::cli
