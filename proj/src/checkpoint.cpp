#include "laguna/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"

namespace laguna {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorCode::IoError, "SHA-256 unavailable");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", digest[i]);
      out += buf;
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_hex(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

std::string parameter_checksum(std::span<const Parameter* const> params) {
  Sha256 h;
  for (const Parameter* p : params) {
    h.update(p->name.data(), p->name.size());
    const std::uint64_t shape[2] = {p->value.rows(), p->value.cols()};
    h.update(shape, sizeof shape);
    for (double v : p->value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      h.update(&bits, sizeof bits);
    }
  }
  return h.hex();
}

nlohmann::json save_parameters(const std::filesystem::path& dir,
                               std::span<const Parameter* const> params) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const Parameter* p : params) {
    const std::string file = p->name + ".emb";
    const auto bytes = encode_embeddings(p->value);
    write_file_bytes(dir / file, bytes);
    entries.push_back({{"name", p->name},
                       {"file", file},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"sha256", sha256_hex(bytes)}});
  }
  return entries;
}

void load_parameters(const std::filesystem::path& dir, const nlohmann::json& entries,
                     std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    const nlohmann::json* entry = nullptr;
    for (const auto& e : entries) {
      if (e.at("name").get<std::string>() == p->name) entry = &e;
    }
    if (entry == nullptr) {
      throw Error(ErrorCode::DanglingReference, "checkpoint lacks parameter " + p->name);
    }
    Matrix value = load_embeddings(dir / entry->at("file").get<std::string>()).vectors;
    if (value.rows() != p->value.rows() || value.cols() != p->value.cols()) {
      throw Error(ErrorCode::DimMismatch, "checkpoint shape differs for " + p->name);
    }
    p->value = std::move(value);
    p->zero_grad();
  }
}

std::string canonical_dump(const nlohmann::json& j) { return j.dump(); }

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DanglingReference, path.string() + " not found");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace laguna
