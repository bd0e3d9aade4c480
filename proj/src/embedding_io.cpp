#include "laguna/embedding_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "laguna/error.hpp"

namespace laguna {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[offset + k]) << (8 * k);
  return v;
}

constexpr std::size_t kHeaderSize = kEmbeddingMagicSize + 8;

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const Matrix& vectors) {
  if (vectors.rows() == 0 || vectors.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "embedding files need count >= 1 and dim >= 1");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 4 * vectors.size());
  out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + kEmbeddingMagicSize);
  put_u32(out, static_cast<std::uint32_t>(vectors.rows()));
  put_u32(out, static_cast<std::uint32_t>(vectors.cols()));
  for (double v : vectors.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFinite, "value overflows binary32");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kEmbeddingMagicSize ||
      std::memcmp(bytes.data(), kEmbeddingMagic, kEmbeddingMagicSize) != 0) {
    throw Error(ErrorCode::BadMagic, "not an LGEMB1 embedding file");
  }
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::TruncatedFile, "header cut short");
  const std::size_t count = get_u32(bytes, kEmbeddingMagicSize);
  const std::size_t dim = get_u32(bytes, kEmbeddingMagicSize + 4);
  if (count == 0 || dim == 0) throw Error(ErrorCode::DimMismatch, "count and dim must be >= 1");
  const std::size_t expected = kHeaderSize + 4 * count * dim;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::TruncatedFile, "expected " + std::to_string(expected) + " bytes, got " +
                                              std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw Error(ErrorCode::TruncatedFile, "trailing bytes after payload");
  std::vector<double> data(count * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i)));
  }
  return EmbeddingFile{Matrix(count, dim, std::move(data))};
}

EmbeddingFile load_embeddings(const std::filesystem::path& path,
                              std::optional<std::size_t> expected_dim) {
  EmbeddingFile file = decode_embeddings(read_file_bytes(path));
  if (expected_dim && *expected_dim != file.dim()) {
    throw Error(ErrorCode::DimMismatch, path.string() + ": header dim " +
                                            std::to_string(file.dim()) + ", manifest says " +
                                            std::to_string(*expected_dim));
  }
  return file;
}

void write_embeddings(const std::filesystem::path& path, const Matrix& vectors) {
  write_file_bytes(path, encode_embeddings(vectors));
}

LabelRows read_label_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  LabelRows rows;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      std::size_t used = 0;
      const auto index = std::stoull(line.substr(0, comma), &used);
      const auto label = std::stoull(line.substr(comma + 1), &used);
      rows.emplace_back(index, label);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) +
                                             ": expected `index,label`");
    }
  }
  return rows;
}

void write_label_csv(const std::filesystem::path& path, const LabelRows& rows,
                     const std::string& value_column) {
  std::ostringstream out;
  out << "index," << value_column << '\n';
  for (const auto& [index, label] : rows) out << index << ',' << label << '\n';
  write_text_file(path, out.str());
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace laguna
