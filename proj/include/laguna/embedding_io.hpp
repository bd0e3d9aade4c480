#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laguna/matrix.hpp"

namespace laguna {

// On-disk layout: "LGEMB1\n", u32 LE count, u32 LE dim, count*dim binary32 LE
// values, row-major, nothing else.
inline constexpr char kEmbeddingMagic[] = "LGEMB1\n";
inline constexpr std::size_t kEmbeddingMagicSize = 7;

struct EmbeddingFile {
  Matrix vectors;

  std::size_t count() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
};

std::vector<std::uint8_t> encode_embeddings(const Matrix& vectors);
EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes);

// expected_dim, when given, must equal the header dim (DimMismatch otherwise).
EmbeddingFile load_embeddings(const std::filesystem::path& path,
                              std::optional<std::size_t> expected_dim = std::nullopt);
void write_embeddings(const std::filesystem::path& path, const Matrix& vectors);

// `index,label_id` CSV with a header row.
using LabelRows = std::vector<std::pair<std::size_t, std::size_t>>;
LabelRows read_label_csv(const std::filesystem::path& path);
void write_label_csv(const std::filesystem::path& path, const LabelRows& rows,
                     const std::string& value_column = "label_id");

// 9 significant digits, the precision every CSV export uses.
std::string format_number(double value);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace laguna
