#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "laguna/autodiff.hpp"

namespace laguna {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

// Hash over names, shapes and raw double bits, in list order.
std::string parameter_checksum(std::span<const Parameter* const> params);

// Writes one embedding file per parameter (`<name>.emb`) into `dir` and
// returns descriptor entries {name, file, rows, cols, sha256}. Values are
// stored as binary32.
nlohmann::json save_parameters(const std::filesystem::path& dir,
                               std::span<const Parameter* const> params);

// Restores values by name from descriptor entries; shapes must match.
void load_parameters(const std::filesystem::path& dir, const nlohmann::json& entries,
                     std::span<Parameter* const> params);

// Stable serialization used for config hashes.
std::string canonical_dump(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

inline constexpr const char* kLagunaVersion = "0.1.0";

}  // namespace laguna
