#pragma once

/// \file artifacts.hpp
/// File formats of the pipeline outputs and the timing-insensitive
/// comparison used to check reproducibility.

#include "cpsdre/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace cpsdre {

/// Writes `<base>.json` (dims, rank, `meta`) and `<base>.bin` (X, Y, Z, alpha
/// as little-endian doubles, column-major, in that order).
void write_factors(const std::filesystem::path& base, const CpFactors& f,
                   const nlohmann::ordered_json& meta);
CpFactors read_factors(const std::filesystem::path& base);
/// Parses a JSON file; throws std::runtime_error naming the file.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Round-trip decimal form of a double (%.17g).
std::string format_double(double v);

/// True for fields that carry wall-clock measurements: names ending in "_ms"
/// and the ratios derived from them.
bool is_timing_field(std::string_view name);

/// File content with timing fields removed: JSON keys, CSV columns and
/// Markdown table columns named by is_timing_field. Other files are
/// returned unchanged.
std::string strip_timing(const std::filesystem::path& path);

/// FNV-1a digest of strip_timing for every regular file under dir, keyed by
/// the path relative to dir.
std::map<std::string, std::string> artifact_digests(const std::filesystem::path& dir);

/// FNV-1a 64-bit hex digest.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace cpsdre
