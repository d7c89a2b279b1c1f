#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace formation {

using Json = nlohmann::json;

enum class FloatStyle {
  Fixed6,     // "%.6f", used by datasets
  Precise17,  // "%.17g", used by model weights
};

/// Compact JSON with sorted keys and a fixed float format, so that equal
/// values always produce equal bytes. Terminated by a newline.
std::string to_canonical_json(const Json& value, FloatStyle style);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Throws NotFoundError for a missing file and ParseError for malformed JSON.
Json read_json_file(const std::filesystem::path& path);

}  // namespace formation
