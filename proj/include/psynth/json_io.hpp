#pragma once

#include <filesystem>

#include <json.hpp>

namespace psynth {

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);

// Accepts either inline JSON text or a path to a JSON file.
nlohmann::json parse_json_arg(const std::string& text_or_path);

}  // namespace psynth
