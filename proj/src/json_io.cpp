#include <fstream>
#include <sstream>

#include "psynth/error.hpp"
#include "psynth/json_io.hpp"

namespace psynth {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

nlohmann::json parse_json_arg(const std::string& text_or_path) {
  const auto first = text_or_path.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text_or_path[first] == '{' || text_or_path[first] == '[')) {
    try {
      return nlohmann::json::parse(text_or_path);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::InvalidArgument, std::string("inline JSON: ") + e.what());
    }
  }
  return read_json_file(text_or_path);
}

}  // namespace psynth
