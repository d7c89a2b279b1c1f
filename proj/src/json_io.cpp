#include "formation/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "formation/error.hpp"

namespace formation {
namespace {

void write_number(std::string& out, double v, FloatStyle style) {
  if (!std::isfinite(v)) throw InvariantError("non-finite number in JSON output");
  char buf[64];
  if (style == FloatStyle::Fixed6) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // avoid "-0.000000"
    if (std::string_view(buf) == "-0.000000") std::snprintf(buf, sizeof buf, "%.6f", 0.0);
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  }
  out += buf;
}

void write_value(std::string& out, const Json& v, FloatStyle style) {
  switch (v.type()) {
    case Json::value_t::null:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(v.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(v.get<std::uint64_t>());
      break;
    case Json::value_t::number_float:
      write_number(out, v.get<double>(), style);
      break;
    case Json::value_t::string:
      out += Json(v.get<std::string>()).dump();
      break;
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : v) {
        if (!first) out += ',';
        first = false;
        write_value(out, item, style);
      }
      out += ']';
      break;
    }
    case Json::value_t::object: {
      // nlohmann::json objects are std::map backed, so iteration is sorted
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += Json(it.key()).dump();
        out += ':';
        write_value(out, it.value(), style);
      }
      out += '}';
      break;
    }
    default:
      throw InvariantError("unsupported JSON value type");
  }
}

}  // namespace

std::string to_canonical_json(const Json& value, FloatStyle style) {
  std::string out;
  write_value(out, value, style);
  out += '\n';
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io_error", "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace formation
