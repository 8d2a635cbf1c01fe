#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "palsim/common.hpp"

namespace palsim {

/// Parses the TOML subset used by run configs: `[table]` and `[a.b]`
/// headers, `key = value` with bare or dotted keys, basic strings, integers,
/// floats, booleans and single-line arrays of those, `#` comments.
/// Throws FormatError with the 1-based line number.
nlohmann::json parse_config(const std::string& text);
nlohmann::json read_config(const std::filesystem::path& path);

/// `j[a][b]...` for a dotted path, or `fallback` when any part is missing.
/// Throws ValidationError naming the key when the value has the wrong type.
template <class T>
T config_value(const nlohmann::json& j, const std::string& dotted, T fallback) {
  const nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(part)) return fallback;
    cur = &(*cur)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return cur->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key " + dotted + " has the wrong type", dotted);
  }
}

}  // namespace palsim
