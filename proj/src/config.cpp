#include "palsim/config.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

#include "palsim/field_io.hpp"

namespace palsim {

namespace {

class LineParser {
public:
  LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("config line " + std::to_string(line_) + ": " + what, line_);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> parts;
    do {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '"') {
        parts.push_back(string_value());
        continue;
      }
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
        ++pos_;
      if (pos_ == start) fail("expected a key");
      parts.emplace_back(s_.substr(start, pos_ - start));
    } while (consume('.'));
    return parts;
  }

  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string_value();
    if (c == '[') {
      ++pos_;
      nlohmann::json arr = nlohmann::json::array();
      if (consume(']')) return arr;
      do {
        if (consume(']')) return arr;  // trailing comma
        arr.push_back(value());
      } while (consume(','));
      if (!consume(']')) fail("unterminated array");
      return arr;
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
           s_[pos_] != '\t')
      ++pos_;
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::erase(tok, '_');
    if (tok.empty()) fail("missing value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "nan" ||
                          tok == "+inf" || tok == "-inf";
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (!is_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec == std::errc() && p == e) return v;
      fail("cannot parse value '" + tok + "'");
    }
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("cannot parse value '" + tok + "'");
    return v;
  }

private:
  std::string string_value() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char esc = s_[pos_++];
        switch (esc) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail(std::string("unsupported escape \\") + esc);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, std::size_t n, LineParser& lp) {
  nlohmann::json* cur = &root;
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json& next = (*cur)[path[i]];
    if (next.is_null()) next = nlohmann::json::object();
    if (!next.is_object()) lp.fail("key " + path[i] + " is not a table");
    cur = &next;
  }
  return *cur;
}

}  // namespace

nlohmann::json parse_config(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    LineParser lp(raw, line_no);
    if (lp.at_end_or_comment()) continue;
    if (lp.consume('[')) {
      const auto path = lp.key_path();
      if (!lp.consume(']')) lp.fail("expected ']'");
      if (!lp.at_end_or_comment()) lp.fail("trailing characters after table header");
      table = &descend(root, path, path.size(), lp);
      continue;
    }
    const auto path = lp.key_path();
    if (!lp.consume('=')) lp.fail("expected '='");
    nlohmann::json v = lp.value();
    if (!lp.at_end_or_comment()) lp.fail("trailing characters after value");
    nlohmann::json& parent = descend(*table, path, path.size() - 1, lp);
    if (parent.contains(path.back())) lp.fail("duplicate key " + path.back());
    parent[path.back()] = std::move(v);
  }
  return root;
}

nlohmann::json read_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

}  // namespace palsim
