#pragma once

// study.toml: the study configuration snapshot. Only the flat subset of TOML
// the snapshot needs is understood: `key = value` lines with strings,
// integers, booleans and integer arrays, plus `#` comments.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/task_forge.hpp"

namespace semcoh {

using TomlValue = std::variant<std::string, std::int64_t, bool, std::vector<std::int64_t>>;
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string toml_error(const std::string& where, const std::string& what) { return where + ": " + what; }

inline std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline std::string parse_toml_string(std::string_view v, const std::string& where) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw Error(ErrorCode::parse, toml_error(where, "bad string"));
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) {
      const char e = v[++i];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: throw Error(ErrorCode::parse, toml_error(where, "unsupported escape"));
      }
    } else {
      out.push_back(v[i]);
    }
  }
  return out;
}

}  // namespace detail

inline TomlTable parse_toml(const std::string& text, const std::string& source = "study.toml") {
  TomlTable table;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto where = source + ":" + std::to_string(line_no);
    const auto line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') throw Error(ErrorCode::parse, detail::toml_error(where, "tables are not supported"));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::parse, detail::toml_error(where, "expected key = value"));
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw Error(ErrorCode::parse, detail::toml_error(where, "expected key = value"));
    TomlValue parsed;
    if (value.front() == '"') {
      parsed = detail::parse_toml_string(value, where);
    } else if (value == "true" || value == "false") {
      parsed = value == "true";
    } else if (value.front() == '[') {
      if (value.back() != ']') throw Error(ErrorCode::parse, detail::toml_error(where, "unterminated array"));
      std::vector<std::int64_t> items;
      std::string_view body = value.substr(1, value.size() - 2);
      while (!detail::trim(body).empty()) {
        const auto comma = body.find(',');
        const auto item = detail::trim(body.substr(0, comma));
        if (!item.empty()) {
          const auto n = detail::parse_int(item);
          if (!n) throw Error(ErrorCode::parse, detail::toml_error(where, "arrays hold integers only"));
          items.push_back(*n);
        }
        if (comma == std::string_view::npos) break;
        body.remove_prefix(comma + 1);
      }
      parsed = std::move(items);
    } else {
      const auto n = detail::parse_int(value);
      if (!n) throw Error(ErrorCode::parse, detail::toml_error(where, "unsupported value"));
      parsed = *n;
    }
    if (!table.emplace(key, std::move(parsed)).second) {
      throw Error(ErrorCode::parse, detail::toml_error(where, "duplicate key " + key));
    }
  }
  return table;
}

inline std::string toml_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string to_toml(const StudyConfig& c) {
  std::ostringstream out;
  out << "# semcoh study configuration snapshot\n";
  out << "study_id = " << toml_quote(c.study_id) << '\n';
  out << "seed = " << static_cast<std::int64_t>(c.seed) << '\n';
  out << "reference_size = " << c.reference_size << '\n';
  out << "hits_per_class = " << c.hits_per_class << '\n';
  out << "annotators_per_hit = " << c.annotators_per_hit << '\n';
  out << "negative_mode = " << toml_quote(to_string(c.negative_mode)) << '\n';
  out << "selected_classes = [";
  for (std::size_t i = 0; i < c.selected_classes.size(); ++i) out << (i ? ", " : "") << c.selected_classes[i];
  out << "]\n";
  if (c.rate_limit_per_class_per_day) out << "rate_limit_per_class_per_day = " << *c.rate_limit_per_class_per_day << '\n';
  return out.str();
}

/// Applies the keys of a table onto a config; unknown keys are errors.
inline void apply_toml(StudyConfig& c, const TomlTable& t) {
  auto as_int = [&](const std::string& key) -> std::int64_t {
    const auto* v = std::get_if<std::int64_t>(&t.at(key));
    if (!v || *v < 0) throw Error(ErrorCode::parse, "study.toml: " + key + " must be a non-negative integer");
    return *v;
  };
  for (const auto& [key, value] : t) {
    if (key == "study_id") {
      const auto* s = std::get_if<std::string>(&value);
      if (!s) throw Error(ErrorCode::parse, "study.toml: study_id must be a string");
      c.study_id = *s;
    } else if (key == "seed") {
      // Seeds above 2^63 are stored as their two's-complement int64.
      const auto* v = std::get_if<std::int64_t>(&value);
      if (!v) throw Error(ErrorCode::parse, "study.toml: seed must be an integer");
      c.seed = static_cast<std::uint64_t>(*v);
    } else if (key == "reference_size") {
      c.reference_size = static_cast<std::size_t>(as_int(key));
    } else if (key == "hits_per_class") {
      c.hits_per_class = static_cast<std::size_t>(as_int(key));
    } else if (key == "annotators_per_hit") {
      c.annotators_per_hit = static_cast<std::size_t>(as_int(key));
    } else if (key == "negative_mode") {
      const auto* s = std::get_if<std::string>(&value);
      if (!s) throw Error(ErrorCode::parse, "study.toml: negative_mode must be a string");
      c.negative_mode = parse_negative_mode(*s);
    } else if (key == "selected_classes") {
      const auto* v = std::get_if<std::vector<std::int64_t>>(&value);
      if (!v) throw Error(ErrorCode::parse, "study.toml: selected_classes must be an integer array");
      c.selected_classes.assign(v->begin(), v->end());
    } else if (key == "rate_limit_per_class_per_day") {
      c.rate_limit_per_class_per_day = static_cast<std::size_t>(as_int(key));
    } else {
      throw Error(ErrorCode::parse, "study.toml: unknown key " + key);
    }
  }
}

inline StudyConfig load_study_config(const fs::path& path) {
  auto in = detail::open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  StudyConfig c;
  apply_toml(c, parse_toml(buf.str(), path.string()));
  return c;
}

inline void write_study_config(const fs::path& path, const StudyConfig& c) {
  auto out = detail::open_output(path);
  out << to_toml(c);
}

}  // namespace semcoh
