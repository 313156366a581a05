#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "convsum/error.hpp"
#include "convsum/tokenizer.hpp"

namespace convsum {

/// One corpus record. Sentences are kept when the JSONL field is an array
/// of strings; a plain string field is one unsegmented text.
struct Record {
  std::vector<std::string> source;
  std::vector<std::string> summary;

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " " : "") + parts[i];
    return out;
  }
  std::string source_text() const { return join(source); }
  std::string summary_text() const { return join(summary); }
};

namespace detail {

inline std::vector<std::string> text_field(const nlohmann::json& obj, const char* name, const std::string& where) {
  auto it = obj.find(name);
  if (it == obj.end()) throw InputError(InputError::Kind::corpus, where + "missing field \"" + name + "\"");
  if (it->is_string()) return {it->get<std::string>()};
  if (it->is_array()) {
    std::vector<std::string> out;
    for (const auto& s : *it) {
      if (!s.is_string())
        throw InputError(InputError::Kind::corpus, where + "field \"" + name + "\" must hold strings");
      out.push_back(s.get<std::string>());
    }
    return out;
  }
  throw InputError(InputError::Kind::corpus, where + "field \"" + name + "\" must be a string or array of strings");
}

}  // namespace detail

/// Reads JSONL with "source" and "summary" fields. Blank lines are skipped;
/// any malformed line is an error naming the file and line.
inline std::vector<Record> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::io, "cannot open corpus '" + path.string() + "'");
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(InputError::Kind::corpus, where + "invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw InputError(InputError::Kind::corpus, where + "expected a JSON object");
    out.push_back({detail::text_field(obj, "source", where), detail::text_field(obj, "summary", where)});
  }
  if (out.empty()) throw InputError(InputError::Kind::corpus, "corpus '" + path.string() + "' has no records");
  return out;
}

inline void save_corpus(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) throw InputError(InputError::Kind::io, "cannot write corpus '" + path.string() + "'");
  for (const auto& r : records) {
    nlohmann::json obj;
    obj["source"] = r.source.size() == 1 ? nlohmann::json(r.source[0]) : nlohmann::json(r.source);
    obj["summary"] = r.summary.size() == 1 ? nlohmann::json(r.summary[0]) : nlohmann::json(r.summary);
    out << obj.dump() << '\n';
  }
}

/// Words of `text` grouped into sentences ending at '.', '!' or '?'.
inline std::vector<std::vector<std::string>> split_sentences(std::string_view text) {
  std::vector<std::vector<std::string>> out(1);
  for (auto& w : pre_tokenize(text)) {
    const bool end = w == "." || w == "!" || w == "?";
    out.back().push_back(std::move(w));
    if (end) out.emplace_back();
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

/// Sentence-segmented words of a field: array elements are sentences,
/// plain strings are split on terminal punctuation.
inline std::vector<std::vector<std::string>> sentences_of(const std::vector<std::string>& field) {
  if (field.size() == 1) return split_sentences(field[0]);
  std::vector<std::vector<std::string>> out;
  for (const auto& s : field) out.push_back(pre_tokenize(s));
  return out;
}

}  // namespace convsum
