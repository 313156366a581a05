#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convsum/error.hpp"
#include "convsum/ops.hpp"

namespace convsum {

/// Bidirectional token <-> id table. The first six ids are reserved and fixed.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kBos = 4;
  static constexpr TokenId kEos = 5;
  static constexpr std::array<std::string_view, 6> kReserved = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"};
  static constexpr std::string_view kContinuation = "##";

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kReserved.size())
      throw InputError(InputError::Kind::vocab, "vocab: fewer entries than reserved tokens");
    for (std::size_t i = 0; i < kReserved.size(); ++i)
      if (tokens_[i] != kReserved[i])
        throw InputError(InputError::Kind::vocab, "vocab: line " + std::to_string(i + 1) + " must be " +
                                                      std::string(kReserved[i]) + ", found '" + tokens_[i] + "'");
    ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& tok = tokens_[i];
      if (tok.empty() || tok.find_first_of("\n\r") != std::string::npos)
        throw InputError(InputError::Kind::vocab, "vocab: invalid token at line " + std::to_string(i + 1));
      if (!ids_.emplace(tok, static_cast<TokenId>(i)).second)
        throw InputError(InputError::Kind::vocab, "vocab: duplicate token '" + tok + "' at line " + std::to_string(i + 1));
    }
  }

  /// One token per line; line number (from 0) is the id.
  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(InputError::Kind::io, "cannot open vocab file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(InputError::Kind::io, "cannot write vocab file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw ContractViolation("vocab: unknown id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  static bool is_reserved(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kReserved.size()); }
  static bool is_continuation(std::string_view tok) { return tok.starts_with(kContinuation); }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

namespace detail {

inline bool is_utf8_boundary(std::string_view s, std::size_t pos) {
  return pos == s.size() || (static_cast<unsigned char>(s[pos]) & 0xC0) != 0x80;
}

inline std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= word.size(); ++i)
    if (is_utf8_boundary(word, i)) {
      out.emplace_back(word.substr(start, i - start));
      start = i;
    }
  return out;
}

}  // namespace detail

/// Lowercases ASCII letters and splits on whitespace and ASCII punctuation.
inline std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (uc < 0x80 && std::isspace(uc)) {
      flush();
    } else if (uc < 0x80 && std::ispunct(uc)) {
      flush();
      words.emplace_back(1, ch);
    } else {
      cur.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  flush();
  return words;
}

inline constexpr std::size_t kMaxWordChars = 100;

/// Greedy longest-match-first decomposition of one pre-tokenized word.
/// Returns {kUnk} when no full decomposition exists.
inline std::vector<TokenId> wordpiece(std::string_view word, const Vocab& vocab) {
  if (word.empty()) return {};
  if (detail::utf8_chars(word).size() > kMaxWordChars) return {Vocab::kUnk};
  std::vector<TokenId> pieces;
  std::string candidate;
  std::size_t start = 0;
  while (start < word.size()) {
    std::optional<TokenId> match;
    std::size_t end = word.size();
    for (; end > start; --end) {
      if (!detail::is_utf8_boundary(word, end)) continue;
      candidate.assign(start > 0 ? Vocab::kContinuation : "");
      candidate.append(word.substr(start, end - start));
      if ((match = vocab.find(candidate))) break;
    }
    if (!match) return {Vocab::kUnk};
    pieces.push_back(*match);
    start = end;
  }
  return pieces;
}

/// [CLS] followed by the WordPiece ids of every word in `text`.
inline std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids{Vocab::kCls};
  for (const auto& w : pre_tokenize(text)) {
    auto p = wordpiece(w, vocab);
    ids.insert(ids.end(), p.begin(), p.end());
  }
  return ids;
}

/// WordPiece ids of `text` without [CLS]; used for decoder targets.
inline std::vector<TokenId> tokenize_plain(std::string_view text, const Vocab& vocab) {
  auto ids = tokenize(text, vocab);
  ids.erase(ids.begin());
  return ids;
}

/// Inverse of tokenize on covered words. Reserved markers are dropped except
/// [UNK], which stays visible in the output.
inline std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (Vocab::is_reserved(id) && id != Vocab::kUnk) continue;
    if (Vocab::is_continuation(tok)) {
      out.append(tok, Vocab::kContinuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out.append(tok);
    }
  }
  return out;
}

/// Frequency-based vocabulary: reserved tokens, every character seen (as an
/// initial piece and, where it occurs inside a word, as a "##" piece), then
/// whole words by descending frequency, then "##" suffixes by frequency.
/// Ties are broken lexicographically so the result is deterministic.
inline Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t size) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& doc : corpus)
    for (auto& w : pre_tokenize(doc)) ++word_freq[w];
  if (word_freq.empty()) throw InputError(InputError::Kind::corpus, "build_vocab: corpus contains no words");

  std::vector<std::string> tokens(Vocab::kReserved.begin(), Vocab::kReserved.end());
  std::map<std::string, std::size_t> initial_chars, inner_chars;
  std::map<std::string, std::size_t> suffix_freq;
  for (const auto& [w, f] : word_freq) {
    auto chars = detail::utf8_chars(w);
    for (std::size_t i = 0; i < chars.size(); ++i) (i == 0 ? initial_chars : inner_chars)[chars[i]] += f;
    std::string suffix;
    for (std::size_t i = chars.size(); i-- > 1;) {
      suffix.insert(0, chars[i]);
      if (chars.size() - i >= 2) suffix_freq[std::string(Vocab::kContinuation) + suffix] += f;
    }
  }
  for (const auto& [c, _] : initial_chars) tokens.push_back(c);
  for (const auto& [c, _] : inner_chars) tokens.push_back(std::string(Vocab::kContinuation) + c);
  if (size < tokens.size())
    throw InputError(InputError::Kind::vocab, "build_vocab: size " + std::to_string(size) + " is below the " +
                                                  std::to_string(tokens.size()) + " reserved and character entries");

  auto by_freq = [](const std::map<std::string, std::size_t>& m) {
    std::vector<std::pair<std::string, std::size_t>> v(m.begin(), m.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;
  };
  std::unordered_map<std::string, bool> present;
  for (const auto& t : tokens) present[t] = true;
  for (const auto* source : {&word_freq, &suffix_freq})
    for (const auto& [tok, _] : by_freq(*source)) {
      if (tokens.size() >= size) break;
      if (present.emplace(tok, true).second) tokens.push_back(tok);
    }
  return Vocab(std::move(tokens));
}

}  // namespace convsum
