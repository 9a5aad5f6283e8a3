#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rateval/error.hpp"
#include "rateval/stopwords_en.hpp"

namespace rateval::textprep {

using WordSet = std::set<std::string, std::less<>>;

struct PrepConfig {
  WordSet stopwords;
  WordSet domain_stopwords;
  bool strip_non_ascii = true;

  /// Bundled English list plus {example, overall, student, email}.
  static PrepConfig defaults() {
    PrepConfig config;
    config.stopwords.insert(kEnglishStopwords.begin(), kEnglishStopwords.end());
    config.domain_stopwords.insert(kDefaultDomainStopwords.begin(), kDefaultDomainStopwords.end());
    return config;
  }

  friend bool operator==(const PrepConfig&, const PrepConfig&) = default;
};

namespace detail {

inline bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_ascii_alnum(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace detail

/// Lowercase token list file: one token per line, '#' starts a comment.
inline WordSet load_word_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open stopword file: " + path.string());
  WordSet words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::size_t b = 0;
    while (b < line.size() && detail::is_ascii_space(static_cast<unsigned char>(line[b]))) ++b;
    std::size_t e = line.size();
    while (e > b && detail::is_ascii_space(static_cast<unsigned char>(line[e - 1]))) --e;
    if (e > b) words.insert(detail::ascii_lower(std::string_view(line).substr(b, e - b)));
  }
  return words;
}

/// Single-space-separated token string produced by preprocess().
class CleanText {
 public:
  CleanText() = default;

  /// Wraps an already-clean string; throws ConfigError when `text` has
  /// uppercase letters, punctuation, or irregular spacing.
  static CleanText from_string(std::string text) {
    bool prev_space = true;
    for (unsigned char c : text) {
      if (c == ' ') {
        if (prev_space) throw ConfigError("clean text has leading or doubled spaces");
        prev_space = true;
        continue;
      }
      prev_space = false;
      if (c < 0x80 && !((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))) {
        throw ConfigError("clean text contains a character outside [a-z0-9 ]");
      }
    }
    if (!text.empty() && text.back() == ' ') throw ConfigError("clean text has a trailing space");
    return CleanText(std::move(text));
  }

  const std::string& str() const noexcept { return text_; }
  bool empty() const noexcept { return text_.empty(); }

  friend bool operator==(const CleanText&, const CleanText&) = default;

 private:
  explicit CleanText(std::string text) : text_(std::move(text)) {}
  friend CleanText preprocess(std::string_view raw, const PrepConfig& config);

  std::string text_;
};

/// Fixed stage order: lowercase, drop non-ASCII, drop punctuation and other
/// ASCII specials, whitespace-tokenize, drop stopwords, drop domain words,
/// join with single spaces.
inline CleanText preprocess(std::string_view raw, const PrepConfig& config) {
  // 1. lowercase
  std::string text = detail::ascii_lower(raw);

  // 2. every byte of a multi-byte UTF-8 sequence is >= 0x80
  if (config.strip_non_ascii) {
    std::erase_if(text, [](char c) { return static_cast<unsigned char>(c) >= 0x80; });
  }

  // 3. keep letters, digits and whitespace; drops the 32 punctuation marks and control codes
  std::erase_if(text, [](char c) {
    auto u = static_cast<unsigned char>(c);
    if (u >= 0x80) return false;
    return !(detail::is_ascii_alnum(u) || detail::is_ascii_space(u));
  });

  // 4. tokenize
  std::vector<std::string_view> tokens;
  std::string_view view(text);
  std::size_t i = 0;
  while (i < view.size()) {
    while (i < view.size() && detail::is_ascii_space(static_cast<unsigned char>(view[i]))) ++i;
    std::size_t start = i;
    while (i < view.size() && !detail::is_ascii_space(static_cast<unsigned char>(view[i]))) ++i;
    if (i > start) tokens.push_back(view.substr(start, i - start));
  }

  // 5, 6. exact whole-token matches only
  std::erase_if(tokens, [&](std::string_view t) { return config.stopwords.contains(t); });
  std::erase_if(tokens, [&](std::string_view t) { return config.domain_stopwords.contains(t); });

  // 7.
  std::string out;
  for (auto t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out.append(t);
  }
  return CleanText(std::move(out));
}

inline std::vector<std::string> tokenize(const CleanText& clean) {
  std::vector<std::string> tokens;
  const auto& s = clean.str();
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find(' ', start);
    if (end == std::string::npos) end = s.size();
    tokens.emplace_back(s.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

}  // namespace rateval::textprep
