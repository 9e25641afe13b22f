#include <cctype>

#include "utged/corpus.hpp"

namespace utged::corpus {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }
bool is_mention_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0 || c == '_'; }

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

bool url_at(std::string_view s, std::size_t pos) {
  return starts_with_at(s, pos, "http://") || starts_with_at(s, pos, "https://") || starts_with_at(s, pos, "www.");
}

void tokenize_chunk(std::string_view chunk, Tokens& out) {
  std::size_t i = 0;
  while (i < chunk.size()) {
    const auto c = static_cast<unsigned char>(chunk[i]);
    if (url_at(chunk, i)) {
      out.emplace_back(kUrlTag);
      return;  // a URL runs to the end of the chunk
    }
    if (starts_with_at(chunk, i, kUrlTag)) {
      out.emplace_back(kUrlTag);
      i += kUrlTag.size();
      continue;
    }
    if (c == '@' && i + 1 < chunk.size() && is_mention_char(static_cast<unsigned char>(chunk[i + 1]))) {
      out.emplace_back(kMentionTag);
      ++i;
      while (i < chunk.size() && is_mention_char(static_cast<unsigned char>(chunk[i]))) ++i;
      continue;
    }
    if (is_punct(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < chunk.size() && !is_punct(static_cast<unsigned char>(chunk[i]))) ++i;
    out.emplace_back(chunk.substr(start, i - start));
  }
}

}  // namespace

Tokens tokenize(std::string_view text) {
  std::string lower(text);
  for (char& ch : lower) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) ch = static_cast<char>(std::tolower(c));
  }
  Tokens out;
  std::size_t i = 0;
  const std::string_view s = lower;
  while (i < s.size()) {
    while (i < s.size() && is_space(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) tokenize_chunk(s.substr(start, i - start), out);
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace utged::corpus
