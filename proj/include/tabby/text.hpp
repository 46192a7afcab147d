#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace tabby {

inline constexpr std::array<std::string_view, 5> kSpecialTokenText = {"<BOS>", "<EOS>", "<EOC>", "<PAD>",
                                                                      "<UNK>"};

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

inline bool is_normalized_text(std::string_view text) { return normalize_whitespace(text) == text; }

inline bool is_special_token_text(std::string_view word) {
  for (auto s : kSpecialTokenText) {
    if (s == word) return true;
  }
  return false;
}

}  // namespace tabby
