#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/schema.hpp"

namespace tabby {

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

// Word-level vocabulary. Words made only of digits, '.' and '-' are spelled
// one character per token: the first character uses the bare token ("1"),
// later characters the glued form ("##2"), so "12" -> [1, ##2].
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kEoc = 2;
  static constexpr TokenId kPad = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr std::string_view kGlue = "##";

  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& text(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // Returns kUnk for out-of-vocabulary strings.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  TokenId is_token() const { return is_; }

  bool is_special(TokenId id) const { return id >= 0 && id <= kUnk; }
  bool is_glued(TokenId id) const;

  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(const TokenSeq& ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  // Appends a token if absent. Returns its id.
  TokenId add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId is_ = -1;
};

bool is_numeric_word(std::string_view word);

// Throws ErrorKind::kData ("empty corpus") when no table holds a row.
Vocabulary build_vocabulary(const std::vector<Table>& tables, const Schema& schema);

}  // namespace tabby
