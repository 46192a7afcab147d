#include "tabby/vocab.hpp"

#include "tabby/error.hpp"
#include "tabby/text.hpp"

namespace tabby {

namespace {

constexpr std::string_view kNumericChars = "0123456789.-";

std::string glued(char c) { return std::string(Vocabulary::kGlue) + c; }

bool is_reserved_word(std::string_view word) {
  if (is_special_token_text(word)) return true;
  return word.size() == 3 && word.substr(0, 2) == Vocabulary::kGlue &&
         kNumericChars.find(word[2]) != std::string_view::npos;
}

}  // namespace

bool is_numeric_word(std::string_view word) {
  if (word.empty()) return false;
  for (char c : word) {
    if (kNumericChars.find(c) == std::string_view::npos) return false;
  }
  return true;
}

Vocabulary::Vocabulary() {
  for (auto s : kSpecialTokenText) add(std::string(s));
  is_ = add("is");
  for (char c : kNumericChars) add(std::string(1, c));
  for (char c : kNumericChars) add(glued(c));
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

bool Vocabulary::is_glued(TokenId id) const {
  const auto& t = text(id);
  return t.size() == 3 && t.compare(0, 2, kGlue) == 0;
}

TokenSeq Vocabulary::tokenize(std::string_view text) const {
  TokenSeq out;
  for (const auto& word : split_words(text)) {
    if (is_numeric_word(word)) {
      out.push_back(id(std::string_view(word).substr(0, 1)));
      for (std::size_t k = 1; k < word.size(); ++k) out.push_back(id(glued(word[k])));
    } else if (is_special_token_text(word)) {
      // Content text never yields a special id.
      out.push_back(kUnk);
    } else {
      out.push_back(id(word));
    }
  }
  return out;
}

std::string Vocabulary::detokenize(const TokenSeq& ids) const {
  std::string out;
  for (TokenId t : ids) {
    if (is_glued(t) && !out.empty()) {
      out += text(t)[2];
      continue;
    }
    if (!out.empty()) out += ' ';
    out += is_glued(t) ? text(t).substr(2) : text(t);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  Vocabulary v;
  const auto tokens = doc.get<std::vector<std::string>>();
  require(tokens.size() >= v.size(), ErrorKind::kCheckpoint, "vocabulary is truncated");
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(tokens[i] == v.tokens_[i], ErrorKind::kCheckpoint, "vocabulary prefix mismatch at " + std::to_string(i));
  }
  for (std::size_t i = v.size(); i < tokens.size(); ++i) {
    require(!v.contains(tokens[i]), ErrorKind::kCheckpoint, "duplicate vocabulary entry " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<Table>& tables, const Schema& schema) {
  bool any = false;
  for (const auto& t : tables) any = any || !t.empty();
  require(any, ErrorKind::kData, "empty corpus");

  Vocabulary vocab;
  auto add_words = [&](std::string_view text) {
    for (const auto& w : split_words(text)) {
      require(!is_reserved_word(w), ErrorKind::kData, "value uses reserved token text '" + w + "'");
      if (!is_numeric_word(w)) vocab.add(w);
    }
  };
  for (const auto& c : schema.columns) add_words(c.name);
  for (const auto& table : tables) {
    for (const auto& row : table) {
      check_row(schema, row);
      for (std::size_t i = 0; i < row.size(); ++i) add_words(render_value(schema.columns[i], row[i]));
    }
  }
  return vocab;
}

}  // namespace tabby
