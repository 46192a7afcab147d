#include "tabby/codec.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "tabby/error.hpp"

namespace tabby {

std::string_view to_string(RejectCause cause) {
  switch (cause) {
    case RejectCause::kNone: return "none";
    case RejectCause::kOverlength: return "overlength";
    case RejectCause::kMalformedSegment: return "malformed segment";
    case RejectCause::kUnknownColumn: return "unknown column";
    case RejectCause::kTypeParseFailure: return "type parse failure";
    case RejectCause::kWrongColumnCount: return "wrong column count";
  }
  return "?";
}

ColumnSegments encode_plain_segments(const Schema& schema, const Vocabulary& vocab, const Row& row) {
  check_row(schema, row);
  ColumnSegments segments;
  segments.reserve(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& column = schema.columns[i];
    Segment seg{i, vocab.tokenize(column.name)};
    seg.tokens.push_back(vocab.is_token());
    const auto value = vocab.tokenize(render_value(column, row[i]));
    seg.tokens.insert(seg.tokens.end(), value.begin(), value.end());
    seg.tokens.push_back(i + 1 == schema.size() ? Vocabulary::kEos : Vocabulary::kEoc);
    segments.push_back(std::move(seg));
  }
  return segments;
}

TokenSeq concat_segments(const ColumnSegments& segments, bool with_bos) {
  TokenSeq out;
  if (with_bos) out.push_back(Vocabulary::kBos);
  for (const auto& s : segments) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

TokenSeq encode_plain_string(const Schema& schema, const Vocabulary& vocab, const Row& row) {
  return concat_segments(encode_plain_segments(schema, vocab, row));
}

namespace {

DecodeResult reject(RejectCause cause, std::string detail) {
  DecodeResult r;
  r.cause = cause;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

DecodeResult try_decode_row(const TokenSeq& tokens, const Schema& schema, const Vocabulary& vocab) {
  std::size_t pos = 0;
  if (!tokens.empty() && tokens[0] == Vocabulary::kBos) pos = 1;

  std::vector<std::optional<Value>> values(schema.size());
  std::size_t seen = 0;
  bool finished = false;
  while (pos < tokens.size() && !finished) {
    std::size_t end = pos;
    while (end < tokens.size() && tokens[end] != Vocabulary::kEoc && tokens[end] != Vocabulary::kEos) ++end;
    if (end == tokens.size()) return reject(RejectCause::kMalformedSegment, "unterminated segment");
    finished = tokens[end] == Vocabulary::kEos;

    const auto first = tokens.begin() + static_cast<long>(pos);
    const auto last = tokens.begin() + static_cast<long>(end);
    const auto is_at = std::find(first, last, vocab.is_token());
    if (is_at == last) return reject(RejectCause::kMalformedSegment, "segment without 'is'");

    const TokenSeq name_tokens(first, is_at);
    const TokenSeq value_tokens(is_at + 1, last);
    for (TokenId t : name_tokens) {
      if (vocab.is_special(t)) return reject(RejectCause::kUnknownColumn, "special token in column name");
    }
    const auto column = schema.find(vocab.detokenize(name_tokens));
    if (!column) return reject(RejectCause::kUnknownColumn, "'" + vocab.detokenize(name_tokens) + "'");
    if (values[*column]) return reject(RejectCause::kWrongColumnCount, "duplicate column " + schema.columns[*column].name);

    for (TokenId t : value_tokens) {
      if (vocab.is_special(t)) return reject(RejectCause::kTypeParseFailure, "special token in value");
    }
    const auto& spec = schema.columns[*column];
    auto parsed = parse_value(spec, vocab.detokenize(value_tokens));
    if (!parsed || !value_conforms(spec, *parsed)) {
      return reject(RejectCause::kTypeParseFailure, "cannot parse value of " + spec.name);
    }
    values[*column] = std::move(parsed);
    ++seen;
    pos = end + 1;
  }
  if (!finished && seen == 0) return reject(RejectCause::kMalformedSegment, "empty sequence");
  if (!finished) return reject(RejectCause::kMalformedSegment, "missing <EOS>");
  if (seen != schema.size()) {
    return reject(RejectCause::kWrongColumnCount,
                  std::to_string(seen) + " columns, expected " + std::to_string(schema.size()));
  }
  DecodeResult r;
  r.row.emplace();
  for (auto& v : values) r.row->push_back(std::move(*v));
  return r;
}

Row decode_row(const TokenSeq& tokens, const Schema& schema, const Vocabulary& vocab) {
  auto r = try_decode_row(tokens, schema, vocab);
  if (!r.ok()) throw DecodeError(r.cause, r.detail);
  return std::move(*r.row);
}

ColumnSegments permute_segments(const ColumnSegments& segments, const std::vector<std::size_t>& perm) {
  require(perm.size() == segments.size(), ErrorKind::kInvalidArgument, "permutation has the wrong length");
  std::vector<bool> used(perm.size(), false);
  for (auto p : perm) {
    require(p < perm.size() && !used[p], ErrorKind::kInvalidArgument, "invalid permutation");
    used[p] = true;
  }
  ColumnSegments out;
  out.reserve(segments.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    Segment s = segments[perm[k]];
    require(!s.tokens.empty(), ErrorKind::kInvalidArgument, "empty segment");
    s.tokens.back() = k + 1 == perm.size() ? Vocabulary::kEos : Vocabulary::kEoc;
    out.push_back(std::move(s));
  }
  return out;
}

ColumnSegments permute_segments(const ColumnSegments& segments, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(segments.size());
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates with explicit draws so the order is portable across standard libraries.
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return permute_segments(segments, perm);
}

std::vector<std::size_t> routing_columns(const ColumnSegments& segments, bool with_bos) {
  std::vector<std::size_t> cols;
  if (segments.empty()) return cols;
  if (with_bos) cols.push_back(segments.front().column);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    for (std::size_t p = 0; p + 1 < s.tokens.size(); ++p) cols.push_back(s.column);
    cols.push_back(k + 1 < segments.size() ? segments[k + 1].column : s.column);
  }
  return cols;
}

nlohmann::json CodeBook::to_json() const { return categories; }

CodeBook CodeBook::from_json(const nlohmann::json& doc) {
  CodeBook book;
  book.categories = doc.get<std::vector<std::vector<std::string>>>();
  return book;
}

Schema tabula_schema(const Schema& schema) {
  Schema out = schema;
  for (auto& c : out.columns) {
    if (c.dtype == DType::kCategorical) c.dtype = DType::kInteger;
  }
  return out;
}

TabulaEncoding tabula_encode(const Table& table, const Schema& schema) {
  TabulaEncoding enc;
  enc.schema = tabula_schema(schema);
  enc.codebook.categories.resize(schema.size());
  std::vector<std::map<std::string, std::int64_t>> index(schema.size());
  enc.table.reserve(table.size());
  for (const auto& row : table) {
    check_row(schema, row);
    Row out = row;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema.columns[i].dtype != DType::kCategorical) continue;
      const auto& s = std::get<std::string>(row[i]);
      auto [it, inserted] = index[i].try_emplace(s, static_cast<std::int64_t>(index[i].size()));
      if (inserted) enc.codebook.categories[i].push_back(s);
      out[i] = it->second;
    }
    enc.table.push_back(std::move(out));
  }
  return enc;
}

Table tabula_apply(const Table& table, const Schema& schema, const CodeBook& codebook) {
  Table out;
  out.reserve(table.size());
  for (const auto& row : table) {
    check_row(schema, row);
    Row r = row;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema.columns[i].dtype != DType::kCategorical) continue;
      const auto& cats = codebook.categories.at(i);
      const auto it = std::find(cats.begin(), cats.end(), std::get<std::string>(row[i]));
      require(it != cats.end(), ErrorKind::kEncoding,
              "category '" + std::get<std::string>(row[i]) + "' is not in the code book");
      r[i] = static_cast<std::int64_t>(it - cats.begin());
    }
    out.push_back(std::move(r));
  }
  return out;
}

Table tabula_decode(const Table& table, const Schema& schema, const CodeBook& codebook) {
  Table out;
  out.reserve(table.size());
  for (const auto& row : table) {
    require(row.size() == schema.size(), ErrorKind::kEncoding, "row width does not match schema");
    Row r = row;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema.columns[i].dtype != DType::kCategorical) continue;
      const auto* code = std::get_if<std::int64_t>(&row[i]);
      const auto& cats = codebook.categories.at(i);
      if (code == nullptr || *code < 0 || static_cast<std::size_t>(*code) >= cats.size()) {
        fail(ErrorKind::kEncoding, "unknown ordinal in column '" + schema.columns[i].name + "'");
      }
      r[i] = cats[static_cast<std::size_t>(*code)];
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

Value value_from_json(const ColumnSpec& c, const Document& j) {
  switch (c.dtype) {
    case DType::kCategorical:
      if (j.is_string()) return j.get<std::string>();
      break;
    case DType::kInteger:
      if (j.is_number_integer()) return j.get<std::int64_t>();
      break;
    case DType::kFloat:
      if (j.is_number()) return j.get<double>();
      break;
    case DType::kBoolean:
      if (j.is_boolean()) return j.get<bool>();
      break;
  }
  fail(ErrorKind::kData, "leaf '" + c.name + "' has the wrong JSON type");
}

Document value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return Document(x); }, v);
}

std::size_t count_leaves(const Document& node) {
  if (!node.is_object()) return 1;
  std::size_t n = 0;
  for (const auto& [key, child] : node.items()) n += count_leaves(child);
  return n;
}

}  // namespace

Row flatten_nested(const Document& doc, const Schema& schema) {
  require(doc.is_object(), ErrorKind::kData, "nested record must be a JSON object");
  Row row;
  row.reserve(schema.size());
  for (const auto& c : schema.columns) {
    const Document* node = &doc;
    for (const auto& key : c.path) {
      require(node->is_object() && node->contains(key), ErrorKind::kData, "missing group '" + key + "'");
      node = &node->at(key);
    }
    require(node->is_object() && node->contains(c.name), ErrorKind::kData, "missing leaf '" + c.name + "'");
    row.push_back(value_from_json(c, node->at(c.name)));
  }
  require(count_leaves(doc) == schema.size(), ErrorKind::kData, "record has leaves not described by the schema");
  check_row(schema, row);
  return row;
}

Document unflatten_nested(const Row& row, const Schema& schema) {
  check_row(schema, row);
  Document doc = Document::object();
  for (std::size_t i = 0; i < schema.size(); ++i) {
    Document* node = &doc;
    for (const auto& key : schema.columns[i].path) {
      if (!node->contains(key)) (*node)[key] = Document::object();
      node = &(*node)[key];
    }
    (*node)[schema.columns[i].name] = value_to_json(row[i]);
  }
  return doc;
}

}  // namespace tabby
