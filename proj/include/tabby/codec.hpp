#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/schema.hpp"
#include "tabby/vocab.hpp"

namespace tabby {

struct Segment {
  std::size_t column = 0;  // schema index, kept through permutation
  TokenSeq tokens;         // "NAME is VALUE" followed by <EOC> or <EOS>
};

using ColumnSegments = std::vector<Segment>;

enum class RejectCause {
  kNone,
  kOverlength,
  kMalformedSegment,
  kUnknownColumn,
  kTypeParseFailure,
  kWrongColumnCount,
};

inline constexpr std::size_t kRejectCauseCount = 6;

std::string_view to_string(RejectCause cause);

struct DecodeResult {
  std::optional<Row> row;
  RejectCause cause = RejectCause::kNone;
  std::string detail;

  bool ok() const { return row.has_value(); }
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(RejectCause cause, const std::string& detail)
      : std::runtime_error(std::string(to_string(cause)) + ": " + detail), cause_(cause) {}
  RejectCause cause() const { return cause_; }

 private:
  RejectCause cause_;
};

ColumnSegments encode_plain_segments(const Schema& schema, const Vocabulary& vocab, const Row& row);

// <BOS> followed by the concatenated segments.
TokenSeq encode_plain_string(const Schema& schema, const Vocabulary& vocab, const Row& row);
TokenSeq concat_segments(const ColumnSegments& segments, bool with_bos = true);

// Accepts any token sequence; columns may appear in any order.
DecodeResult try_decode_row(const TokenSeq& tokens, const Schema& schema, const Vocabulary& vocab);
Row decode_row(const TokenSeq& tokens, const Schema& schema, const Vocabulary& vocab);

// perm[k] is the schema position of the segment placed k-th.
ColumnSegments permute_segments(const ColumnSegments& segments, const std::vector<std::size_t>& perm);
ColumnSegments permute_segments(const ColumnSegments& segments, std::mt19937_64& rng);

// Tabula ordinal encoding: categorical values -> 0,1,2,... in first-occurrence order.
struct CodeBook {
  // Per column; empty for non-categorical columns.
  std::vector<std::vector<std::string>> categories;

  nlohmann::json to_json() const;
  static CodeBook from_json(const nlohmann::json& doc);
};

struct TabulaEncoding {
  Schema schema;  // categorical columns become integer columns
  Table table;
  CodeBook codebook;
};

TabulaEncoding tabula_encode(const Table& table, const Schema& schema);
// Encodes further tables (validation/test) with an existing code book.
Table tabula_apply(const Table& table, const Schema& schema, const CodeBook& codebook);
Table tabula_decode(const Table& table, const Schema& schema, const CodeBook& codebook);
Schema tabula_schema(const Schema& schema);

// Nested documents: leaves in depth-first order as given by the schema paths.
using Document = nlohmann::ordered_json;
Row flatten_nested(const Document& doc, const Schema& schema);
Document unflatten_nested(const Row& row, const Schema& schema);

// Column label of each input position for routing. Position t carries the
// column of the token it predicts (token t+1); the final position repeats
// the last column.
std::vector<std::size_t> routing_columns(const ColumnSegments& segments, bool with_bos = true);

}  // namespace tabby
