#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tabby/schema.hpp"

namespace tabby {

// RFC 4180 records. Quoted fields may hold commas, quotes ("") and newlines.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
void write_csv_record(std::ostream& out, const std::vector<std::string>& fields);

// Header must list the schema column names (any order). Categorical text is
// whitespace-normalized. Unresolved float precisions are inferred here.
Table read_csv(const std::string& path, Schema& schema);
void write_csv(const std::string& path, const Schema& schema, const Table& table);

// One nested JSON document per line.
Table read_jsonl(const std::string& path, Schema& schema);
void write_jsonl(const std::string& path, const Schema& schema, const Table& table);

// Nested schemas use JSON-Lines, flat schemas CSV.
Table read_table(const std::string& path, Schema& schema);
void write_table(const std::string& path, const Schema& schema, const Table& table);

}  // namespace tabby
