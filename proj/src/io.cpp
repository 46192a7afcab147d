#include "tabby/io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "tabby/codec.hpp"
#include "tabby/error.hpp"
#include "tabby/text.hpp"

namespace tabby {

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  char c = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  require(!quoted, ErrorKind::kData, "unterminated quoted CSV field");
  if (field_started || !record.empty()) end_record();
  return records;
}

void write_csv_record(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\r\n") != std::string::npos || (!f.empty() && (f.front() == ' ' || f.back() == ' '))) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

namespace {

Value parse_cell(const ColumnSpec& c, const std::string& raw, std::size_t line) {
  const std::string text = normalize_whitespace(raw);
  if (c.dtype == DType::kCategorical) return text;
  if (c.dtype == DType::kBoolean) {
    if (text == "true" || text == "True" || text == "TRUE" || text == "1") return true;
    if (text == "false" || text == "False" || text == "FALSE" || text == "0") return false;
  } else if (c.dtype == DType::kInteger) {
    if (auto v = parse_value(c, text)) return *v;
  } else {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (!text.empty() && end == text.c_str() + text.size() && std::isfinite(v)) return v;
  }
  fail(ErrorKind::kData, "line " + std::to_string(line) + ": cannot parse '" + raw + "' as " +
                             std::string(to_string(c.dtype)) + " for column '" + c.name + "'");
}

}  // namespace

Table read_csv(const std::string& path, Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path);
  const auto records = parse_csv(in);
  require(!records.empty(), ErrorKind::kData, path + " has no header line");
  const auto& header = records[0];
  require(header.size() == schema.size(), ErrorKind::kData,
          path + ": header has " + std::to_string(header.size()) + " fields, schema has " +
              std::to_string(schema.size()));
  std::vector<std::size_t> position(schema.size());
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto idx = schema.find(normalize_whitespace(header[k]));
    require(idx.has_value(), ErrorKind::kData, path + ": header field '" + header[k] + "' is not a schema column");
    position[*idx] = k;
  }
  Table table;
  table.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    require(rec.size() == header.size(), ErrorKind::kData,
            path + ": record " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) + " fields");
    Row row;
    row.reserve(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) row.push_back(parse_cell(schema.columns[i], rec[position[i]], r + 1));
    table.push_back(std::move(row));
  }
  resolve_float_precision(schema, table);
  for (const auto& row : table) check_row(schema, row);
  return table;
}

void write_csv(const std::string& path, const Schema& schema, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  std::vector<std::string> fields;
  for (const auto& c : schema.columns) fields.push_back(c.name);
  write_csv_record(out, fields);
  for (const auto& row : table) {
    fields.clear();
    for (std::size_t i = 0; i < schema.size(); ++i) fields.push_back(render_value(schema.columns[i], row[i]));
    write_csv_record(out, fields);
  }
}

Table read_jsonl(const std::string& path, Schema& schema) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path);
  Table table;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (normalize_whitespace(line).empty()) continue;
    Document doc;
    try {
      doc = Document::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, path + ":" + std::to_string(n) + ": " + e.what());
    }
    try {
      table.push_back(flatten_nested(doc, schema));
    } catch (const Error& e) {
      fail(ErrorKind::kData, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  resolve_float_precision(schema, table);
  return table;
}

void write_jsonl(const std::string& path, const Schema& schema, const Table& table) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  for (const auto& row : table) {
    // Floats are written at the column precision so files round-trip textually.
    Row rounded = row;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema.columns[i].dtype == DType::kFloat) {
        rounded[i] = std::strtod(render_value(schema.columns[i], row[i]).c_str(), nullptr);
      }
    }
    out << unflatten_nested(rounded, schema).dump() << '\n';
  }
}

namespace {
bool is_jsonl_path(const std::string& path) {
  auto ends = [&](const std::string& s) { return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0; };
  return ends(".jsonl") || ends(".json");
}
}  // namespace

Table read_table(const std::string& path, Schema& schema) {
  return schema.nested() || is_jsonl_path(path) ? read_jsonl(path, schema) : read_csv(path, schema);
}

void write_table(const std::string& path, const Schema& schema, const Table& table) {
  if (schema.nested() || is_jsonl_path(path)) {
    write_jsonl(path, schema, table);
  } else {
    write_csv(path, schema, table);
  }
}

}  // namespace tabby
