#include "tabby/schema.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "tabby/error.hpp"
#include "tabby/text.hpp"

namespace tabby {

bool Schema::nested() const {
  for (const auto& c : columns) {
    if (!c.path.empty()) return true;
  }
  return false;
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::kCategorical: return "categorical";
    case DType::kInteger: return "integer";
    case DType::kFloat: return "float";
    case DType::kBoolean: return "boolean";
  }
  return "?";
}

std::string_view to_string(Role role) {
  return role == Role::kTarget ? "target" : "feature";
}

std::string_view to_string(Task task) {
  return task == Task::kRegression ? "regression" : "classification";
}

DType parse_dtype(std::string_view text) {
  if (text == "categorical") return DType::kCategorical;
  if (text == "integer") return DType::kInteger;
  if (text == "float") return DType::kFloat;
  if (text == "boolean") return DType::kBoolean;
  fail(ErrorKind::kSchema, "unknown dtype '" + std::string(text) + "'");
}

Role parse_role(std::string_view text) {
  if (text == "feature") return Role::kFeature;
  if (text == "target") return Role::kTarget;
  fail(ErrorKind::kSchema, "unknown role '" + std::string(text) + "'");
}

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::kClassification;
  if (text == "regression") return Task::kRegression;
  fail(ErrorKind::kSchema, "unknown task '" + std::string(text) + "'");
}

void validate_schema(Schema& schema, bool allow_unresolved) {
  require(!schema.columns.empty(), ErrorKind::kSchema, "schema has no columns");
  std::set<std::string> names;
  std::optional<std::size_t> target;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    const auto& c = schema.columns[i];
    require(!c.name.empty(), ErrorKind::kSchema, "column " + std::to_string(i) + " has an empty name");
    require(c.name.find('\n') == std::string::npos && c.name.find('\r') == std::string::npos,
            ErrorKind::kSchema, "column name contains a newline: " + c.name);
    require(is_normalized_text(c.name), ErrorKind::kSchema,
            "column name '" + c.name + "' must use single spaces and no surrounding whitespace");
    for (const auto& word : split_words(c.name)) {
      require(word != "is", ErrorKind::kSchema,
              "column name '" + c.name + "' contains the reserved word 'is'");
      require(!is_special_token_text(word), ErrorKind::kSchema,
              "column name '" + c.name + "' contains a reserved token");
    }
    require(names.insert(c.name).second, ErrorKind::kSchema, "duplicate column name '" + c.name + "'");
    for (const auto& key : c.path) {
      require(!key.empty(), ErrorKind::kSchema, "empty path component in column '" + c.name + "'");
    }
    if (c.dtype == DType::kFloat) {
      require(c.float_precision <= kMaxFloatPrecision &&
                  (c.float_precision >= 0 || (allow_unresolved && c.float_precision == kInferPrecision)),
              ErrorKind::kSchema, "column '" + c.name + "' has an invalid float_precision");
    }
    if (c.role == Role::kTarget) {
      require(!target.has_value(), ErrorKind::kSchema, "more than one target column");
      target = i;
    }
  }
  require(target.has_value(), ErrorKind::kSchema, "schema has no target column");
  schema.target_index = *target;

  // Depth-first leaf order: once a group is closed it may not reopen.
  std::set<std::vector<std::string>> closed;
  std::vector<std::string> current;
  for (const auto& c : schema.columns) {
    std::size_t common = 0;
    while (common < current.size() && common < c.path.size() && current[common] == c.path[common]) ++common;
    for (std::size_t k = current.size(); k > common; --k) {
      closed.insert(std::vector<std::string>(current.begin(), current.begin() + static_cast<long>(k)));
    }
    for (std::size_t k = common + 1; k <= c.path.size(); ++k) {
      std::vector<std::string> prefix(c.path.begin(), c.path.begin() + static_cast<long>(k));
      require(!closed.count(prefix), ErrorKind::kSchema,
              "columns of group '" + prefix.back() + "' are not contiguous");
    }
    current = c.path;
  }
  // A group key may not coincide with a leaf at the same level.
  for (const auto& c : schema.columns) {
    for (const auto& other : schema.columns) {
      if (other.path.size() > c.path.size() &&
          std::equal(c.path.begin(), c.path.end(), other.path.begin()) &&
          other.path[c.path.size()] == c.name) {
        fail(ErrorKind::kSchema, "'" + c.name + "' is both a leaf and a group");
      }
    }
  }
}

Schema schema_from_json(const nlohmann::json& doc) {
  Schema schema;
  try {
    schema.task = parse_task(doc.at("task").get<std::string>());
    for (const auto& col : doc.at("columns")) {
      ColumnSpec c;
      c.name = col.at("name").get<std::string>();
      c.dtype = parse_dtype(col.at("dtype").get<std::string>());
      c.role = parse_role(col.value("role", std::string("feature")));
      if (col.contains("path")) c.path = col.at("path").get<std::vector<std::string>>();
      if (col.contains("float_precision") && !col.at("float_precision").is_null()) {
        const auto& p = col.at("float_precision");
        c.float_precision = p.is_string() && p.get<std::string>() == "auto" ? kInferPrecision : p.get<int>();
      } else {
        c.float_precision = c.dtype == DType::kFloat ? kInferPrecision : 0;
      }
      schema.columns.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed schema document: ") + e.what());
  }
  validate_schema(schema, /*allow_unresolved=*/true);
  return schema;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema.columns) {
    nlohmann::json col = {{"name", c.name},
                          {"dtype", to_string(c.dtype)},
                          {"role", to_string(c.role)},
                          {"path", c.path}};
    if (c.dtype == DType::kFloat) {
      col["float_precision"] = c.float_precision == kInferPrecision ? nlohmann::json("auto")
                                                                     : nlohmann::json(c.float_precision);
    }
    cols.push_back(std::move(col));
  }
  return {{"task", to_string(schema.task)}, {"columns", std::move(cols)}};
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open schema file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, "schema file " + path + " is not valid JSON: " + e.what());
  }
  return schema_from_json(doc);
}

void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write schema file " + path);
  out << schema_to_json(schema).dump(2) << '\n';
}

std::string schema_fingerprint(const Schema& schema) {
  // FNV-1a over the canonical dump.
  const std::string text = schema_to_json(schema).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int decimals_of(double x) {
  if (!std::isfinite(x)) return 0;
  for (int p = 0; p < kMaxFloatPrecision; ++p) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", p, x);
    if (std::strtod(buf, nullptr) == x) return p;
  }
  return kMaxFloatPrecision;
}

void resolve_float_precision(Schema& schema, const Table& table) {
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    auto& c = schema.columns[i];
    if (c.dtype != DType::kFloat || c.float_precision != kInferPrecision) continue;
    int p = 0;
    for (const auto& row : table) {
      if (i < row.size() && std::holds_alternative<double>(row[i])) {
        p = std::max(p, decimals_of(std::get<double>(row[i])));
      }
    }
    c.float_precision = p;
  }
}

bool value_conforms(const ColumnSpec& column, const Value& value) {
  switch (column.dtype) {
    case DType::kCategorical: {
      if (!std::holds_alternative<std::string>(value)) return false;
      const auto& s = std::get<std::string>(value);
      if (!is_normalized_text(s)) return false;
      for (const auto& w : split_words(s)) {
        if (is_special_token_text(w)) return false;
      }
      return true;
    }
    case DType::kInteger: return std::holds_alternative<std::int64_t>(value);
    case DType::kFloat: return std::holds_alternative<double>(value);
    case DType::kBoolean: return std::holds_alternative<bool>(value);
  }
  return false;
}

void check_row(const Schema& schema, const Row& row) {
  require(row.size() == schema.size(), ErrorKind::kData,
          "row has " + std::to_string(row.size()) + " values, schema has " + std::to_string(schema.size()));
  for (std::size_t i = 0; i < row.size(); ++i) {
    require(value_conforms(schema.columns[i], row[i]), ErrorKind::kData,
            "value '" + value_to_string(row[i]) + "' does not conform to column '" + schema.columns[i].name + "'");
  }
}

std::string render_value(const ColumnSpec& column, const Value& value) {
  switch (column.dtype) {
    case DType::kCategorical: return std::get<std::string>(value);
    case DType::kInteger: return std::to_string(std::get<std::int64_t>(value));
    case DType::kBoolean: return std::get<bool>(value) ? "true" : "false";
    case DType::kFloat: {
      const double x = std::get<double>(value);
      require(std::isfinite(x), ErrorKind::kEncoding, "unencodable value in column '" + column.name + "'");
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.*f", std::max(column.float_precision, 0), x);
      return buf;
    }
  }
  return {};
}

std::optional<Value> parse_value(const ColumnSpec& column, std::string_view text) {
  switch (column.dtype) {
    case DType::kCategorical:
      return Value(std::string(text));
    case DType::kBoolean:
      if (text == "true") return Value(true);
      if (text == "false") return Value(false);
      return std::nullopt;
    case DType::kInteger: {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
      return Value(v);
    }
    case DType::kFloat: {
      if (text.empty()) return std::nullopt;
      // Digits with at most one point and an optional leading minus.
      std::size_t start = text[0] == '-' ? 1 : 0;
      bool digit = false;
      int points = 0;
      for (std::size_t k = start; k < text.size(); ++k) {
        if (text[k] == '.') {
          ++points;
        } else if (text[k] >= '0' && text[k] <= '9') {
          digit = true;
        } else {
          return std::nullopt;
        }
      }
      if (!digit || points > 1 || text.back() == '.' || text[start] == '.') return std::nullopt;
      const std::string owned(text);
      const double v = std::strtod(owned.c_str(), nullptr);
      if (!std::isfinite(v)) return std::nullopt;
      return Value(v);
    }
  }
  return std::nullopt;
}

bool values_equal(const ColumnSpec& column, const Value& a, const Value& b) {
  if (a.index() != b.index()) return false;
  if (column.dtype == DType::kFloat) {
    return render_value(column, a) == render_value(column, b) ||
           std::get<double>(a) == std::get<double>(b);
  }
  return a == b;
}

bool rows_equal(const Schema& schema, const Row& a, const Row& b) {
  if (a.size() != schema.size() || b.size() != schema.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!values_equal(schema.columns[i], a[i], b[i])) return false;
  }
  return true;
}

double numeric_value(const Value& value) {
  if (const auto* b = std::get_if<bool>(&value)) return *b ? 1.0 : 0.0;
  if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&value)) return *d;
  fail(ErrorKind::kData, "categorical value used as a number");
}

std::string value_to_string(const Value& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<V, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<V, double>) {
          std::ostringstream os;
          os.precision(17);
          os << v;
          return os.str();
        } else {
          return std::to_string(v);
        }
      },
      value);
}

}  // namespace tabby
