#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace tabby {

enum class DType { kCategorical, kInteger, kFloat, kBoolean };
enum class Role { kFeature, kTarget };
enum class Task { kClassification, kRegression };

using Value = std::variant<bool, std::int64_t, double, std::string>;
using Row = std::vector<Value>;
using Table = std::vector<Row>;

// Sentinel for "decide from the training data" in a schema file.
inline constexpr int kInferPrecision = -1;
inline constexpr int kMaxFloatPrecision = 6;

struct ColumnSpec {
  std::string name;
  DType dtype = DType::kCategorical;
  Role role = Role::kFeature;
  std::vector<std::string> path;  // enclosing object keys; empty for flat tables
  int float_precision = 0;

  bool numeric() const { return dtype != DType::kCategorical; }
};

struct Schema {
  std::vector<ColumnSpec> columns;
  Task task = Task::kClassification;
  std::size_t target_index = 0;

  std::size_t size() const { return columns.size(); }
  bool nested() const;
  std::optional<std::size_t> find(std::string_view name) const;
  const ColumnSpec& target() const { return columns[target_index]; }
};

std::string_view to_string(DType dtype);
std::string_view to_string(Role role);
std::string_view to_string(Task task);
DType parse_dtype(std::string_view text);
Role parse_role(std::string_view text);
Task parse_task(std::string_view text);

// Checks every schema invariant and fills target_index. Throws ErrorKind::kSchema.
// Unresolved float precisions are accepted only when allow_unresolved is set.
void validate_schema(Schema& schema, bool allow_unresolved = false);

Schema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

// Stable 64-bit hex digest of the canonical schema document.
std::string schema_fingerprint(const Schema& schema);

// Smallest decimal count (capped) that represents x exactly at that many places.
int decimals_of(double x);

// Replaces kInferPrecision with the maximum decimals observed in `table`.
void resolve_float_precision(Schema& schema, const Table& table);

bool value_conforms(const ColumnSpec& column, const Value& value);
void check_row(const Schema& schema, const Row& row);

// Text form used inside encoded rows. Throws kEncoding for NaN/inf.
std::string render_value(const ColumnSpec& column, const Value& value);
std::optional<Value> parse_value(const ColumnSpec& column, std::string_view text);

// Equality after rendering floats at the column precision.
bool values_equal(const ColumnSpec& column, const Value& a, const Value& b);
bool rows_equal(const Schema& schema, const Row& a, const Row& b);

double numeric_value(const Value& value);
std::string value_to_string(const Value& value);

}  // namespace tabby
