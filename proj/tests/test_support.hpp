#pragma once

// Random schema / row generators shared by the unit and acceptance suites.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tabby/schema.hpp"

namespace tabby::testing {

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> words = {"red", "green", "blue", "Paris", "New", "York", "x1", "a-b",
                                                 "this", "is", "cat", "dog", "12", "-3", "0.5", "alpha"};
  return words;
}

inline std::string random_words(std::mt19937_64& rng, std::size_t max_words) {
  std::uniform_int_distribution<std::size_t> count(0, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, word_pool().size() - 1);
  std::string out;
  const auto n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += word_pool()[pick(rng)];
  }
  return out;
}

// Flat schema when max_depth == 0; otherwise leaves are grouped under random
// paths of depth <= max_depth, kept contiguous.
inline Schema random_schema(std::mt19937_64& rng, std::size_t max_columns, std::size_t max_depth = 0) {
  std::uniform_int_distribution<std::size_t> ncols(1, max_columns);
  std::uniform_int_distribution<int> dtype(0, 3);
  std::uniform_int_distribution<int> precision(0, 3);
  std::uniform_int_distribution<std::size_t> depth(0, max_depth);
  Schema schema;
  const std::size_t v = ncols(rng);
  std::vector<std::string> path;
  for (std::size_t i = 0; i < v; ++i) {
    ColumnSpec c;
    c.name = "col" + std::to_string(i);
    if (i % 3 == 1) c.name = "f " + std::to_string(i);
    c.dtype = static_cast<DType>(dtype(rng));
    c.float_precision = c.dtype == DType::kFloat ? precision(rng) : 0;
    if (max_depth > 0) {
      const auto dd = depth(rng);
      // Either stay in the current group or open new groups under a prefix of it.
      if (dd < path.size()) path.resize(dd);
      while (path.size() < dd) path.push_back("g" + std::to_string(i) + "_" + std::to_string(path.size()));
      c.path = path;
    }
    schema.columns.push_back(std::move(c));
  }
  schema.columns[std::uniform_int_distribution<std::size_t>(0, v - 1)(rng)].role = Role::kTarget;
  validate_schema(schema);
  return schema;
}

inline Value random_value(const ColumnSpec& c, std::mt19937_64& rng) {
  switch (c.dtype) {
    case DType::kCategorical: return random_words(rng, 3);
    case DType::kInteger: return std::uniform_int_distribution<std::int64_t>(-5000, 5000)(rng);
    case DType::kBoolean: return std::bernoulli_distribution(0.5)(rng);
    case DType::kFloat: {
      const double scale = std::pow(10.0, c.float_precision);
      const auto k = std::uniform_int_distribution<std::int64_t>(-100000, 100000)(rng);
      return static_cast<double>(k) / scale;
    }
  }
  return std::string();
}

inline Row random_row(const Schema& schema, std::mt19937_64& rng) {
  Row row;
  for (const auto& c : schema.columns) row.push_back(random_value(c, rng));
  return row;
}

inline Table random_table(const Schema& schema, std::size_t n, std::mt19937_64& rng) {
  Table t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(random_row(schema, rng));
  return t;
}

}  // namespace tabby::testing
