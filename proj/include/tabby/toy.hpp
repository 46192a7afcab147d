#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tabby/schema.hpp"
#include "tabby/train.hpp"

namespace tabby {

// Seeded synthetic datasets with known structure.
//   categorical: one column c, P(a) = 0.8, P(b) = 0.2
//   independent: three independent categoricals with fixed marginals
//   deterministic: x in {a, b, c} (0.5/0.3/0.2), y = f(x), z ~ N(mu_x, 1)
//   sign: x ~ U(-1, 1), y = sign of x
//   mixed: categorical, integer, float and boolean features, regression target
//   constant: x random, k constant, z random
//   memorize: 32 distinct rows
//   nested: Glaucoma-style records (diagnosis, disc_info{...}, rim_info{...})
struct ToyDataset {
  std::string kind;
  Schema schema;
  Table table;
};

std::vector<std::string> toy_kinds();

ToyDataset make_toy(const std::string& kind, std::size_t rows, std::uint64_t seed);

// Shuffled 80/10/10 split (at least one row per part when rows >= 3).
EvalBundle split_bundle(const Table& table, std::uint64_t seed, double train_fraction = 0.8,
                        double validation_fraction = 0.1);

}  // namespace tabby
