#include "tabby/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tabby/error.hpp"

namespace tabby {
namespace {

ColumnSpec col(std::string name, DType dtype, int precision = 0, std::vector<std::string> path = {}) {
  return ColumnSpec{std::move(name), dtype, Role::kFeature, std::move(path), precision};
}

Schema finish(std::vector<ColumnSpec> columns, const std::string& target, Task task) {
  Schema s;
  s.columns = std::move(columns);
  s.task = task;
  for (auto& c : s.columns) {
    if (c.name == target) c.role = Role::kTarget;
  }
  validate_schema(s);
  return s;
}

std::string pick(std::mt19937_64& rng, const std::vector<std::string>& values, const std::vector<double>& probs) {
  std::discrete_distribution<std::size_t> d(probs.begin(), probs.end());
  return values[d(rng)];
}

double round_to(double x, int places) {
  const double scale = std::pow(10.0, places);
  return std::round(x * scale) / scale;
}

bool coin(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

}  // namespace

std::vector<std::string> toy_kinds() {
  return {"categorical", "independent", "deterministic", "sign", "mixed", "constant", "memorize", "nested"};
}

ToyDataset make_toy(const std::string& kind, std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyDataset out;
  out.kind = kind;
  auto& t = out.table;

  if (kind == "categorical") {
    out.schema = finish({col("c", DType::kCategorical)}, "c", Task::kClassification);
    for (std::size_t i = 0; i < rows; ++i) t.push_back({pick(rng, {"a", "b"}, {0.8, 0.2})});
  } else if (kind == "independent") {
    out.schema = finish({col("p", DType::kCategorical), col("q", DType::kCategorical), col("r", DType::kCategorical)},
                        "r", Task::kClassification);
    for (std::size_t i = 0; i < rows; ++i) {
      t.push_back({pick(rng, {"x", "y"}, {0.6, 0.4}), pick(rng, {"u", "v", "w"}, {0.5, 0.3, 0.2}),
                   pick(rng, {"yes", "no"}, {0.7, 0.3})});
    }
  } else if (kind == "deterministic") {
    out.schema = finish({col("x", DType::kCategorical), col("y", DType::kCategorical), col("z", DType::kFloat, 1)}, "y",
                        Task::kClassification);
    const std::vector<std::string> xs = {"a", "b", "c"};
    const std::vector<std::string> ys = {"low", "mid", "high"};
    std::discrete_distribution<std::size_t> dx({0.5, 0.3, 0.2});
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto k = dx(rng);
      t.push_back({xs[k], ys[k], round_to(10.0 * static_cast<double>(k + 1) + noise(rng), 1)});
    }
  } else if (kind == "sign") {
    out.schema = finish({col("x", DType::kFloat, 2), col("y", DType::kCategorical)}, "y", Task::kClassification);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double x = 0.0;
      while (x == 0.0) x = round_to(u(rng), 2);
      t.push_back({x, std::string(x > 0 ? "pos" : "neg")});
    }
  } else if (kind == "mixed") {
    out.schema = finish({col("color", DType::kCategorical), col("count", DType::kInteger), col("flag", DType::kBoolean),
                         col("score", DType::kFloat, 1)},
                        "score", Task::kRegression);
    std::uniform_int_distribution<std::int64_t> count(0, 20);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto c = pick(rng, {"red", "green", "blue"}, {0.4, 0.35, 0.25});
      const auto n = count(rng);
      const bool flag = coin(rng, 0.5);
      const double effect = c == "red" ? 0.0 : (c == "green" ? 3.0 : -3.0);
      const double score = 2.0 * static_cast<double>(n) + (flag ? 5.0 : 0.0) + effect + noise(rng);
      t.push_back({c, n, flag, round_to(score, 1)});
    }
  } else if (kind == "constant") {
    out.schema = finish({col("x", DType::kCategorical), col("k", DType::kCategorical), col("z", DType::kInteger)}, "x",
                        Task::kClassification);
    std::uniform_int_distribution<std::int64_t> z(0, 99);
    for (std::size_t i = 0; i < rows; ++i) {
      t.push_back({pick(rng, {"a", "b", "c", "d"}, {1, 1, 1, 1}), std::string("same"), z(rng)});
    }
  } else if (kind == "memorize") {
    out.schema = finish({col("name", DType::kCategorical), col("n", DType::kInteger), col("flag", DType::kBoolean)},
                        "flag", Task::kClassification);
    const std::vector<std::string> words = {"ant", "bee", "cat", "dog", "eel", "fox", "gnu", "hen"};
    std::vector<std::size_t> ids(std::max<std::size_t>(rows, 1));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto k = ids[i];
      t.push_back({words[k % words.size()] + " " + words[(k / words.size()) % words.size()],
                   static_cast<std::int64_t>((k * 37) % 1000), k % 3 == 0});
    }
  } else if (kind == "nested") {
    out.schema = finish({col("diagnosis", DType::kCategorical), col("disc_size", DType::kCategorical, 0, {"disc_info"}),
                         col("cup_disc_ratio", DType::kFloat, 1, {"disc_info"}),
                         col("rim_pallor", DType::kBoolean, 0, {"rim_info"}),
                         col("rim_color", DType::kCategorical, 0, {"rim_info"}),
                         col("bayoneting", DType::kBoolean, 0, {"rim_info"}),
                         col("sharp_edge", DType::kBoolean, 0, {"rim_info"}),
                         col("laminar_dot_sign", DType::kBoolean, 0, {"rim_info"}),
                         col("notching", DType::kBoolean, 0, {"rim_info"}),
                         col("rim_thinning", DType::kBoolean, 0, {"rim_info"})},
                        "rim_thinning", Task::kClassification);
    std::normal_distribution<double> noise(0.0, 0.1);
    for (std::size_t i = 0; i < rows; ++i) {
      const bool g = coin(rng, 0.4);
      const auto size = pick(rng, {"small", "medium", "large"}, g ? std::vector<double>{0.2, 0.3, 0.5}
                                                                   : std::vector<double>{0.3, 0.5, 0.2});
      const double ratio = round_to(std::clamp((g ? 0.7 : 0.4) + noise(rng), 0.1, 0.9), 1);
      const double p = g ? 0.7 : 0.15;
      const bool pallor = coin(rng, p);
      const auto color = pick(rng, {"pink", "pale", "orange"}, g ? std::vector<double>{0.2, 0.6, 0.2}
                                                                  : std::vector<double>{0.7, 0.1, 0.2});
      const bool bayonet = coin(rng, p);
      const bool sharp = coin(rng, p);
      const bool laminar = coin(rng, p);
      const bool notch = coin(rng, p);
      bool thinning = g && (notch || ratio >= 0.6);
      if (coin(rng, 0.05)) thinning = !thinning;
      t.push_back({std::string(g ? "glaucoma" : "normal"), size, ratio, pallor, color, bayonet, sharp, laminar, notch,
                   thinning});
    }
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown toy dataset '" + kind + "'");
  }
  return out;
}

EvalBundle split_bundle(const Table& table, std::uint64_t seed, double train_fraction, double validation_fraction) {
  require(train_fraction > 0 && validation_fraction >= 0 && train_fraction + validation_fraction <= 1.0,
          ErrorKind::kInvalidArgument, "invalid split fractions");
  const std::size_t n = table.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n >= 3) {
    n_val = std::max<std::size_t>(n_val, 1);
    n_train = std::min(std::max<std::size_t>(n_train, 1), n - n_val - 1);
  }
  EvalBundle b;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? b.train : (i < n_train + n_val ? b.validation : b.test);
    dst.push_back(table[idx[i]]);
  }
  return b;
}

}  // namespace tabby
