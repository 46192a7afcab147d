#include "tabby/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tabby/error.hpp"

namespace tabby {

nlohmann::json ForestParams::to_json() const {
  return {{"n_trees", n_trees},
          {"max_depth", max_depth},
          {"min_samples_split", min_samples_split},
          {"max_features", max_features},
          {"bootstrap", bootstrap}};
}

ForestParams ForestParams::from_json(const nlohmann::json& doc) {
  ForestParams p;
  p.n_trees = doc.value("n_trees", p.n_trees);
  p.max_depth = doc.value("max_depth", p.max_depth);
  p.min_samples_split = doc.value("min_samples_split", p.min_samples_split);
  p.max_features = doc.value("max_features", p.max_features);
  p.bootstrap = doc.value("bootstrap", p.bootstrap);
  require(p.n_trees >= 1, ErrorKind::kInvalidArgument, "forest needs at least one tree");
  require(p.min_samples_split >= 2, ErrorKind::kInvalidArgument, "min_samples_split must be at least 2");
  return p;
}

double Tree::predict(const FeatureMatrix& m, std::size_t row) const {
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const auto& n = nodes[at];
    const double x = m.x[static_cast<std::size_t>(n.feature)][row];
    bool go_left = false;
    if (n.categorical) {
      const auto level = static_cast<std::size_t>(x);
      go_left = level < n.left_set.size() && n.left_set[level];
    } else {
      go_left = x <= n.threshold;
    }
    at = static_cast<std::size_t>(go_left ? n.left : n.right);
  }
  return nodes[at].value;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

struct Split {
  bool valid = false;
  double score = -std::numeric_limits<double>::infinity();
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  std::vector<bool> left_set;
};

// Sufficient statistics for a set of samples: class counts or (sum, sum of squares).
struct Stats {
  std::vector<double> counts;
  double n = 0.0;
  double sum = 0.0;

  void add(double y, bool classify) {
    n += 1.0;
    if (classify) {
      counts[static_cast<std::size_t>(y)] += 1.0;
    } else {
      sum += y;
    }
  }
  void remove(double y, bool classify) {
    n -= 1.0;
    if (classify) {
      counts[static_cast<std::size_t>(y)] -= 1.0;
    } else {
      sum -= y;
    }
  }
  // Larger is better: sum_k c_k^2 / n (Gini) or sum^2 / n (variance).
  double purity(bool classify) const {
    if (n == 0.0) return 0.0;
    if (!classify) return sum * sum / n;
    double s = 0.0;
    for (double c : counts) s += c * c;
    return s / n;
  }
};

class Builder {
 public:
  Builder(const FeatureMatrix& m, const std::vector<double>& y, Task task, std::size_t n_classes,
          const ForestParams& params, std::size_t mtry, std::mt19937_64& rng)
      : m_(m), y_(y), classify_(task == Task::kClassification), n_classes_(n_classes), params_(params),
        mtry_(mtry), rng_(rng) {}

  Tree build(std::vector<std::size_t> samples) {
    Tree t;
    t.nodes.emplace_back();
    grow(t, 0, samples, 0);
    return t;
  }

 private:
  Stats stats_of(const std::vector<std::size_t>& samples) const {
    Stats s;
    s.counts.assign(n_classes_, 0.0);
    for (auto i : samples) s.add(y_[i], classify_);
    return s;
  }

  void grow(Tree& t, std::size_t node, std::vector<std::size_t>& samples, std::size_t depth) {
    const Stats s = stats_of(samples);
    bool pure = true;
    if (classify_) {
      const auto best = std::max_element(s.counts.begin(), s.counts.end());
      t.nodes[node].value = static_cast<double>(best - s.counts.begin());
      pure = *best == s.n;
    } else {
      t.nodes[node].value = s.sum / s.n;
      for (auto i : samples) pure = pure && y_[i] == y_[samples.front()];
    }
    if (pure || samples.size() < params_.min_samples_split || (params_.max_depth > 0 && depth >= params_.max_depth)) {
      return;
    }

    std::vector<std::size_t> features(m_.x.size());
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng_);
    Split best;
    for (std::size_t k = 0; k < features.size(); ++k) {
      if (k >= mtry_ && best.valid) break;
      const auto f = features[k];
      if (m_.categorical[f]) {
        categorical_split(f, samples, s, best);
      } else {
        numeric_split(f, samples, s, best);
      }
    }
    if (!best.valid) return;

    std::vector<std::size_t> left, right;
    for (auto i : samples) {
      const double x = m_.x[static_cast<std::size_t>(best.feature)][i];
      const bool go_left = best.categorical ? best.left_set[static_cast<std::size_t>(x)] : x <= best.threshold;
      (go_left ? left : right).push_back(i);
    }
    samples.clear();
    samples.shrink_to_fit();
    auto& n = t.nodes[node];
    n.feature = best.feature;
    n.categorical = best.categorical;
    n.threshold = best.threshold;
    n.left_set = std::move(best.left_set);
    const auto l = t.nodes.size();
    t.nodes[node].left = static_cast<int>(l);
    t.nodes[node].right = static_cast<int>(l + 1);
    t.nodes.emplace_back();
    t.nodes.emplace_back();
    grow(t, l, left, depth + 1);
    grow(t, l + 1, right, depth + 1);
  }

  void numeric_split(std::size_t f, const std::vector<std::size_t>& samples, const Stats& total, Split& best) {
    const auto& x = m_.x[f];
    std::vector<std::size_t> order = samples;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    Stats left;
    left.counts.assign(n_classes_, 0.0);
    Stats right = total;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      left.add(y_[order[i]], classify_);
      right.remove(y_[order[i]], classify_);
      if (x[order[i]] == x[order[i + 1]]) continue;
      const double score = left.purity(classify_) + right.purity(classify_);
      if (!best.valid || score > best.score) {
        best.valid = true;
        best.score = score;
        best.feature = static_cast<int>(f);
        best.categorical = false;
        best.threshold = x[order[i]] + (x[order[i + 1]] - x[order[i]]) / 2.0;
        if (!(best.threshold < x[order[i + 1]])) best.threshold = x[order[i]];
        best.left_set.clear();
      }
    }
  }

  void categorical_split(std::size_t f, const std::vector<std::size_t>& samples, const Stats& total, Split& best) {
    const auto& x = m_.x[f];
    const std::size_t levels = m_.n_levels[f];
    std::vector<Stats> per(levels);
    for (auto& s : per) s.counts.assign(n_classes_, 0.0);
    for (auto i : samples) per[static_cast<std::size_t>(x[i])].add(y_[i], classify_);
    std::vector<std::size_t> present;
    for (std::size_t l = 0; l < levels; ++l) {
      if (per[l].n > 0) present.push_back(l);
    }
    if (present.size() < 2) return;

    auto consider = [&](const std::vector<bool>& left_set) {
      Stats left;
      left.counts.assign(n_classes_, 0.0);
      for (auto l : present) {
        if (!left_set[l]) continue;
        left.n += per[l].n;
        left.sum += per[l].sum;
        for (std::size_t c = 0; c < n_classes_; ++c) left.counts[c] += per[l].counts[c];
      }
      Stats right = total;
      right.n -= left.n;
      right.sum -= left.sum;
      for (std::size_t c = 0; c < n_classes_; ++c) right.counts[c] -= left.counts[c];
      const double score = left.purity(classify_) + right.purity(classify_);
      if (!best.valid || score > best.score) {
        best.valid = true;
        best.score = score;
        best.feature = static_cast<int>(f);
        best.categorical = true;
        best.left_set = left_set;
      }
    };

    if (classify_ && n_classes_ > 2) {
      for (auto l : present) {
        std::vector<bool> set(levels, false);
        set[l] = true;
        consider(set);
      }
      return;
    }
    // Ordering levels by mean response (or class-1 rate) makes prefix splits optimal.
    auto key = [&](std::size_t l) {
      return classify_ ? (n_classes_ > 1 ? per[l].counts[1] : 0.0) / per[l].n : per[l].sum / per[l].n;
    };
    std::stable_sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    std::vector<bool> set(levels, false);
    for (std::size_t k = 0; k + 1 < present.size(); ++k) {
      set[present[k]] = true;
      consider(set);
    }
  }

  const FeatureMatrix& m_;
  const std::vector<double>& y_;
  bool classify_;
  std::size_t n_classes_;
  const ForestParams& params_;
  std::size_t mtry_;
  std::mt19937_64& rng_;
};

}  // namespace

Forest Forest::fit(const FeatureMatrix& features, const std::vector<double>& labels, Task task, std::size_t n_classes,
                   const ForestParams& params, std::uint64_t seed) {
  require(features.n_rows > 0 && labels.size() == features.n_rows, ErrorKind::kEvaluation,
          "forest needs a non-empty training set");
  require(params.n_trees >= 1, ErrorKind::kEvaluation, "forest needs at least one tree");
  if (task == Task::kClassification) {
    require(n_classes >= 1, ErrorKind::kEvaluation, "classification needs at least one class");
    for (double y : labels) {
      require(y >= 0 && static_cast<std::size_t>(y) < n_classes, ErrorKind::kEvaluation, "class id out of range");
    }
  }
  const std::size_t p = features.x.size();
  std::size_t mtry = params.max_features;
  if (mtry == 0) {
    mtry = task == Task::kClassification ? static_cast<std::size_t>(std::sqrt(static_cast<double>(p))) : p / 3;
  }
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(p, 1));

  Forest forest;
  forest.task_ = task;
  forest.n_classes_ = n_classes;
  std::mt19937_64 rng(seed);
  Builder builder(features, labels, task, n_classes, params, mtry, rng);
  const std::size_t n = features.n_rows;
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    std::vector<std::size_t> samples(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& s : samples) s = pick(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    forest.trees_.push_back(builder.build(std::move(samples)));
  }
  return forest;
}

std::vector<double> Forest::predict(const FeatureMatrix& features) const {
  std::vector<double> out(features.n_rows, 0.0);
  for (std::size_t r = 0; r < features.n_rows; ++r) {
    if (task_ == Task::kClassification) {
      std::vector<std::size_t> votes(n_classes_, 0);
      for (const auto& t : trees_) votes[static_cast<std::size_t>(t.predict(features, r))]++;
      out[r] = static_cast<double>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    } else {
      double s = 0.0;
      for (const auto& t : trees_) s += t.predict(features, r);
      out[r] = s / static_cast<double>(trees_.size());
    }
  }
  return out;
}

TableEncoder::TableEncoder(const Schema& schema, const Table& fit_table, std::vector<std::size_t> feature_columns)
    : columns_(std::move(feature_columns)) {
  for (auto c : columns_) {
    require(c < schema.size(), ErrorKind::kEvaluation, "feature column out of range");
    specs_.push_back(schema.columns[c]);
    levels_.emplace_back();
    if (schema.columns[c].dtype != DType::kCategorical) continue;
    auto& levels = levels_.back();
    for (const auto& row : fit_table) {
      const auto& v = std::get<std::string>(row[c]);
      if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
    }
  }
}

FeatureMatrix TableEncoder::features(const Table& table) const {
  FeatureMatrix m;
  m.n_rows = table.size();
  for (std::size_t f = 0; f < columns_.size(); ++f) {
    const bool cat = specs_[f].dtype == DType::kCategorical;
    m.categorical.push_back(cat);
    m.n_levels.push_back(cat ? levels_[f].size() : 0);
    std::vector<double> col(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) {
      const auto& v = table[r][columns_[f]];
      if (cat) {
        const auto& levels = levels_[f];
        const auto it = std::find(levels.begin(), levels.end(), std::get<std::string>(v));
        col[r] = static_cast<double>(it - levels.begin());  // unseen -> levels.size()
      } else {
        col[r] = numeric_value(v);
      }
    }
    m.x.push_back(std::move(col));
  }
  return m;
}

std::vector<double> LabelCoding::encode(const Schema& schema, const Table& table) {
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table) {
    const auto label = value_to_string(row[schema.target_index]);
    auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) {
      classes.push_back(label);
      it = classes.end() - 1;
    }
    out.push_back(static_cast<double>(it - classes.begin()));
  }
  return out;
}

std::vector<double> numeric_targets(const Schema& schema, const Table& table) {
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(numeric_value(row[schema.target_index]));
  return out;
}

}  // namespace tabby
