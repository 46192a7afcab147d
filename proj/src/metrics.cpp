#include "tabby/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "tabby/error.hpp"

namespace tabby {

double r2_clipped(const std::vector<double>& predictions, const std::vector<double>& truth) {
  require(predictions.size() == truth.size(), ErrorKind::kEvaluation, "prediction and truth lengths differ");
  require(truth.size() >= 2, ErrorKind::kEvaluation, "r2 needs at least two points");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double r = 0.0;
  double t = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r += (truth[i] - predictions[i]) * (truth[i] - predictions[i]);
    t += (truth[i] - mean) * (truth[i] - mean);
  }
  require(t > 0.0, ErrorKind::kEvaluation, "zero total variance");
  return std::max(1.0 - r / t, 0.0);
}

namespace {

std::vector<std::size_t> non_target_columns(const Schema& schema) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i != schema.target_index) cols.push_back(i);
  }
  return cols;
}

}  // namespace

MleScores mle(const Table& real, const Table& synthetic, const Table& test, const Schema& schema, std::uint64_t seed,
              const ForestParams& params) {
  require(!real.empty(), ErrorKind::kEvaluation, "empty real table");
  require(!synthetic.empty(), ErrorKind::kEvaluation, "empty synthetic table");
  require(!test.empty(), ErrorKind::kEvaluation, "empty test table");
  const auto features = non_target_columns(schema);
  const bool classify = schema.task == Task::kClassification;

  LabelCoding coding;
  std::vector<double> y_real, y_synth, y_test;
  if (classify) {
    y_real = coding.encode(schema, real);
    y_synth = coding.encode(schema, synthetic);
    y_test = coding.encode(schema, test);
  } else {
    y_real = numeric_targets(schema, real);
    y_synth = numeric_targets(schema, synthetic);
    y_test = numeric_targets(schema, test);
  }
  const std::size_t n_classes = classify ? coding.classes.size() : 0;
  const auto task = classify ? Task::kClassification : Task::kRegression;

  auto score = [&](const Table& fit_table, const std::vector<double>& y) {
    const TableEncoder enc(schema, fit_table, features);
    const auto forest = Forest::fit(enc.features(fit_table), y, task, n_classes, params, seed);
    const auto pred = forest.predict(enc.features(test));
    if (!classify) return r2_clipped(pred, y_test);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == y_test[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
  };
  return MleScores{score(synthetic, y_synth), score(real, y_real)};
}

double discrimination(const Table& real, const Table& synthetic, const Schema& schema, std::uint64_t seed,
                      const ForestParams& params) {
  const std::size_t n = std::min(real.size(), synthetic.size());
  require(n >= 10, ErrorKind::kEvaluation, "insufficient data");
  std::mt19937_64 rng(seed);
  auto draw = [&](const Table& t) {
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    return idx;
  };
  const auto real_idx = draw(real);
  const auto synth_idx = draw(synthetic);

  Table train, test;
  std::vector<double> y_train, y_test;
  const std::size_t half = n / 2;
  for (int side = 0; side < 2; ++side) {
    const Table& src = side == 0 ? real : synthetic;
    const auto& idx = side == 0 ? real_idx : synth_idx;
    for (std::size_t k = 0; k < n; ++k) {
      if (k < half) {
        train.push_back(src[idx[k]]);
        y_train.push_back(side);
      } else {
        test.push_back(src[idx[k]]);
        y_test.push_back(side);
      }
    }
  }
  std::vector<std::size_t> all(schema.size());
  std::iota(all.begin(), all.end(), 0);
  const TableEncoder enc(schema, train, all);
  const auto forest = Forest::fit(enc.features(train), y_train, Task::kClassification, 2, params, seed);
  const auto pred = forest.predict(enc.features(test));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == y_test[i] ? 1 : 0;
  return std::abs(static_cast<double>(hit) / static_cast<double>(pred.size()) - 0.5);
}

double dcr(const Table& real, const Table& synthetic, const Schema& schema) {
  require(!real.empty() && !synthetic.empty(), ErrorKind::kEvaluation, "dcr needs non-empty tables");
  const std::size_t V = schema.size();
  std::vector<bool> numeric(V);
  std::vector<double> scale(V, 1.0);
  for (std::size_t c = 0; c < V; ++c) {
    const auto dt = schema.columns[c].dtype;
    numeric[c] = dt == DType::kInteger || dt == DType::kFloat;
    if (!numeric[c]) continue;
    double lo = numeric_value(real[0][c]);
    double hi = lo;
    for (const auto& row : real) {
      lo = std::min(lo, numeric_value(row[c]));
      hi = std::max(hi, numeric_value(row[c]));
    }
    scale[c] = hi > lo ? hi - lo : 1.0;
  }
  auto flatten = [&](const Table& t) {
    std::vector<double> num(t.size() * V, 0.0);
    std::vector<std::string> cat(t.size() * V);
    for (std::size_t r = 0; r < t.size(); ++r) {
      for (std::size_t c = 0; c < V; ++c) {
        if (numeric[c]) {
          num[r * V + c] = numeric_value(t[r][c]);
        } else {
          cat[r * V + c] = value_to_string(t[r][c]);
        }
      }
    }
    return std::make_pair(std::move(num), std::move(cat));
  };
  const auto [rn, rc] = flatten(real);
  const auto [sn, sc] = flatten(synthetic);
  double total = 0.0;
  for (std::size_t s = 0; s < synthetic.size(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < real.size(); ++r) {
      double d = 0.0;
      for (std::size_t c = 0; c < V; ++c) {
        d += numeric[c] ? std::abs(sn[s * V + c] - rn[r * V + c]) / scale[c] : (sc[s * V + c] == rc[r * V + c] ? 0.0 : 1.0);
      }
      best = std::min(best, d);
    }
    total += best;
  }
  return total / static_cast<double>(synthetic.size());
}

nlohmann::json MetricReport::to_json() const {
  return {{"mle_synthetic", mle_synthetic},
          {"mle_original", mle_original},
          {"discrimination", discrimination},
          {"dcr", dcr}};
}

MetricReport MetricReport::from_json(const nlohmann::json& doc) {
  MetricReport r;
  r.mle_synthetic = doc.at("mle_synthetic").get<double>();
  r.mle_original = doc.at("mle_original").get<double>();
  r.discrimination = doc.at("discrimination").get<double>();
  r.dcr = doc.at("dcr").get<double>();
  return r;
}

MeanStd mean_std(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::kEvaluation, "cannot aggregate zero values");
  MeanStd out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

double ProfileCurve::rho(double tau) const {
  if (ratios.empty()) return 0.0;
  const auto n = std::upper_bound(ratios.begin(), ratios.end(), tau) - ratios.begin();
  return static_cast<double>(n) / static_cast<double>(ratios.size());
}

std::vector<ProfileCurve> performance_profile(const ScoreMatrix& scores) {
  require(!scores.s.empty() && !scores.methods.empty(), ErrorKind::kEvaluation, "empty score matrix");
  require(scores.tasks.empty() || scores.tasks.size() == scores.s.size(), ErrorKind::kEvaluation,
          "task names do not match score rows");
  const std::size_t M = scores.methods.size();
  std::vector<ProfileCurve> curves(M);
  for (std::size_t m = 0; m < M; ++m) curves[m].method = scores.methods[m];
  double tau_star = 1.0;
  for (const auto& row : scores.s) {
    require(row.size() == M, ErrorKind::kEvaluation, "score row has the wrong number of methods");
    std::vector<double> adj(M);
    for (std::size_t m = 0; m < M; ++m) {
      require(std::isfinite(row[m]) && row[m] >= 0.0, ErrorKind::kEvaluation, "scores must be finite and >= 0");
      adj[m] = row[m] == 0.0 ? kProfileEpsilon : row[m];
    }
    const double best = *std::min_element(adj.begin(), adj.end());
    for (std::size_t m = 0; m < M; ++m) {
      const double ratio = adj[m] / best;
      curves[m].ratios.push_back(ratio);
      tau_star = std::max(tau_star, ratio);
    }
  }
  for (auto& c : curves) {
    std::sort(c.ratios.begin(), c.ratios.end());
    c.tau_star = tau_star;
  }
  return curves;
}

std::vector<double> aup(std::vector<ProfileCurve>& curves, double margin) {
  require(!curves.empty(), ErrorKind::kEvaluation, "no profile curves");
  std::vector<double> out;
  for (auto& c : curves) {
    require(c.tau_star == curves.front().tau_star, ErrorKind::kEvaluation, "curves must share tau*");
    const double log_end = std::log(c.tau_star * (1.0 + margin));
    double area = 0.0;
    for (double r : c.ratios) area += log_end - std::log(r);
    c.aup = area / static_cast<double>(c.ratios.size());
    out.push_back(c.aup);
  }
  return out;
}

std::vector<std::size_t> aup_ranking(const std::vector<ProfileCurve>& curves) {
  std::vector<std::size_t> order(curves.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return curves[a].aup > curves[b].aup; });
  return order;
}

std::string profile_table(const std::vector<ProfileCurve>& curves) {
  std::ostringstream out;
  out << "method\ttau\trho\n";
  out << std::setprecision(10);
  for (const auto& c : curves) {
    out << c.method << '\t' << 1.0 << '\t' << c.rho(1.0) << '\n';
    for (std::size_t i = 0; i < c.ratios.size(); ++i) {
      if (c.ratios[i] == 1.0 || (i + 1 < c.ratios.size() && c.ratios[i + 1] == c.ratios[i])) continue;
      out << c.method << '\t' << c.ratios[i] << '\t' << c.rho(c.ratios[i]) << '\n';
    }
  }
  return out.str();
}

}  // namespace tabby
