#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/forest.hpp"
#include "tabby/schema.hpp"

namespace tabby {

// max(1 - SSE / SST, 0).
double r2_clipped(const std::vector<double>& predictions, const std::vector<double>& truth);

struct MleScores {
  double synthetic = 0.0;  // model fit on S
  double original = 0.0;   // model fit on R, the upper bound
};

// Accuracy for classification, clipped R^2 for regression, both scored on D.
MleScores mle(const Table& real, const Table& synthetic, const Table& test, const Schema& schema, std::uint64_t seed,
              const ForestParams& params = {});

// |held-out accuracy - 0.5| of a forest separating real from synthetic rows.
double discrimination(const Table& real, const Table& synthetic, const Schema& schema, std::uint64_t seed,
                      const ForestParams& params = {});

// Mean over S of the minimum mixed distance to R: 0/1 per categorical or
// boolean column plus |x - y| / range_R per numeric column (raw |x - y| when
// R's range is zero).
double dcr(const Table& real, const Table& synthetic, const Schema& schema);

struct MetricReport {
  double mle_synthetic = 0.0;
  double mle_original = 0.0;
  double discrimination = 0.0;
  double dcr = 0.0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& doc);
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for one value
};

MeanStd mean_std(const std::vector<double>& values);

// s[t][m]: lower is better; rows are tasks, columns methods.
struct ScoreMatrix {
  std::vector<std::string> tasks;
  std::vector<std::string> methods;
  std::vector<std::vector<double>> s;
};

inline constexpr double kProfileEpsilon = 1e-6;
inline constexpr double kAupMargin = 0.05;

struct ProfileCurve {
  std::string method;
  std::vector<double> ratios;  // sorted; rho steps up by 1/|T| at each
  double tau_star = 1.0;
  double aup = 0.0;

  // Fraction of tasks with ratio <= tau.
  double rho(double tau) const;
};

std::vector<ProfileCurve> performance_profile(const ScoreMatrix& scores);

// Integral of rho over log tau on [1, tau* (1 + margin)]; also stores it in each curve.
std::vector<double> aup(std::vector<ProfileCurve>& curves, double margin = kAupMargin);

// Method indices by decreasing AUP, ties in input order.
std::vector<std::size_t> aup_ranking(const std::vector<ProfileCurve>& curves);

// Plain-text breakpoint table: method, tau, rho.
std::string profile_table(const std::vector<ProfileCurve>& curves);

}  // namespace tabby
