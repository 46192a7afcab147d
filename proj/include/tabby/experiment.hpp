#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/forest.hpp"
#include "tabby/metrics.hpp"
#include "tabby/model.hpp"
#include "tabby/sample.hpp"
#include "tabby/train.hpp"

namespace tabby {

enum class Encoding { kPlain, kTabula };

// One JSON file drives every command. Relative paths resolve against the
// config file's directory; TABBY_OUTPUT_ROOT, when set, replaces that base
// for a relative output_dir.
struct ExperimentConfig {
  std::filesystem::path train_path;
  std::filesystem::path validation_path;
  std::filesystem::path test_path;
  std::filesystem::path schema_path;
  std::filesystem::path output_dir;

  Encoding encoding = Encoding::kPlain;
  ModelConfig model;  // vocab_size is set from the data
  std::string variant = "MH";
  std::vector<std::string> shared;
  TrainConfig train;
  SampleConfig sample;
  ForestParams forest;
  std::uint64_t eval_seed = 0;
  std::size_t n_runs = 3;
  std::string task = "task";
  std::string method = "method";

  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;  // paths as given after resolution
};

// Train/validation/test tables in the representation the model sees
// (ordinally encoded under Tabula) plus the original schema and test table.
struct PreparedData {
  Schema schema;        // original
  Schema model_schema;  // what is serialized
  EvalBundle bundle;    // model representation
  EvalBundle raw;       // original values
  std::optional<CodeBook> codebook;
};

PreparedData prepare_data(const ExperimentConfig& config);

std::filesystem::path run_dir(const ExperimentConfig& config, std::size_t run);

// Each command writes <output_dir>/<command>_manifest.json listing every file
// it produced and returns that manifest.
nlohmann::json cmd_train(const ExperimentConfig& config);
nlohmann::json cmd_sample(const ExperimentConfig& config);
// synthetic_paths overrides the files recorded by cmd_sample (one per run).
nlohmann::json cmd_eval(const ExperimentConfig& config, const std::vector<std::filesystem::path>& synthetic_paths = {});

// metric: "mle" scores 1 - mean MLE (lower is better), "discrimination" the mean value.
struct ProfileResult {
  ScoreMatrix scores;
  std::vector<ProfileCurve> curves;
  std::vector<std::size_t> ranking;
  nlohmann::json to_json() const;
  std::string table() const;
};

ProfileResult cmd_profile(const std::vector<std::filesystem::path>& summaries, const std::string& metric = "mle");

// Writes schema.json, train/validation/test tables and a ready-to-run config.json.
nlohmann::json cmd_make_toy(const std::string& kind, std::size_t rows, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

// Human-readable per-run and aggregate table for an eval summary.
std::string eval_table(const nlohmann::json& summary);

}  // namespace tabby
