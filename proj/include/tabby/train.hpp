#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/model.hpp"
#include "tabby/schema.hpp"
#include "tabby/vocab.hpp"

namespace tabby {

enum class TrainMode { kPlain, kGreat };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::vector<double> lr_grid = {1e-3, 1e-4, 1e-6, 1e-8};
  std::size_t eval_interval_steps = 0;        // 0: max(50, steps per epoch)
  std::size_t patience = 2;
  std::size_t column_log_interval_steps = 0;  // 0: no per-step column records
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kPlain;
  AdamConfig adam;
  bool restore_best = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct EvalBundle {
  Table train;
  Table validation;
  Table test;
};

// One line of the training log. kind is "train" (batch loss) or "eval" (validation loss).
struct LogRecord {
  std::string kind;
  std::size_t step = 0;
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
  std::vector<double> column_loss;
  std::vector<std::size_t> column_tokens;
  bool stop = false;

  nlohmann::json to_json() const;
};

struct TrainLog {
  std::vector<LogRecord> records;
  double learning_rate = 0.0;
  double best_validation_loss = 0.0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  bool early_stopped = false;
  bool diverged = false;
  // Filled by lr_grid_search: best validation loss per grid entry.
  std::vector<std::pair<double, double>> grid;

  std::vector<LogRecord> evals() const;
  void write_jsonl(const std::string& path) const;
  nlohmann::json summary() const;
};

// Training sequence for one row: <BOS>, then segments in schema order or,
// when rng is given, in a fresh uniform permutation. Every target token is
// supervised; position labels follow the token each position predicts.
Sequence make_training_sequence(const Schema& schema, const Vocabulary& vocab, const Row& row,
                                std::mt19937_64* permute_rng = nullptr);

std::vector<Sequence> make_sequences(const Schema& schema, const Vocabulary& vocab, const Table& table,
                                     std::mt19937_64* permute_rng = nullptr);

// Stops once the last `patience` evaluations each failed to beat the best loss before them.
bool early_stop(const std::vector<double>& history, std::size_t patience);

class Adam {
 public:
  Adam(std::vector<ParamPtr<float>> params, double learning_rate, AdamConfig config = {});
  void step();
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  std::vector<ParamPtr<float>> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

// Validation loss over a whole table in schema order.
LossResult evaluate_loss(const Model<float>& model, const Schema& schema, const Vocabulary& vocab, const Table& table,
                         std::size_t batch_size);

// Trains in place at config.learning_rate. Base models see each row as one
// sequence; tabbified models additionally route each position to its column's
// expert. Rows that do not fit the context raise an error naming the row.
TrainLog train_model(Model<float>& model, const Schema& schema, const Vocabulary& vocab, const EvalBundle& bundle,
                     const TrainConfig& config);

inline TrainLog train_plain(Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                            const EvalBundle& bundle, const TrainConfig& config) {
  return train_model(model, schema, vocab, bundle, config);
}

TrainLog train_tabby(Model<float>& model, const Schema& schema, const Vocabulary& vocab, const EvalBundle& bundle,
                     const TrainConfig& config);

using ModelFactory = std::function<Model<float>()>;

struct GridResult {
  double learning_rate = 0.0;
  Model<float> model;
  TrainLog log;
};

// One fresh model per grid entry; lowest validation loss wins, ties go to the larger rate.
GridResult lr_grid_search(const ModelFactory& factory, const Schema& schema, const Vocabulary& vocab,
                          const EvalBundle& bundle, const TrainConfig& config);

}  // namespace tabby
