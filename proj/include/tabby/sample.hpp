#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/codec.hpp"
#include "tabby/model.hpp"

namespace tabby {

enum class Conditioning { kNone, kGreatTargetFrequency };

std::string_view to_string(Conditioning c);
Conditioning parse_conditioning(std::string_view text);

struct SampleConfig {
  std::size_t n_rows = 1000;
  double temperature = 1.0;  // 0 selects the argmax
  std::size_t top_k = 0;     // 0 disables
  std::size_t max_tokens_per_row = 0;  // 0: the model's context length
  std::size_t max_attempts_multiplier = 10;
  std::uint64_t seed = 0;
  Conditioning conditioning = Conditioning::kNone;

  void validate() const;
  nlohmann::json to_json() const;
  static SampleConfig from_json(const nlohmann::json& doc);
};

// Fixed start of a generated row: <BOS> plus any given segments, and the
// column order used to route the rest of the row.
struct SamplePrompt {
  ColumnSegments segments;
  std::vector<std::size_t> order;
};

SamplePrompt plain_prompt(const Schema& schema);

// "<BOS> TARGET is VALUE <EOC>" with VALUE drawn from the training target
// column's empirical distribution; the other columns follow in schema order.
SamplePrompt great_target_prompt(const Table& train, const Schema& schema, const Vocabulary& vocab,
                                 std::mt19937_64& rng);

struct SampleOutcome {
  DecodeResult result;
  TokenSeq tokens;                  // full sequence including <BOS>
  std::vector<std::size_t> routes;  // column fed with each token of `tokens`
};

SampleOutcome sample_row(const Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                         const SampleConfig& config, const SamplePrompt& prompt, std::mt19937_64& rng);

inline SampleOutcome sample_row(const Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                                const SampleConfig& config, std::mt19937_64& rng) {
  return sample_row(model, schema, vocab, config, plain_prompt(schema), rng);
}

struct SampleReport {
  Table rows;
  std::size_t attempts = 0;
  std::array<std::size_t, kRejectCauseCount> rejected{};
  double wall_seconds = 0.0;

  double validity_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(rows.size()) / static_cast<double>(attempts);
  }
  nlohmann::json to_json() const;  // without the rows
};

// train is needed only for target-frequency conditioning.
SampleReport sample_table(const Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                          const SampleConfig& config, const Table* train = nullptr);

}  // namespace tabby
