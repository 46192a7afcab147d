#include "tabby/sample.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "tabby/error.hpp"

namespace tabby {

std::string_view to_string(Conditioning c) {
  return c == Conditioning::kGreatTargetFrequency ? "great_target_frequency" : "none";
}

Conditioning parse_conditioning(std::string_view text) {
  if (text == "none") return Conditioning::kNone;
  if (text == "great_target_frequency") return Conditioning::kGreatTargetFrequency;
  fail(ErrorKind::kInvalidArgument, "unknown conditioning '" + std::string(text) + "'");
}

void SampleConfig::validate() const {
  require(temperature >= 0.0 && std::isfinite(temperature), ErrorKind::kInvalidArgument,
          "temperature must be non-negative");
  require(n_rows >= 1, ErrorKind::kInvalidArgument, "n_rows must be at least 1");
  require(max_attempts_multiplier >= 1, ErrorKind::kInvalidArgument, "max_attempts_multiplier must be at least 1");
}

nlohmann::json SampleConfig::to_json() const {
  return {{"n_rows", n_rows},
          {"temperature", temperature},
          {"top_k", top_k},
          {"max_tokens_per_row", max_tokens_per_row},
          {"max_attempts_multiplier", max_attempts_multiplier},
          {"seed", seed},
          {"conditioning", to_string(conditioning)}};
}

SampleConfig SampleConfig::from_json(const nlohmann::json& doc) {
  SampleConfig c;
  c.n_rows = doc.value("n_rows", c.n_rows);
  c.temperature = doc.value("temperature", c.temperature);
  c.top_k = doc.value("top_k", c.top_k);
  c.max_tokens_per_row = doc.value("max_tokens_per_row", c.max_tokens_per_row);
  c.max_attempts_multiplier = doc.value("max_attempts_multiplier", c.max_attempts_multiplier);
  c.seed = doc.value("seed", c.seed);
  c.conditioning = parse_conditioning(doc.value("conditioning", std::string("none")));
  c.validate();
  return c;
}

SamplePrompt plain_prompt(const Schema& schema) {
  SamplePrompt p;
  p.order.resize(schema.size());
  std::iota(p.order.begin(), p.order.end(), 0);
  return p;
}

SamplePrompt great_target_prompt(const Table& train, const Schema& schema, const Vocabulary& vocab,
                                 std::mt19937_64& rng) {
  require(!train.empty(), ErrorKind::kSampling, "target-frequency prompts need a non-empty training table");
  const std::size_t target = schema.target_index;
  const auto pick = std::uniform_int_distribution<std::size_t>(0, train.size() - 1)(rng);
  const auto& column = schema.columns[target];
  Segment seg{target, vocab.tokenize(column.name)};
  seg.tokens.push_back(vocab.is_token());
  const auto value = vocab.tokenize(render_value(column, train[pick][target]));
  seg.tokens.insert(seg.tokens.end(), value.begin(), value.end());
  seg.tokens.push_back(schema.size() == 1 ? Vocabulary::kEos : Vocabulary::kEoc);

  SamplePrompt p;
  p.segments.push_back(std::move(seg));
  p.order.push_back(target);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i != target) p.order.push_back(i);
  }
  return p;
}

namespace {

int choose_token(const std::vector<float>& logits, const SampleConfig& config, std::mt19937_64& rng) {
  const std::size_t n = logits.size();
  if (config.temperature == 0.0) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::size_t keep = n;
  if (config.top_k > 0 && config.top_k < n) {
    keep = config.top_k;
    std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(keep), ids.end(),
                      [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
    std::sort(ids.begin(), ids.begin() + static_cast<long>(keep));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < keep; ++i) top = std::max(top, static_cast<double>(logits[ids[i]]));
  std::vector<double> weights(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    weights[i] = std::exp((static_cast<double>(logits[ids[i]]) - top) / config.temperature);
  }
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return static_cast<int>(ids[dist(rng)]);
}

DecodeResult overlength(std::size_t limit) {
  DecodeResult r;
  r.cause = RejectCause::kOverlength;
  r.detail = "no <EOS> within " + std::to_string(limit) + " tokens";
  return r;
}

}  // namespace

SampleOutcome sample_row(const Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                         const SampleConfig& config, const SamplePrompt& prompt, std::mt19937_64& rng) {
  const std::size_t V = schema.size();
  require(prompt.order.size() == V, ErrorKind::kSampling, "prompt column order must list every column");
  require(!model.tabbified() || model.n_experts() == V, ErrorKind::kSampling,
          "model experts do not match the schema's column count");
  const std::size_t context = model.config().context_length;
  const std::size_t limit =
      config.max_tokens_per_row > 0 ? std::min(config.max_tokens_per_row, context + 1) : context + 1;

  SampleOutcome out;
  auto session = model.decoder();
  std::size_t k = 0;
  const std::vector<float>* logits = nullptr;
  auto feed = [&](int token) {
    out.tokens.push_back(token);
    out.routes.push_back(prompt.order[k]);
    logits = &session.step(token, prompt.order[k]);
  };
  auto terminate = [&](int token) {
    out.tokens.push_back(token);
    out.routes.push_back(prompt.order[k]);
  };
  feed(Vocabulary::kBos);

  for (const auto& seg : prompt.segments) {
    for (TokenId t : seg.tokens) {
      if (t == Vocabulary::kEos) {
        terminate(t);
        out.result = try_decode_row(out.tokens, schema, vocab);
        return out;
      }
      if (t == Vocabulary::kEoc) ++k;
      require(k < V && out.tokens.size() < limit && session.position() < context, ErrorKind::kSampling,
              "prompt does not fit the row budget");
      feed(t);
    }
  }

  while (true) {
    const int token = choose_token(*logits, config, rng);
    if (token == Vocabulary::kEos) {
      terminate(token);
      break;
    }
    if (token == Vocabulary::kEoc) {
      if (k + 1 >= V) {
        terminate(token);
        out.result.cause = RejectCause::kWrongColumnCount;
        out.result.detail = "more than " + std::to_string(V) + " columns";
        return out;
      }
      ++k;
    }
    if (out.tokens.size() + 1 >= limit || session.position() >= context) {
      terminate(token);
      out.result = overlength(limit);
      return out;
    }
    feed(token);
  }
  out.result = try_decode_row(out.tokens, schema, vocab);
  return out;
}

nlohmann::json SampleReport::to_json() const {
  nlohmann::json causes = nlohmann::json::object();
  for (std::size_t c = 1; c < kRejectCauseCount; ++c) {
    causes[std::string(to_string(static_cast<RejectCause>(c)))] = rejected[c];
  }
  return {{"rows", rows.size()},
          {"attempts", attempts},
          {"validity_rate", validity_rate()},
          {"rejected", causes},
          {"wall_seconds", wall_seconds}};
}

SampleReport sample_table(const Model<float>& model, const Schema& schema, const Vocabulary& vocab,
                          const SampleConfig& config, const Table* train) {
  config.validate();
  const bool conditioned = config.conditioning == Conditioning::kGreatTargetFrequency;
  require(!conditioned || train != nullptr, ErrorKind::kSampling, "conditioned sampling needs the training table");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);
  SampleReport report;
  const std::size_t budget = config.n_rows * config.max_attempts_multiplier;
  const auto plain = plain_prompt(schema);
  while (report.rows.size() < config.n_rows && report.attempts < budget) {
    ++report.attempts;
    const auto prompt = conditioned ? great_target_prompt(*train, schema, vocab, rng) : plain;
    auto outcome = sample_row(model, schema, vocab, config, prompt, rng);
    if (outcome.result.ok()) {
      report.rows.push_back(std::move(*outcome.result.row));
    } else {
      report.rejected[static_cast<std::size_t>(outcome.result.cause)]++;
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  require(config.n_rows == 0 || !report.rows.empty(), ErrorKind::kSampling,
          "no valid samples after " + std::to_string(report.attempts) + " attempts");
  return report;
}

}  // namespace tabby
