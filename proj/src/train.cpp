#include "tabby/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tabby/codec.hpp"
#include "tabby/error.hpp"

namespace tabby {

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::kGreat ? "great" : "plain";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "plain") return TrainMode::kPlain;
  if (text == "great") return TrainMode::kGreat;
  fail(ErrorKind::kInvalidArgument, "unknown training mode '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  require(max_epochs >= 1, ErrorKind::kInvalidArgument, "max_epochs must be at least 1");
  require(batch_size >= 1, ErrorKind::kInvalidArgument, "batch_size must be at least 1");
  require(patience >= 1, ErrorKind::kInvalidArgument, "patience must be at least 1");
  require(!lr_grid.empty(), ErrorKind::kInvalidArgument, "lr_grid must not be empty");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kInvalidArgument,
          "learning_rate must be positive");
  for (double lr : lr_grid) {
    require(lr > 0.0 && std::isfinite(lr), ErrorKind::kInvalidArgument, "lr_grid entries must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"lr_grid", lr_grid},
          {"eval_interval_steps", eval_interval_steps},
          {"patience", patience},
          {"column_log_interval_steps", column_log_interval_steps},
          {"seed", seed},
          {"mode", to_string(mode)},
          {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"restore_best", restore_best}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.lr_grid = doc.value("lr_grid", c.lr_grid);
  c.eval_interval_steps = doc.value("eval_interval_steps", c.eval_interval_steps);
  c.patience = doc.value("patience", c.patience);
  c.column_log_interval_steps = doc.value("column_log_interval_steps", c.column_log_interval_steps);
  c.seed = doc.value("seed", c.seed);
  c.mode = parse_train_mode(doc.value("mode", std::string("plain")));
  if (doc.contains("adam")) {
    const auto& a = doc.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
  }
  c.restore_best = doc.value("restore_best", c.restore_best);
  c.validate();
  return c;
}

nlohmann::json LogRecord::to_json() const {
  return {{"kind", kind},         {"step", step},         {"epoch", epoch},
          {"lr", learning_rate},  {"loss", loss},         {"column_loss", column_loss},
          {"column_tokens", column_tokens}, {"stop", stop}};
}

std::vector<LogRecord> TrainLog::evals() const {
  std::vector<LogRecord> out;
  for (const auto& r : records) {
    if (r.kind == "eval") out.push_back(r);
  }
  return out;
}

void TrainLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

nlohmann::json TrainLog::summary() const {
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& [lr, loss] : grid) {
    grid_json.push_back({{"lr", lr}, {"validation_loss", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr)}});
  }
  return {{"learning_rate", learning_rate},
          {"best_validation_loss", best_validation_loss},
          {"best_step", best_step},
          {"steps", steps},
          {"epochs", epochs},
          {"early_stopped", early_stopped},
          {"diverged", diverged},
          {"grid", grid_json}};
}

Sequence make_training_sequence(const Schema& schema, const Vocabulary& vocab, const Row& row,
                                std::mt19937_64* permute_rng) {
  auto segments = encode_plain_segments(schema, vocab, row);
  if (permute_rng != nullptr) segments = permute_segments(segments, *permute_rng);
  Sequence s;
  s.tokens = concat_segments(segments, true);
  s.columns = routing_columns(segments, true);
  return s;
}

std::vector<Sequence> make_sequences(const Schema& schema, const Vocabulary& vocab, const Table& table,
                                     std::mt19937_64* permute_rng) {
  std::vector<Sequence> out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(make_training_sequence(schema, vocab, row, permute_rng));
  return out;
}

bool early_stop(const std::vector<double>& history, std::size_t patience) {
  require(!history.empty(), ErrorKind::kInvalidArgument, "early_stop needs a non-empty history");
  require(patience >= 1, ErrorKind::kInvalidArgument, "patience must be at least 1");
  if (history.size() <= patience) return false;
  const std::size_t first = history.size() - patience;
  double best = *std::min_element(history.begin(), history.begin() + static_cast<long>(first));
  for (std::size_t i = first; i < history.size(); ++i) {
    if (history[i] < best) return false;
  }
  return true;
}

Adam::Adam(std::vector<ParamPtr<float>> params, double learning_rate, AdamConfig config)
    : params_(std::move(params)), lr_(learning_rate), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p->numel(), 0.0F);
    v_.emplace_back(p->numel(), 0.0F);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const auto step_size = static_cast<float>(lr_ / c1);
  const auto v_scale = static_cast<float>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<float>(config_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0F - b1) * g;
      v[i] = b2 * v[i] + (1.0F - b2) * g * g;
      p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * v_scale + eps);
    }
  }
}

namespace {

std::vector<Batch> batches_of(const std::vector<Sequence>& seqs, const std::vector<std::size_t>& order,
                              std::size_t batch_size, std::size_t n_columns) {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<Sequence> chunk;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) chunk.push_back(seqs[order[i]]);
    out.push_back(make_batch(chunk, n_columns, Vocabulary::kPad));
  }
  return out;
}

void check_fits(const std::vector<Sequence>& seqs, std::size_t context, const std::string& split) {
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::size_t len = seqs[i].tokens.size() - 1;
    require(len <= context, ErrorKind::kTraining,
            split + " row " + std::to_string(i) + " encodes to " + std::to_string(len) +
                " positions, exceeding the context length " + std::to_string(context));
  }
}

std::vector<std::vector<float>> snapshot(const Model<float>& model) {
  std::vector<std::vector<float>> out;
  for (const auto& p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore(Model<float>& model, const std::vector<std::vector<float>>& values) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

LossResult evaluate_loss(const Model<float>& model, const Schema& schema, const Vocabulary& vocab, const Table& table,
                         std::size_t batch_size) {
  require(!table.empty(), ErrorKind::kTraining, "cannot evaluate on an empty table");
  const auto seqs = make_sequences(schema, vocab, table);
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t V = schema.size();
  LossResult total;
  total.column_loss.assign(V, 0.0);
  total.column_tokens.assign(V, 0);
  double sum = 0.0;
  std::vector<double> column_sum(V, 0.0);
  for (const auto& batch : batches_of(seqs, order, batch_size, V)) {
    const auto r = model.loss(batch);
    sum += r.loss * static_cast<double>(r.tokens);
    total.tokens += r.tokens;
    for (std::size_t c = 0; c < V; ++c) {
      column_sum[c] += r.column_loss[c] * static_cast<double>(r.column_tokens[c]);
      total.column_tokens[c] += r.column_tokens[c];
    }
  }
  total.loss = sum / static_cast<double>(total.tokens);
  for (std::size_t c = 0; c < V; ++c) {
    if (total.column_tokens[c] > 0) total.column_loss[c] = column_sum[c] / static_cast<double>(total.column_tokens[c]);
  }
  return total;
}

TrainLog train_model(Model<float>& model, const Schema& schema, const Vocabulary& vocab, const EvalBundle& bundle,
                     const TrainConfig& config) {
  config.validate();
  require(!bundle.train.empty(), ErrorKind::kTraining, "training table is empty");
  require(!bundle.validation.empty(), ErrorKind::kTraining, "validation table is empty");
  require(model.config().vocab_size == vocab.size(), ErrorKind::kTraining,
          "model vocabulary size does not match the dataset vocabulary");
  const std::size_t V = schema.size();
  if (model.tabbified()) {
    require(model.n_experts() == V, ErrorKind::kTraining,
            "model has " + std::to_string(model.n_experts()) + " experts but the schema has " + std::to_string(V) +
                " columns");
  }
  const std::size_t context = model.config().context_length;
  check_fits(make_sequences(schema, vocab, bundle.train), context, "training");
  check_fits(make_sequences(schema, vocab, bundle.validation), context, "validation");

  const std::size_t n = bundle.train.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t eval_interval =
      config.eval_interval_steps > 0 ? config.eval_interval_steps : std::max<std::size_t>(50, steps_per_epoch);

  std::mt19937_64 rng(config.seed);
  Adam optimizer(model.parameters(), config.learning_rate, config.adam);
  TrainLog log;
  log.learning_rate = config.learning_rate;
  log.best_validation_loss = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  std::vector<std::vector<float>> best = snapshot(model);
  std::size_t step = 0;
  std::size_t last_eval_step = 0;
  bool stop = false;

  auto evaluate = [&](std::size_t epoch) {
    const auto r = evaluate_loss(model, schema, vocab, bundle.validation, config.batch_size);
    LogRecord rec{"eval", step, epoch, config.learning_rate, r.loss, r.column_loss, r.column_tokens, false};
    last_eval_step = step;
    if (!std::isfinite(r.loss)) {
      log.diverged = true;
      rec.stop = true;
      log.records.push_back(std::move(rec));
      stop = true;
      return;
    }
    if (r.loss < log.best_validation_loss) {
      log.best_validation_loss = r.loss;
      log.best_step = step;
      if (config.restore_best) best = snapshot(model);
    }
    history.push_back(r.loss);
    rec.stop = early_stop(history, config.patience);
    log.early_stopped = rec.stop;
    stop = rec.stop;
    log.records.push_back(std::move(rec));
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t epoch = 0;
  for (; epoch < config.max_epochs && !stop; ++epoch) {
    const auto seqs = make_sequences(schema, vocab, bundle.train, config.mode == TrainMode::kGreat ? &rng : nullptr);
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& batch : batches_of(seqs, order, config.batch_size, V)) {
      const auto r = model.loss_and_grads(batch);
      ++step;
      if (!std::isfinite(r.loss)) {
        log.diverged = true;
        log.records.push_back({"train", step, epoch + 1, config.learning_rate, r.loss, r.column_loss,
                               r.column_tokens, true});
        stop = true;
        break;
      }
      optimizer.step();
      if (config.column_log_interval_steps > 0 && step % config.column_log_interval_steps == 0) {
        log.records.push_back(
            {"train", step, epoch + 1, config.learning_rate, r.loss, r.column_loss, r.column_tokens, false});
      }
      if (step % eval_interval == 0) {
        evaluate(epoch + 1);
        if (stop) break;
      }
    }
  }
  if (!stop && last_eval_step != step) evaluate(epoch);
  log.steps = step;
  log.epochs = epoch;
  if (config.restore_best && std::isfinite(log.best_validation_loss)) restore(model, best);
  return log;
}

TrainLog train_tabby(Model<float>& model, const Schema& schema, const Vocabulary& vocab, const EvalBundle& bundle,
                     const TrainConfig& config) {
  require(model.tabbified(), ErrorKind::kTraining, "train_tabby needs a tabbified model");
  return train_model(model, schema, vocab, bundle, config);
}

GridResult lr_grid_search(const ModelFactory& factory, const Schema& schema, const Vocabulary& vocab,
                          const EvalBundle& bundle, const TrainConfig& config) {
  config.validate();
  std::optional<GridResult> best;
  std::vector<std::pair<double, double>> grid;
  for (double lr : config.lr_grid) {
    auto cfg = config;
    cfg.learning_rate = lr;
    auto model = factory();
    auto log = train_model(model, schema, vocab, bundle, cfg);
    const double loss = log.diverged ? std::numeric_limits<double>::infinity() : log.best_validation_loss;
    grid.emplace_back(lr, loss);
    if (!std::isfinite(loss)) continue;
    const bool better = !best || loss < best->log.best_validation_loss ||
                        (loss == best->log.best_validation_loss && lr > best->learning_rate);
    if (better) best = GridResult{lr, std::move(model), std::move(log)};
  }
  require(best.has_value(), ErrorKind::kTraining, "no stable learning rate");
  best->log.grid = grid;
  return std::move(*best);
}

}  // namespace tabby
