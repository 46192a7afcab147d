// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "tabby/codec.hpp"
#include "tabby/error.hpp"
#include "tabby/metrics.hpp"
#include "tabby/sample.hpp"
#include "tabby/toy.hpp"
#include "tabby/train.hpp"
#include "test_support.hpp"

using namespace tabby;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

ModelConfig tiny(std::size_t vocab, std::size_t context = 16) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.context_length = context;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.seed = 1;
  return c;
}

Batch random_batch(std::mt19937_64& rng, std::size_t vocab, std::size_t n_columns, std::size_t rows,
                   std::size_t max_len) {
  std::vector<Sequence> seqs;
  std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
  std::uniform_int_distribution<std::size_t> len(2, max_len);
  for (std::size_t r = 0; r < rows; ++r) {
    Sequence s;
    const std::size_t n = len(rng);
    std::size_t col = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.tokens.push_back(tok(rng));
      if (i > 0 && rng() % 4 == 0 && col + 1 < n_columns) ++col;
      s.columns.push_back(col);
    }
    seqs.push_back(std::move(s));
  }
  return make_batch(seqs, n_columns, Vocabulary::kPad);
}

template <typename T>
void jitter(Model<T>& m, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : m.parameters()) {
    for (auto& v : p->value) v = static_cast<T>(static_cast<double>(v) + d(rng));
  }
}

std::size_t context_for(const Schema& schema, const Vocabulary& vocab, const Table& table) {
  std::size_t longest = 0;
  for (const auto& row : table) longest = std::max(longest, encode_plain_string(schema, vocab, row).size());
  return (longest + 8 + 7) / 8 * 8;
}

// 1. Fresh clones reproduce the base model's forward pass.
void clone_equivalence(Outcome& o) {
  std::mt19937_64 rng(1);
  auto base_f = build_base_lm<float>(tiny(29, 24));
  jitter(base_f, 2, 0.2);
  const auto base_d = base_f.cast<double>();
  double max_abs = 0.0;
  std::size_t wide_mismatch = 0;
  for (const char* v : {"MH", "MMLP", "MA", "MMLP+MH"}) {
    const auto spec = MoeSpec::parse(v, 3);
    const auto mf = tabbify(base_f, spec);
    const auto md = tabbify(base_d, spec);
    for (int i = 0; i < 100; ++i) {
      const auto batch = random_batch(rng, 29, 3, 2, 24);
      const auto a = mf.forward(batch);
      const auto b = base_f.forward(batch);
      for (std::size_t k = 0; k < a.size(); ++k) max_abs = std::max(max_abs, static_cast<double>(std::abs(a[k] - b[k])));
      if (md.forward(batch) != base_d.forward(batch)) ++wide_mismatch;
    }
  }
  o.check(wide_mismatch == 0, "wide precision differs");
  o.check(max_abs <= 1e-6, "float max abs > 1e-6");
  o.detail << "400 inputs, double mismatches " << wide_mismatch << ", float max|diff| " << max_abs;
}

// 2. Analytic gradients against central differences, every element of every tensor.
void gradient_check(Outcome& o) {
  auto base = build_base_lm<double>(tiny(19, 16));
  jitter(base, 3, 0.2);
  auto m = tabbify(base, MoeSpec::parse("MH", 3));
  jitter(m, 4, 0.1);
  std::mt19937_64 rng(5);
  const auto batch = random_batch(rng, 19, 3, 2, 12);
  m.loss_and_grads(batch);
  double worst = 0.0;
  std::string worst_name;
  const double h = 1e-6;
  for (const auto& p : m.parameters()) {
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = m.loss(batch).loss;
      p->value[i] = saved - h;
      const double down = m.loss(batch).loss;
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      diff += (p->grad[i] - numeric) * (p->grad[i] - numeric);
      norm += std::max(p->grad[i] * p->grad[i], numeric * numeric);
    }
    const double rel = norm > 0.0 ? std::sqrt(diff / norm) : std::sqrt(diff);
    if (rel > worst) {
      worst = rel;
      worst_name = p->name;
    }
  }
  o.check(worst < 1e-4, "relative error >= 1e-4");
  o.detail << m.parameters().size() << " tensors, worst relative error " << worst << " (" << worst_name << ")";
}

// 3. Per-column losses recombine to the total; clones train on the same loss as the base.
void loss_decomposition(Outcome& o) {
  auto m = tabbify(build_base_lm<double>(tiny(31, 24)), MoeSpec::parse("MMLP+MH", 4));
  jitter(m, 6, 0.3);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    auto batch = random_batch(rng, 31, 4, 3, 24);
    for (auto& mk : batch.mask) mk = mk && (rng() % 5 != 0);
    batch.mask[0] = 1;
    const auto r = m.loss(batch);
    double mix = 0.0;
    double n = 0.0;
    for (std::size_t c = 0; c < r.column_loss.size(); ++c) {
      mix += r.column_loss[c] * static_cast<double>(r.column_tokens[c]);
      n += static_cast<double>(r.column_tokens[c]);
    }
    worst = std::max(worst, std::abs(mix / n - r.loss));
  }
  o.check(worst <= 1e-8, "recombination error > 1e-8");

  const auto ds = make_toy("mixed", 200, 8);
  const auto vocab = build_vocabulary({ds.table}, ds.schema);
  const auto base = build_base_lm<float>(tiny(vocab.size(), context_for(ds.schema, vocab, ds.table)));
  const auto mh = tabbify(base, MoeSpec::parse("MMLP+MH", ds.schema.size()));
  double clone_gap = 0.0;
  for (std::size_t start = 0; start < 200; start += 20) {
    const Table chunk(ds.table.begin() + start, ds.table.begin() + start + 20);
    const auto batch = make_batch(make_sequences(ds.schema, vocab, chunk), ds.schema.size(), Vocabulary::kPad);
    clone_gap = std::max(clone_gap, std::abs(mh.loss(batch).loss - base.loss(batch).loss));
  }
  o.check(clone_gap <= 1e-6, "clone loss differs by > 1e-6");
  o.detail << "50 batches, max recombination error " << worst << "; clone vs plain loss gap " << clone_gap;
}

// 4. Random rows over random flat and nested schemas survive the codec, in any segment order.
void codec_round_trip(Outcome& o) {
  std::mt19937_64 rng(9);
  std::size_t rows = 0;
  std::size_t failures = 0;
  std::size_t nested = 0;
  for (int k = 0; k < 50; ++k) {
    const auto s = testing::random_schema(rng, 8, k % 2 == 0 ? 0 : 3);
    nested += s.nested();
    const auto t = testing::random_table(s, 200, rng);
    const auto v = build_vocabulary({t}, s);
    for (const auto& r : t) {
      ++rows;
      const auto segs = encode_plain_segments(s, v, r);
      bool ok = rows_equal(s, decode_row(concat_segments(segs), s, v), r);
      ok = ok && rows_equal(s, decode_row(concat_segments(permute_segments(segs, rng)), s, v), r);
      if (s.nested()) ok = ok && rows_equal(s, flatten_nested(unflatten_nested(r, s), s), r);
      failures += !ok;
    }
  }
  o.check(rows == 10000, "row count");
  o.check(failures == 0, "round-trip failures");
  o.detail << rows << " rows over 50 schemas (" << nested << " nested), " << failures << " failures";
}

// 5. Train Tabby MH with the Plain scheme on the deterministic toy and sample 2,000 rows.
void toy_synthesis(Outcome& o) {
  const auto ds = make_toy("deterministic", 2000, 1);
  const auto b = split_bundle(ds.table, 2);
  const auto vocab = build_vocabulary({b.train}, ds.schema);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.context_length = 64;
  mc.seed = 3;
  auto m = tabbify(build_base_lm<float>(mc), MoeSpec::parse("MH", ds.schema.size()));
  TrainConfig tc;
  tc.max_epochs = 40;
  tc.patience = 5;
  tc.learning_rate = 2e-3;
  tc.lr_grid = {2e-3};
  const auto log = train_model(m, ds.schema, vocab, b, tc);
  SampleConfig sc;
  sc.n_rows = 2000;
  sc.seed = 5;
  const auto report = sample_table(m, ds.schema, vocab, sc);
  std::map<std::string, double> freq;
  for (const auto& r : report.rows) freq[std::get<std::string>(r[0])] += 1.0 / static_cast<double>(report.rows.size());
  const std::map<std::string, double> truth = {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}};
  double tv = 0.0;
  std::set<std::string> keys;
  for (const auto& [k, _] : freq) keys.insert(k);
  for (const auto& [k, _] : truth) keys.insert(k);
  for (const auto& k : keys) {
    const double p = freq.count(k) ? freq.at(k) : 0.0;
    const double q = truth.count(k) ? truth.at(k) : 0.0;
    tv += 0.5 * std::abs(p - q);
  }
  const auto scores = mle(b.train, report.rows, b.test, ds.schema, 7);
  const double disc = discrimination(b.train, report.rows, ds.schema, 7);
  o.check(report.validity_rate() >= 0.95, "validity < 0.95");
  o.check(tv <= 0.10, "x marginal TV > 0.10");
  o.check(std::abs(scores.synthetic - scores.original) <= 0.05, "MLE gap > 0.05");
  o.check(disc <= 0.15, "discrimination > 0.15");
  o.detail << log.steps << " steps; validity " << report.validity_rate() << ", TV(x) " << tv << ", MLE S "
           << scores.synthetic << " R " << scores.original << ", discrimination " << disc;
}

// 6. A model overfit to 32 rows samples only training rows under greedy decoding.
void memorization(Outcome& o) {
  const auto ds = make_toy("memorize", 32, 1);
  const auto vocab = build_vocabulary({ds.table}, ds.schema);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.context_length = context_for(ds.schema, vocab, ds.table);
  mc.d_model = 32;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.seed = 2;
  auto m = tabbify(build_base_lm<float>(mc), MoeSpec::parse("MH", ds.schema.size()));
  EvalBundle b{ds.table, ds.table, ds.table};
  TrainConfig tc;
  tc.max_epochs = 400;
  tc.batch_size = 32;
  tc.learning_rate = 5e-3;
  tc.lr_grid = {5e-3};
  tc.eval_interval_steps = 50;
  tc.patience = 100;
  const auto log = train_model(m, ds.schema, vocab, b, tc);
  SampleConfig sc;
  sc.temperature = 0.0;
  sc.n_rows = 32;
  const auto report = sample_table(m, ds.schema, vocab, sc);
  std::size_t outside = 0;
  for (const auto& r : report.rows) {
    outside += std::none_of(ds.table.begin(), ds.table.end(), [&](const Row& t) { return rows_equal(ds.schema, r, t); });
  }
  const double d = dcr(ds.table, report.rows, ds.schema);
  o.check(!report.rows.empty(), "no samples");
  o.check(outside == 0, "sampled rows outside the training set");
  o.check(d == 0.0, "DCR != 0");
  o.detail << "train loss " << log.best_validation_loss << " nats/token; " << report.rows.size()
           << " greedy rows, " << outside << " not in training set, DCR " << d;
}

// 7. Metric oracles.
void metric_oracles(Outcome& o) {
  std::mt19937_64 rng(11);
  Schema s;
  s.columns = {ColumnSpec{"x", DType::kFloat, Role::kFeature, {}, 2}, ColumnSpec{"n", DType::kInteger, Role::kFeature, {}, 0},
               ColumnSpec{"c", DType::kCategorical, Role::kTarget, {}, 0}};
  validate_schema(s);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::size_t dcr_mismatch = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Table r, syn;
    auto row = [&] {
      return Row{std::round(u(rng) * 100) / 100, static_cast<std::int64_t>(rng() % 9),
                 std::string(1, static_cast<char>('a' + rng() % 3))};
    };
    for (int i = 0; i < 20; ++i) r.push_back(row());
    for (int i = 0; i < 20; ++i) syn.push_back(row());
    double range[2];
    for (int c = 0; c < 2; ++c) {
      double lo = numeric_value(r[0][c]), hi = lo;
      for (const auto& x : r) {
        lo = std::min(lo, numeric_value(x[c]));
        hi = std::max(hi, numeric_value(x[c]));
      }
      range[c] = hi > lo ? hi - lo : 1.0;
    }
    double total = 0.0;
    for (const auto& a : syn) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : r) {
        double d = 0.0;
        for (int c = 0; c < 2; ++c) d += std::abs(numeric_value(a[c]) - numeric_value(b[c])) / range[c];
        d += std::get<std::string>(a[2]) == std::get<std::string>(b[2]) ? 0.0 : 1.0;
        best = std::min(best, d);
      }
      total += best;
    }
    dcr_mismatch += dcr(r, syn, s) != total / static_cast<double>(syn.size());
  }
  o.check(dcr_mismatch == 0, "DCR differs from brute force");

  const auto ds = make_toy("mixed", 1000, 12);
  const Table h1(ds.table.begin(), ds.table.begin() + 500);
  const Table h2(ds.table.begin() + 500, ds.table.end());
  const double disc = discrimination(h1, h2, ds.schema, 13);
  o.check(disc <= 0.10, "real-vs-real discrimination > 0.10");

  const bool r2_ok = r2_clipped({1, 2, 3}, {1, 2, 3}) == 1.0 && r2_clipped({2, 2, 2}, {1, 2, 3}) == 0.0 &&
                     std::abs(r2_clipped({1, 2, 4}, {1, 2, 3}) - 0.5) < 1e-15 &&
                     r2_clipped({3, 2, 1}, {1, 2, 3}) == 0.0;
  o.check(r2_ok, "r2_clipped fixtures");

  ScoreMatrix sm{{"t1", "t2"}, {"m1", "m2"}, {{0.1, 0.2}, {0.2, 0.4}}};
  auto curves = performance_profile(sm);
  const auto areas = aup(curves);
  const bool profile_ok = curves[0].tau_star == 2.0 && curves[0].rho(1.0) == 1.0 && curves[1].rho(1.0) == 0.0 &&
                          curves[1].rho(1.999) == 0.0 && curves[1].rho(2.0) == 1.0 &&
                          std::abs(areas[0] - std::log(2.1)) < 1e-12 && std::abs(areas[1] - std::log(1.05)) < 1e-12 &&
                          aup_ranking(curves) == std::vector<std::size_t>{0, 1};
  o.check(profile_ok, "profile worked example");
  o.detail << "DCR brute-force mismatches " << dcr_mismatch << "/20; halves discrimination " << disc
           << "; r2 fixtures " << (r2_ok ? "ok" : "wrong") << "; tau* " << curves[0].tau_star << ", AUP m1 "
           << areas[0] << " > m2 " << areas[1];
}

// 8. Target-frequency conditioning.
void great_conditioning(Outcome& o) {
  Schema s;
  s.columns = {ColumnSpec{"f", DType::kCategorical, Role::kFeature, {}, 0},
               ColumnSpec{"label", DType::kCategorical, Role::kTarget, {}, 0}};
  validate_schema(s);
  const Table train = {{std::string("u"), std::string("A")},
                       {std::string("v"), std::string("A")},
                       {std::string("w"), std::string("B")}};
  const auto vocab = build_vocabulary({train}, s);
  std::mt19937_64 rng(14);
  int a = 0;
  for (int i = 0; i < 30000; ++i) a += great_target_prompt(train, s, vocab, rng).segments[0].tokens[2] == vocab.id("A");
  const double p = a / 30000.0;
  o.check(std::abs(p - 2.0 / 3.0) <= 0.01, "P(A) off");

  const auto ds = make_toy("deterministic", 600, 15);
  const auto b = split_bundle(ds.table, 16);
  const auto v = build_vocabulary({b.train}, ds.schema);
  auto m = tabbify(build_base_lm<float>(tiny(v.size(), 32)), MoeSpec::parse("MH", ds.schema.size()));
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.mode = TrainMode::kGreat;
  tc.learning_rate = 5e-3;
  tc.lr_grid = {5e-3};
  train_model(m, ds.schema, v, b, tc);
  SampleConfig sc;
  sc.n_rows = 500;
  sc.seed = 17;
  sc.conditioning = Conditioning::kGreatTargetFrequency;
  sc.max_attempts_multiplier = 50;
  const auto report = sample_table(m, ds.schema, v, sc, &b.train);
  std::set<std::string> seen;
  for (const auto& r : b.train) seen.insert(std::get<std::string>(r[ds.schema.target_index]));
  std::size_t violations = 0;
  for (const auto& r : report.rows) violations += !seen.count(std::get<std::string>(r[ds.schema.target_index]));
  o.check(violations == 0, "out-of-training target values");
  o.check(!report.rows.empty(), "no conditioned samples");
  o.detail << "P(A) " << p << " over 30000 prompts; " << report.rows.size() << " conditioned rows, " << violations
           << " violations";
}

// 9. A constant column's loss collapses within one epoch while others stay above it.
void column_telemetry(Outcome& o) {
  const auto ds = make_toy("constant", 2000, 18);
  const auto b = split_bundle(ds.table, 19);
  const auto vocab = build_vocabulary({b.train}, ds.schema);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.context_length = context_for(ds.schema, vocab, ds.table);
  mc.seed = 20;
  auto m = tabbify(build_base_lm<float>(mc), MoeSpec::parse("MH", ds.schema.size()));
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 8;
  tc.learning_rate = 3e-3;
  tc.lr_grid = {3e-3};
  tc.eval_interval_steps = 20;
  const auto log = train_model(m, ds.schema, vocab, b, tc);
  const std::size_t k = *ds.schema.find("k");
  bool separated = false;
  double k_loss = 0.0;
  double other = 0.0;
  for (const auto& r : log.evals()) {
    double max_other = 0.0;
    for (std::size_t c = 0; c < r.column_loss.size(); ++c) {
      if (c != k) max_other = std::max(max_other, r.column_loss[c]);
    }
    if (r.column_loss[k] < 0.05 && max_other > 0.05) {
      separated = true;
      k_loss = r.column_loss[k];
      other = max_other;
      o.detail << "step " << r.step << " of " << log.steps << ": ";
      break;
    }
  }
  o.check(separated, "constant column never below 0.05 with another column above");
  o.detail << "constant column loss " << k_loss << ", highest other column " << other;
}

// 10. Nested records: recursive Tabby MH trains, samples valid documents and keeps MLE.
void nested_data(Outcome& o) {
  const auto ds = make_toy("nested", 2000, 21);
  const auto b = split_bundle(ds.table, 22);
  const auto vocab = build_vocabulary({b.train}, ds.schema);
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.context_length = context_for(ds.schema, vocab, ds.table);
  mc.seed = 23;
  auto m = tabbify(build_base_lm<float>(mc), MoeSpec::parse("MH", ds.schema.size()));
  TrainConfig tc;
  tc.max_epochs = 20;
  tc.patience = 4;
  tc.learning_rate = 2e-3;
  tc.lr_grid = {2e-3};
  const auto log = train_model(m, ds.schema, vocab, b, tc);
  SampleConfig sc;
  sc.n_rows = 1000;
  sc.seed = 24;
  const auto report = sample_table(m, ds.schema, vocab, sc);
  std::size_t bad_docs = 0;
  for (const auto& r : report.rows) {
    const auto doc = unflatten_nested(r, ds.schema);
    bad_docs += !(doc.contains("disc_info") && doc.contains("rim_info") &&
                  rows_equal(ds.schema, flatten_nested(doc, ds.schema), r));
  }
  const auto scores = mle(b.train, report.rows, b.test, ds.schema, 25);
  o.check(report.validity_rate() >= 0.90, "validity < 0.90");
  o.check(bad_docs == 0, "documents do not round-trip");
  o.check(std::abs(scores.synthetic - scores.original) <= 0.07, "MLE gap > 0.07");
  o.detail << log.steps << " steps, context " << mc.context_length << "; validity " << report.validity_rate()
           << ", MLE S " << scores.synthetic << " R " << scores.original;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"clone equivalence", clone_equivalence},   {"gradient check", gradient_check},
      {"loss decomposition", loss_decomposition}, {"codec round-trip", codec_round_trip},
      {"toy synthesis", toy_synthesis},           {"memorization", memorization},
      {"metric oracles", metric_oracles},         {"great conditioning", great_conditioning},
      {"column telemetry", column_telemetry},     {"nested data", nested_data}};
  const std::vector<double> budget_s = {10, 120, 600, 600, 600, 120, 600, 600, 600, 600};

  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[error: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > budget_s[i]) o.check(false, "runtime budget");
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
