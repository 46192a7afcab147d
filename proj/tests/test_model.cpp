#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tabby/error.hpp"
#include "tabby/model.hpp"

using namespace tabby;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 23;
  c.context_length = 16;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.seed = 42;
  return c;
}

constexpr std::size_t kColumns = 3;

Sequence random_sequence(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
  Sequence s;
  std::uniform_int_distribution<int> tok(0, static_cast<int>(vocab) - 1);
  for (std::size_t i = 0; i < len; ++i) s.tokens.push_back(tok(rng));
  // columns increase in runs, like a row of segments
  std::size_t col = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0 && i % 4 == 0 && col + 1 < kColumns) ++col;
    s.columns.push_back(col);
  }
  return s;
}

Batch random_batch(std::uint64_t seed, std::size_t vocab, std::size_t rows = 3) {
  std::mt19937_64 rng(seed);
  std::vector<Sequence> seqs;
  for (std::size_t r = 0; r < rows; ++r) seqs.push_back(random_sequence(rng, 6 + 3 * r, vocab));
  return make_batch(seqs, kColumns, 3);
}

// Randomizes every parameter so that clones, norms and biases carry signal.
template <typename T>
void jitter(Model<T>& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& p : m.parameters()) {
    for (auto& v : p->value) v = static_cast<T>(static_cast<double>(v) + dist(rng));
  }
}

const char* const kVariants[] = {"MH", "MMLP", "MMLP+MH", "MA"};

std::size_t block_size(const Model<float>& m, MoeSite site) {
  const auto& l = m.layers().front();
  std::size_t n = 0;
  if (site == MoeSite::kMlp) {
    const auto& f = l.mlp.front();
    for (auto* p : {&f.norm.gain, &f.norm.bias, &f.fc_weight, &f.fc_bias, &f.proj_weight, &f.proj_bias}) {
      n += (*p)->numel();
    }
  } else {
    const auto& a = l.attention.front();
    for (auto* p : {&a.norm.gain, &a.norm.bias, &a.qkv_weight, &a.qkv_bias, &a.proj_weight, &a.proj_bias}) {
      n += (*p)->numel();
    }
  }
  return n;
}

}  // namespace

TEST_CASE("base model is deterministic in its seed") {
  const auto a = build_base_lm<float>(tiny_config());
  const auto b = build_base_lm<float>(tiny_config());
  const auto batch = random_batch(1, tiny_config().vocab_size);
  CHECK(a.forward(batch) == b.forward(batch));
  auto c = tiny_config();
  c.seed = 43;
  CHECK(build_base_lm<float>(c).forward(batch) != a.forward(batch));
}

TEST_CASE("fresh clones reproduce the base model exactly") {
  auto base = build_base_lm<float>(tiny_config());
  jitter(base, 9);
  const auto batch = random_batch(2, tiny_config().vocab_size);
  const auto ref = base.forward(batch);
  for (const char* v : kVariants) {
    CAPTURE(v);
    for (std::size_t experts : {1U, 3U}) {
      const auto m = tabbify(base, MoeSpec::parse(v, experts));
      CHECK(m.forward(batch) == ref);
      CHECK(m.loss(batch).loss == base.loss(batch).loss);
    }
  }
}

TEST_CASE("tabbify deep-copies its input") {
  auto base = build_base_lm<float>(tiny_config());
  auto m = tabbify(base, MoeSpec::parse("MMLP+MH", 3));
  const auto batch = random_batch(3, tiny_config().vocab_size);
  const auto before = base.forward(batch);
  jitter(m, 4);
  CHECK(base.forward(batch) == before);
}

TEST_CASE("parameter counts grow by one block per extra expert") {
  const auto base = build_base_lm<float>(tiny_config());
  const auto c = tiny_config();
  const std::size_t head = c.d_model * c.vocab_size;
  const std::size_t V = 4;
  CHECK(tabbify(base, MoeSpec::parse("MH", V)).parameter_count() == base.parameter_count() + (V - 1) * head);
  CHECK(tabbify(base, MoeSpec::parse("MMLP", V)).parameter_count() ==
        base.parameter_count() + (V - 1) * c.n_layers * block_size(base, MoeSite::kMlp));
  CHECK(tabbify(base, MoeSpec::parse("MMLP+MH", V)).parameter_count() ==
        base.parameter_count() + (V - 1) * (head + c.n_layers * block_size(base, MoeSite::kMlp)));
  CHECK(tabbify(base, MoeSpec::parse("MA", V)).parameter_count() ==
        base.parameter_count() + (V - 1) * c.n_layers * block_size(base, MoeSite::kAttention));

  auto shared = MoeSpec::parse("MMLP", V);
  shared.shared.insert(MoeSite::kMlp);
  const std::size_t per_expert = c.d_ff * c.d_model + c.d_model;
  CHECK(tabbify(base, shared).parameter_count() == base.parameter_count() + (V - 1) * c.n_layers * per_expert);
}

TEST_CASE("invalid tabbify requests are rejected") {
  const auto base = build_base_lm<float>(tiny_config());
  const auto m = tabbify(base, MoeSpec::parse("MH", 3));
  CHECK_THROWS_AS(tabbify(m, MoeSpec::parse("MH", 3)), Error);
  auto bad = MoeSpec::parse("MH", 3);
  bad.shared.insert(MoeSite::kLmHead);
  CHECK_THROWS_AS(tabbify(base, bad), Error);
  CHECK_THROWS_AS(MoeSpec::parse("MX", 3), Error);
  // a batch that names column 2 cannot run through two experts
  const auto two = tabbify(base, MoeSpec::parse("MH", 2));
  CHECK_THROWS_AS(two.forward(random_batch(5, tiny_config().vocab_size)), Error);
}

TEST_CASE("an expert only receives gradient from its own column") {
  auto base = build_base_lm<double>(tiny_config());
  jitter(base, 10);
  auto batch = random_batch(6, tiny_config().vocab_size);
  for (auto& c : batch.columns) c = c == 1 ? 2 : c;
  for (const char* v : kVariants) {
    CAPTURE(v);
    auto m = tabbify(base, MoeSpec::parse(v, kColumns));
    m.loss_and_grads(batch);
    for (const auto& p : m.parameters()) {
      double norm = 0.0;
      for (auto g : p->grad) norm += std::abs(g);
      bool expert1 = false;
      for (const char* tag : {"attention.1.", "mlp.1.", "lm_head.1."}) expert1 |= p->name.find(tag) != std::string::npos;
      CAPTURE(p->name);
      if (expert1) CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("perturbing one head leaves other columns' logits untouched") {
  auto base = build_base_lm<float>(tiny_config());
  auto m = tabbify(base, MoeSpec::parse("MH", kColumns));
  const auto batch = random_batch(7, tiny_config().vocab_size);
  const auto before = m.forward(batch);
  for (auto& v : m.heads()[1].weight->value) v += 0.5F;
  const auto after = m.forward(batch);
  const std::size_t vocab = tiny_config().vocab_size;
  std::size_t changed = 0;
  for (std::size_t r = 0; r < batch.columns.size(); ++r) {
    const bool same = std::equal(before.begin() + r * vocab, before.begin() + (r + 1) * vocab, after.begin() + r * vocab);
    if (batch.columns[r] != 1) CHECK(same);
    changed += same ? 0 : 1;
  }
  CHECK(changed > 0);
}

TEST_CASE("one-expert residency matches all-experts exactly") {
  auto base = build_base_lm<float>(tiny_config());
  for (const char* v : kVariants) {
    CAPTURE(v);
    auto m = tabbify(base, MoeSpec::parse(v, kColumns));
    jitter(m, 11);
    const auto batch = random_batch(8, tiny_config().vocab_size);
    CHECK(m.forward(batch, Residency::kOneExpert) == m.forward(batch, Residency::kAllExperts));
  }
}

TEST_CASE("incremental decoding matches the full forward pass") {
  auto base = build_base_lm<float>(tiny_config());
  jitter(base, 12);
  std::vector<Model<float>> models{base};
  for (const char* v : kVariants) models.push_back(tabbify(base, MoeSpec::parse(v, kColumns)));
  for (auto& m : models) jitter(m, 13, 0.1);
  std::mt19937_64 rng(14);
  const auto seq = random_sequence(rng, 12, tiny_config().vocab_size);
  const auto batch = make_batch({seq}, kColumns, 3);
  const std::size_t vocab = tiny_config().vocab_size;
  for (const auto& m : models) {
    CAPTURE(m.moe().label());
    const auto full = m.forward(batch);
    auto session = m.decoder();
    for (std::size_t t = 0; t + 1 < seq.tokens.size(); ++t) {
      const auto& step = session.step(seq.tokens[t], seq.columns[t]);
      CHECK(std::equal(step.begin(), step.end(), full.begin() + t * vocab));
    }
  }
}

TEST_CASE("logits never depend on later tokens") {
  auto m = tabbify(build_base_lm<float>(tiny_config()), MoeSpec::parse("MA", kColumns));
  jitter(m, 15);
  std::mt19937_64 rng(16);
  auto seq = random_sequence(rng, 10, tiny_config().vocab_size);
  const auto a = m.forward(make_batch({seq}, kColumns, 3));
  seq.tokens[6] = (seq.tokens[6] + 1) % 23;
  const auto b = m.forward(make_batch({seq}, kColumns, 3));
  const std::size_t vocab = tiny_config().vocab_size;
  CHECK(std::equal(a.begin(), a.begin() + 6 * vocab, b.begin()));
  CHECK_FALSE(std::equal(a.begin() + 6 * vocab, a.begin() + 7 * vocab, b.begin() + 6 * vocab));
}

TEST_CASE("padding does not change a sequence's logits") {
  auto m = build_base_lm<float>(tiny_config());
  jitter(m, 17);
  std::mt19937_64 rng(18);
  const auto short_seq = random_sequence(rng, 5, tiny_config().vocab_size);
  const auto long_seq = random_sequence(rng, 11, tiny_config().vocab_size);
  const auto alone = m.forward(make_batch({short_seq}, kColumns, 3));
  const auto together = m.forward(make_batch({short_seq, long_seq}, kColumns, 3));
  CHECK(std::equal(alone.begin(), alone.end(), together.begin()));
}

TEST_CASE("mean loss is the token-weighted mix of column losses") {
  auto m = tabbify(build_base_lm<double>(tiny_config()), MoeSpec::parse("MMLP+MH", kColumns));
  jitter(m, 19);
  auto batch = random_batch(20, tiny_config().vocab_size, 4);
  batch.mask[1] = 0;
  const auto r = m.loss(batch);
  double mix = 0.0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < kColumns; ++c) {
    mix += r.column_loss[c] * static_cast<double>(r.column_tokens[c]);
    total += r.column_tokens[c];
  }
  CHECK(total == r.tokens);
  CHECK(mix / static_cast<double>(total) == doctest::Approx(r.loss).epsilon(1e-12));
}

TEST_CASE("masking every target is an error") {
  auto m = build_base_lm<float>(tiny_config());
  auto batch = random_batch(21, tiny_config().vocab_size);
  std::fill(batch.mask.begin(), batch.mask.end(), 0);
  CHECK_THROWS_AS(m.loss(batch), Error);
}

TEST_CASE("analytic gradients match finite differences") {
  auto base = build_base_lm<double>(tiny_config());
  jitter(base, 22);
  std::vector<Model<double>> models{base};
  for (const char* v : kVariants) models.push_back(tabbify(base, MoeSpec::parse(v, kColumns)));
  auto shared = MoeSpec::parse("MA", kColumns);
  shared.shared.insert(MoeSite::kAttention);
  models.push_back(tabbify(base, shared));
  const auto batch = random_batch(23, tiny_config().vocab_size);
  std::mt19937_64 rng(24);
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto& m = models[k];
    jitter(m, 25 + k, 0.1);
    m.loss_and_grads(batch);
    for (const auto& p : m.parameters()) {
      CAPTURE(p->name);
      std::uniform_int_distribution<std::size_t> pick(0, p->numel() - 1);
      for (int trial = 0; trial < 3; ++trial) {
        const auto i = pick(rng);
        const double h = 1e-5;
        const double saved = p->value[i];
        p->value[i] = saved + h;
        const double up = m.loss(batch).loss;
        p->value[i] = saved - h;
        const double down = m.loss(batch).loss;
        p->value[i] = saved;
        const double numeric = (up - down) / (2 * h);
        CHECK(p->grad[i] == doctest::Approx(numeric).epsilon(1e-5).scale(1e-3));
      }
    }
  }
}

TEST_CASE("casting between precisions preserves structure and sharing") {
  auto spec = MoeSpec::parse("MMLP", kColumns);
  spec.shared.insert(MoeSite::kMlp);
  const auto m = tabbify(build_base_lm<float>(tiny_config()), spec);
  const auto d = m.cast<double>();
  CHECK(d.parameter_count() == m.parameter_count());
  const auto back = d.cast<float>();
  const auto batch = random_batch(26, tiny_config().vocab_size);
  CHECK(back.forward(batch) == m.forward(batch));
  CHECK(d.layers()[0].mlp[0].fc_weight == d.layers()[0].mlp[2].fc_weight);
  CHECK(d.layers()[0].mlp[0].proj_weight != d.layers()[0].mlp[2].proj_weight);
}

TEST_CASE("config and spec json round-trip") {
  const auto c = tiny_config();
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  auto s = MoeSpec::parse("MMLP+MH", 5);
  s.shared.insert(MoeSite::kMlp);
  CHECK(MoeSpec::from_json(s.to_json()).to_json() == s.to_json());
  CHECK(s.label() == "MMLP+MH");
  CHECK(MoeSpec::parse("base", 5).empty());
}
