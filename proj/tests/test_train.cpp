#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tabby/checkpoint.hpp"
#include "tabby/codec.hpp"
#include "tabby/error.hpp"
#include "tabby/toy.hpp"
#include "tabby/train.hpp"

using namespace tabby;

namespace {

ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.context_length = 48;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.seed = 5;
  return c;
}

struct Fixture {
  ToyDataset ds;
  EvalBundle bundle;
  Vocabulary vocab;

  Fixture(const std::string& kind, std::size_t rows, std::uint64_t seed = 1) : ds(make_toy(kind, rows, seed)) {
    bundle = split_bundle(ds.table, seed + 1);
    vocab = build_vocabulary({bundle.train}, ds.schema);
  }
};

}  // namespace

TEST_SUITE("early stopping") {
  TEST_CASE("two non-improvements stop") {
    CHECK(early_stop({3.0, 2.5, 2.6, 2.7}, 2));
    CHECK_FALSE(early_stop({3.0, 2.5, 2.6, 2.4}, 2));
    CHECK_FALSE(early_stop({3.0}, 2));
    CHECK(early_stop({3.0, 3.0, 3.0}, 2));
    CHECK_FALSE(early_stop({3.0, 2.9}, 1));
    CHECK(early_stop({3.0, 3.1}, 1));
  }

  TEST_CASE("decreasing histories never stop") {
    std::vector<double> h;
    for (int i = 0; i < 100; ++i) {
      h.push_back(10.0 - 0.05 * i);
      CHECK_FALSE(early_stop(h, 2));
    }
  }

  TEST_CASE("an improving evaluation never flips continue to stop") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<double> h;
      const int n = 1 + trial % 7;
      for (int i = 0; i < n; ++i) h.push_back(u(rng));
      const std::size_t patience = 1 + trial % 3;
      if (early_stop(h, patience)) continue;
      h.push_back(*std::min_element(h.begin(), h.end()) - 0.01);
      CHECK_FALSE(early_stop(h, patience));
    }
  }

  TEST_CASE("empty history is an error") { CHECK_THROWS_AS(early_stop({}, 2), Error); }
}

TEST_SUITE("training sequences") {
  TEST_CASE("every target is supervised and labelled with its column") {
    Fixture f("deterministic", 50);
    for (const auto& row : f.bundle.train) {
      const auto s = make_training_sequence(f.ds.schema, f.vocab, row);
      CHECK(s.tokens == encode_plain_string(f.ds.schema, f.vocab, row));
      CHECK(s.supervised.empty());
      REQUIRE(s.columns.size() == s.tokens.size());
      CHECK(s.columns.front() == 0);
      CHECK(s.columns.back() == f.ds.schema.size() - 1);
    }
  }

  TEST_CASE("great mode places every column in every position equally often") {
    Fixture f("independent", 3000);
    std::mt19937_64 rng(2);
    const std::size_t V = f.ds.schema.size();
    std::vector<std::vector<double>> counts(V, std::vector<double>(V, 0.0));
    for (const auto& row : f.bundle.train) {
      const auto s = make_training_sequence(f.ds.schema, f.vocab, row, &rng);
      std::vector<std::size_t> order{s.columns.front()};
      for (std::size_t t = 1; t < s.tokens.size(); ++t) {
        if (s.tokens[t] == Vocabulary::kEoc) order.push_back(s.columns[t]);
      }
      REQUIRE(order.size() == V);
      for (std::size_t p = 0; p < V; ++p) counts[order[p]][p] += 1.0;
    }
    const double n = static_cast<double>(f.bundle.train.size());
    for (const auto& row : counts) {
      for (double c : row) CHECK(std::abs(c / n - 1.0 / 3.0) <= 0.05);
    }
  }

  TEST_CASE("unsupervised targets contribute no gradient") {
    Fixture f("deterministic", 20);
    auto m = build_base_lm<float>(small_config(f.vocab.size()));
    auto seq = make_training_sequence(f.ds.schema, f.vocab, f.bundle.train[0]);
    seq.supervised.assign(seq.tokens.size() - 1, 1);
    seq.supervised[3] = 0;
    auto changed = seq;
    changed.tokens[4] = (changed.tokens[4] + 1) % static_cast<int>(f.vocab.size());
    changed.supervised[4] = 0;
    seq.supervised[4] = 0;
    // tokens[4] is only a target at position 3 (masked) and an input at position 4;
    // mask position 4 too and compare gradients over positions < 4 only.
    std::fill(seq.supervised.begin() + 4, seq.supervised.end(), 0);
    std::fill(changed.supervised.begin() + 4, changed.supervised.end(), 0);
    m.loss_and_grads(make_batch({seq}, f.ds.schema.size(), Vocabulary::kPad));
    std::vector<std::vector<float>> a;
    for (const auto& p : m.parameters()) a.push_back(p->grad);
    m.loss_and_grads(make_batch({changed}, f.ds.schema.size(), Vocabulary::kPad));
    const auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->grad == a[i]);
  }
}

TEST_SUITE("training loop") {
  TEST_CASE("tabby and base models start from the same loss") {
    Fixture f("deterministic", 100);
    const auto base = build_base_lm<float>(small_config(f.vocab.size()));
    const auto mh = tabbify(base, MoeSpec::parse("MH", f.ds.schema.size()));
    const auto seqs = make_sequences(f.ds.schema, f.vocab, f.bundle.train);
    const auto batch = make_batch(seqs, f.ds.schema.size(), Vocabulary::kPad);
    CHECK(std::abs(mh.loss(batch).loss - base.loss(batch).loss) <= 1e-6);
  }

  TEST_CASE("same seed gives identical logs and weights") {
    Fixture f("deterministic", 200);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 16;
    tc.eval_interval_steps = 5;
    tc.column_log_interval_steps = 3;
    tc.mode = TrainMode::kGreat;
    auto run = [&] {
      auto m = tabbify(build_base_lm<float>(small_config(f.vocab.size())), MoeSpec::parse("MH", f.ds.schema.size()));
      auto log = train_model(m, f.ds.schema, f.vocab, f.bundle, tc);
      return std::make_pair(std::move(m), std::move(log));
    };
    const auto [m1, l1] = run();
    const auto [m2, l2] = run();
    REQUIRE(l1.records.size() == l2.records.size());
    for (std::size_t i = 0; i < l1.records.size(); ++i) CHECK(l1.records[i].to_json() == l2.records[i].to_json());
    const auto p1 = m1.parameters();
    const auto p2 = m2.parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);
  }

  TEST_CASE("validation records recombine from their column losses") {
    Fixture f("mixed", 200);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 16;
    tc.eval_interval_steps = 4;
    auto m = build_base_lm<float>(small_config(f.vocab.size()));
    const auto log = train_model(m, f.ds.schema, f.vocab, f.bundle, tc);
    const auto evals = log.evals();
    CHECK(evals.size() >= 5);
    for (const auto& r : evals) {
      double mix = 0.0;
      double n = 0.0;
      for (std::size_t c = 0; c < r.column_loss.size(); ++c) {
        mix += r.column_loss[c] * static_cast<double>(r.column_tokens[c]);
        n += static_cast<double>(r.column_tokens[c]);
      }
      CHECK(std::abs(mix / n - r.loss) <= 1e-8);
    }
    CHECK(log.best_validation_loss <= evals.front().loss);
  }

  TEST_CASE("restoring the best weights reproduces the best validation loss") {
    Fixture f("deterministic", 200);
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 16;
    tc.eval_interval_steps = 5;
    tc.learning_rate = 3e-3;
    auto m = build_base_lm<float>(small_config(f.vocab.size()));
    const auto log = train_model(m, f.ds.schema, f.vocab, f.bundle, tc);
    CHECK(evaluate_loss(m, f.ds.schema, f.vocab, f.bundle.validation, tc.batch_size).loss ==
          log.best_validation_loss);
  }

  TEST_CASE("rows longer than the context are rejected by index") {
    Fixture f("nested", 30);
    auto cfg = small_config(f.vocab.size());
    cfg.context_length = 8;
    auto m = build_base_lm<float>(cfg);
    CHECK_THROWS_WITH_AS(train_model(m, f.ds.schema, f.vocab, f.bundle, TrainConfig{}),
                         doctest::Contains("training row 0"), Error);
  }

  TEST_CASE("expert count must match the schema") {
    Fixture f("deterministic", 30);
    auto m = tabbify(build_base_lm<float>(small_config(f.vocab.size())), MoeSpec::parse("MH", 2));
    CHECK_THROWS_AS(train_model(m, f.ds.schema, f.vocab, f.bundle, TrainConfig{}), Error);
    auto base = build_base_lm<float>(small_config(f.vocab.size()));
    CHECK_THROWS_AS(train_tabby(base, f.ds.schema, f.vocab, f.bundle, TrainConfig{}), Error);
  }
}

TEST_SUITE("learning rate grid") {
  Fixture& grid_fixture() {
    static Fixture f("deterministic", 120);
    return f;
  }

  TrainConfig quick() {
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 16;
    return tc;
  }

  TEST_CASE("single entry is chosen") {
    auto& f = grid_fixture();
    auto tc = quick();
    tc.lr_grid = {2e-3};
    const auto r = lr_grid_search([&] { return build_base_lm<float>(small_config(f.vocab.size())); }, f.ds.schema,
                                  f.vocab, f.bundle, tc);
    CHECK(r.learning_rate == 2e-3);
    CHECK(r.log.grid.size() == 1);
  }

  TEST_CASE("a usable rate beats a negligible one") {
    auto& f = grid_fixture();
    auto tc = quick();
    tc.lr_grid = {1e-8, 1e-3};
    const auto r = lr_grid_search([&] { return build_base_lm<float>(small_config(f.vocab.size())); }, f.ds.schema,
                                  f.vocab, f.bundle, tc);
    CHECK(r.learning_rate == 1e-3);
  }

  TEST_CASE("exact ties go to the larger rate") {
    auto& f = grid_fixture();
    auto tc = quick();
    tc.max_epochs = 1;
    // Steps this small vanish in float arithmetic, so both runs end where they began.
    tc.lr_grid = {1e-30, 1e-29};
    const auto r = lr_grid_search([&] { return build_base_lm<float>(small_config(f.vocab.size())); }, f.ds.schema,
                                  f.vocab, f.bundle, tc);
    REQUIRE(r.log.grid.size() == 2);
    CHECK(r.log.grid[0].second == r.log.grid[1].second);
    CHECK(r.learning_rate == 1e-29);
  }

  TEST_CASE("all runs diverging is an error") {
    auto& f = grid_fixture();
    auto tc = quick();
    tc.lr_grid = {1e30};
    CHECK_THROWS_WITH_AS(lr_grid_search([&] { return build_base_lm<float>(small_config(f.vocab.size())); },
                                        f.ds.schema, f.vocab, f.bundle, tc),
                         "no stable learning rate", Error);
  }
}

TEST_SUITE("checkpoints") {
  TEST_CASE("save and load reproduce the forward pass exactly") {
    Fixture f("deterministic", 60);
    for (const char* variant : {"base", "MH", "MMLP+MH", "MA"}) {
      CAPTURE(variant);
      auto m = build_base_lm<float>(small_config(f.vocab.size()));
      const auto spec = MoeSpec::parse(variant, f.ds.schema.size());
      if (!spec.empty()) m = tabbify(m, spec);
      TrainConfig tc;
      tc.max_epochs = 1;
      tc.batch_size = 8;
      train_model(m, f.ds.schema, f.vocab, f.bundle, tc);
      const std::string path = std::string("ckpt_") + variant + ".bin";
      save_checkpoint(path, Checkpoint{m, f.vocab, f.ds.schema, "rng", 17, {{"encoding", "plain"}}});
      const auto back = load_checkpoint(path, schema_fingerprint(f.ds.schema));
      const auto batch = make_batch(make_sequences(f.ds.schema, f.vocab, f.bundle.validation), f.ds.schema.size(),
                                    Vocabulary::kPad);
      CHECK(back.model.forward(batch) == m.forward(batch));
      CHECK(back.vocab == f.vocab);
      CHECK(back.step == 17);
      CHECK(back.extra.at("encoding") == "plain");
      std::filesystem::remove(path);
    }
  }

  TEST_CASE("shared tensors are stored once and stay shared") {
    Fixture f("deterministic", 20);
    auto spec = MoeSpec::parse("MMLP", f.ds.schema.size());
    spec.shared.insert(MoeSite::kMlp);
    const auto m = tabbify(build_base_lm<float>(small_config(f.vocab.size())), spec);
    save_checkpoint("ckpt_shared.bin", Checkpoint{m, f.vocab, f.ds.schema, "", 0, {}});
    const auto back = load_checkpoint("ckpt_shared.bin");
    CHECK(back.model.parameter_count() == m.parameter_count());
    CHECK(back.model.layers()[0].mlp[0].fc_weight == back.model.layers()[0].mlp[1].fc_weight);
    std::filesystem::remove("ckpt_shared.bin");
  }

  TEST_CASE("manifest of a multi-head model lists one head tensor per column") {
    Fixture f("deterministic", 20);
    const auto m =
        tabbify(build_base_lm<float>(small_config(f.vocab.size())), MoeSpec::parse("MH", f.ds.schema.size()));
    save_checkpoint("ckpt_mh.bin", Checkpoint{m, f.vocab, f.ds.schema, "", 0, {}});
    const auto manifest = read_checkpoint_manifest("ckpt_mh.bin");
    std::size_t heads = 0;
    for (const auto& t : manifest.at("tensors")) heads += t.at("name").get<std::string>().rfind("lm_head.", 0) == 0;
    CHECK(heads == f.ds.schema.size());
    std::filesystem::remove("ckpt_mh.bin");
  }

  TEST_CASE("mismatched, corrupt and truncated files are refused") {
    Fixture f("deterministic", 20);
    const auto m = build_base_lm<float>(small_config(f.vocab.size()));
    save_checkpoint("ckpt_bad.bin", Checkpoint{m, f.vocab, f.ds.schema, "", 0, {}});
    CHECK_THROWS_AS(load_checkpoint("ckpt_bad.bin", std::string("0000000000000000")), Error);

    std::string bytes;
    {
      std::ifstream in("ckpt_bad.bin", std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [](const std::string& data) {
      std::ofstream out("ckpt_bad.bin", std::ios::binary | std::ios::trunc);
      out << data;
    };
    write(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_checkpoint("ckpt_bad.bin"), Error);
    auto wrong_version = bytes;
    wrong_version[8] = 9;
    write(wrong_version);
    CHECK_THROWS_WITH_AS(load_checkpoint("ckpt_bad.bin"), doctest::Contains("version"), Error);
    write("not a checkpoint");
    CHECK_THROWS_AS(load_checkpoint("ckpt_bad.bin"), Error);
    std::filesystem::remove("ckpt_bad.bin");
    CHECK_THROWS_AS(load_checkpoint("missing.bin"), Error);
  }
}
