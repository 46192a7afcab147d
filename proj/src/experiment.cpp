#include "tabby/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "tabby/checkpoint.hpp"
#include "tabby/error.hpp"
#include "tabby/io.hpp"
#include "tabby/toy.hpp"

namespace tabby {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& path, const std::string& what) {
  require(fs::is_regular_file(path), ErrorKind::kIo, what + " not found: " + path.string());
}

std::string table_extension(const Schema& schema) { return schema.nested() ? ".jsonl" : ".csv"; }

// Rethrows with the run index prefixed, keeping the error class.
template <typename F>
auto in_run(std::size_t run, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "run " + std::to_string(run) + ": " + e.what());
  }
}

std::string_view to_string(Encoding e) { return e == Encoding::kPlain ? "plain" : "tabula"; }

Encoding parse_encoding(const std::string& text) {
  if (text == "plain") return Encoding::kPlain;
  if (text == "tabula") return Encoding::kTabula;
  fail(ErrorKind::kInvalidArgument, "unknown encoding '" + text + "'");
}

MoeSpec moe_spec(const ExperimentConfig& config, std::size_t n_columns) {
  auto spec = MoeSpec::parse(config.variant, n_columns);
  for (const auto& s : config.shared) spec.shared.insert(parse_moe_site(s));
  return spec;
}

Vocabulary data_vocabulary(const PreparedData& data) {
  return build_vocabulary({data.bundle.train, data.bundle.validation}, data.model_schema);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    const auto& data = doc.at("data");
    c.train_path = resolve(base_dir, data.at("train").get<std::string>());
    c.validation_path = resolve(base_dir, data.at("validation").get<std::string>());
    c.test_path = resolve(base_dir, data.at("test").get<std::string>());
    c.schema_path = resolve(base_dir, data.at("schema").get<std::string>());

    fs::path out_base = base_dir;
    if (const char* root = std::getenv("TABBY_OUTPUT_ROOT"); root != nullptr && *root != '\0') out_base = root;
    c.output_dir = resolve(out_base, doc.value("output_dir", std::string("runs")));

    c.encoding = parse_encoding(doc.value("encoding", std::string("plain")));
    if (doc.contains("model")) c.model = ModelConfig::from_json(doc.at("model"));
    if (doc.contains("moe")) {
      const auto& moe = doc.at("moe");
      c.variant = moe.value("variant", c.variant);
      c.shared = moe.value("shared", c.shared);
    }
    if (doc.contains("train")) {
      auto t = doc.at("train");
      if (t.contains("learning_rate") && !t.contains("lr_grid")) t["lr_grid"] = {t.at("learning_rate")};
      c.train = TrainConfig::from_json(t);
    }
    if (doc.contains("sample")) c.sample = SampleConfig::from_json(doc.at("sample"));
    if (doc.contains("eval")) {
      const auto& e = doc.at("eval");
      if (e.contains("forest")) c.forest = ForestParams::from_json(e.at("forest"));
      c.eval_seed = e.value("seed", c.eval_seed);
    }
    c.n_runs = doc.value("n_runs", c.n_runs);
    c.task = doc.value("task", c.task);
    c.method = doc.value("method", c.method);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("config: ") + e.what());
  }
  require(c.n_runs >= 1, ErrorKind::kInvalidArgument, "n_runs must be at least 1");
  MoeSpec::parse(c.variant, 1);
  for (const auto& s : c.shared) parse_moe_site(s);
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  const auto doc = read_json(path);
  return from_json(doc, fs::absolute(path).parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  auto model_json = model.to_json();
  model_json.erase("vocab_size");
  return {{"data",
           {{"train", train_path.string()},
            {"validation", validation_path.string()},
            {"test", test_path.string()},
            {"schema", schema_path.string()}}},
          {"output_dir", output_dir.string()},
          {"encoding", to_string(encoding)},
          {"model", model_json},
          {"moe", {{"variant", variant}, {"shared", shared}}},
          {"train", train.to_json()},
          {"sample", sample.to_json()},
          {"eval", {{"forest", forest.to_json()}, {"seed", eval_seed}}},
          {"n_runs", n_runs},
          {"task", task},
          {"method", method}};
}

PreparedData prepare_data(const ExperimentConfig& config) {
  require_file(config.schema_path, "schema file");
  require_file(config.train_path, "training table");
  require_file(config.validation_path, "validation table");
  require_file(config.test_path, "test table");
  PreparedData d;
  d.schema = load_schema(config.schema_path.string());
  d.raw.train = read_table(config.train_path.string(), d.schema);
  d.raw.validation = read_table(config.validation_path.string(), d.schema);
  d.raw.test = read_table(config.test_path.string(), d.schema);
  require(!d.raw.train.empty(), ErrorKind::kData, "training table is empty");
  require(!d.raw.validation.empty(), ErrorKind::kData, "validation table is empty");
  require(!d.raw.test.empty(), ErrorKind::kData, "test table is empty");
  if (config.encoding == Encoding::kTabula) {
    auto enc = tabula_encode(d.raw.train, d.schema);
    d.model_schema = enc.schema;
    d.bundle.train = std::move(enc.table);
    d.bundle.validation = tabula_apply(d.raw.validation, d.schema, enc.codebook);
    d.bundle.test = tabula_apply(d.raw.test, d.schema, enc.codebook);
    d.codebook = std::move(enc.codebook);
  } else {
    d.model_schema = d.schema;
    d.bundle = d.raw;
  }
  return d;
}

fs::path run_dir(const ExperimentConfig& config, std::size_t run) {
  return config.output_dir / ("run_" + std::to_string(run));
}

nlohmann::json cmd_train(const ExperimentConfig& config) {
  const auto start = Clock::now();
  const auto data = prepare_data(config);
  const auto vocab = data_vocabulary(data);
  const auto spec = moe_spec(config, data.model_schema.size());
  auto factory_for = [&](std::uint64_t seed) {
    return [&, seed] {
      ModelConfig mc = config.model;
      mc.vocab_size = vocab.size();
      mc.seed = seed;
      auto m = build_base_lm<float>(mc);
      return spec.empty() ? m : tabbify(m, spec);
    };
  };

  fs::create_directories(config.output_dir);
  nlohmann::json manifest = {{"command", "train"}, {"config", config.to_json()}};

  double lr = config.train.lr_grid.front();
  if (config.train.lr_grid.size() > 1) {
    const auto grid = lr_grid_search(factory_for(config.model.seed), data.model_schema, vocab, data.bundle, config.train);
    lr = grid.learning_rate;
    manifest["lr_grid"] = grid.log.summary().at("grid");
  }
  manifest["learning_rate"] = lr;

  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t k = 0; k < config.n_runs; ++k) {
    in_run(k, [&] {
      const auto run_start = Clock::now();
      const auto dir = run_dir(config, k);
      fs::create_directories(dir);
      TrainConfig tc = config.train;
      tc.learning_rate = lr;
      tc.lr_grid = {lr};
      tc.seed = config.train.seed + k;
      auto model = factory_for(config.model.seed + k)();
      const auto log = train_model(model, data.model_schema, vocab, data.bundle, tc);
      require(!log.diverged, ErrorKind::kTraining, "training diverged");

      nlohmann::json extra = {{"encoding", to_string(config.encoding)},
                              {"variant", config.variant},
                              {"run", k},
                              {"learning_rate", lr}};
      if (data.codebook) extra["codebook"] = data.codebook->to_json();
      const auto ckpt = dir / "model.ckpt";
      const auto log_path = dir / "train_log.jsonl";
      save_checkpoint(ckpt.string(), Checkpoint{model, vocab, data.model_schema, "", log.steps, extra});
      log.write_jsonl(log_path.string());
      runs.push_back({{"run", k},
                      {"checkpoint", fs::relative(ckpt, config.output_dir).string()},
                      {"log", fs::relative(log_path, config.output_dir).string()},
                      {"summary", log.summary()},
                      {"wall_seconds", seconds_since(run_start)}});
      return 0;
    });
  }
  manifest["runs"] = runs;
  manifest["wall_seconds"] = seconds_since(start);
  write_json(config.output_dir / "train_manifest.json", manifest);
  return manifest;
}

nlohmann::json cmd_sample(const ExperimentConfig& config) {
  const auto start = Clock::now();
  const auto data = prepare_data(config);
  const auto fingerprint = schema_fingerprint(data.model_schema);
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t k = 0; k < config.n_runs; ++k) {
    in_run(k, [&] {
      const auto dir = run_dir(config, k);
      const auto ckpt = load_checkpoint((dir / "model.ckpt").string(), fingerprint);
      SampleConfig sc = config.sample;
      sc.seed = config.sample.seed + k;
      auto report = sample_table(ckpt.model, data.model_schema, ckpt.vocab, sc, &data.bundle.train);
      if (data.codebook) {
        Table decoded;
        for (const auto& row : report.rows) {
          try {
            decoded.push_back(tabula_decode({row}, data.schema, *data.codebook).front());
          } catch (const Error&) {
            report.rejected[static_cast<std::size_t>(RejectCause::kTypeParseFailure)]++;
          }
        }
        require(!decoded.empty(), ErrorKind::kSampling, "no valid samples after decoding ordinals");
        report.rows = std::move(decoded);
      }
      const auto out = dir / ("synthetic" + table_extension(data.schema));
      const auto report_path = dir / "sample_report.json";
      write_table(out.string(), data.schema, report.rows);
      write_json(report_path, report.to_json());
      runs.push_back({{"run", k},
                      {"synthetic", fs::relative(out, config.output_dir).string()},
                      {"report", fs::relative(report_path, config.output_dir).string()},
                      {"validity_rate", report.validity_rate()},
                      {"rows", report.rows.size()}});
      return 0;
    });
  }
  nlohmann::json manifest = {{"command", "sample"},
                             {"sample", config.sample.to_json()},
                             {"runs", runs},
                             {"wall_seconds", seconds_since(start)}};
  write_json(config.output_dir / "sample_manifest.json", manifest);
  return manifest;
}

nlohmann::json cmd_eval(const ExperimentConfig& config, const std::vector<fs::path>& synthetic_paths) {
  const auto start = Clock::now();
  const auto data = prepare_data(config);

  std::vector<fs::path> paths = synthetic_paths;
  nlohmann::json sample_manifest, train_manifest;
  if (fs::is_regular_file(config.output_dir / "sample_manifest.json")) {
    sample_manifest = read_json(config.output_dir / "sample_manifest.json");
  }
  if (fs::is_regular_file(config.output_dir / "train_manifest.json")) {
    train_manifest = read_json(config.output_dir / "train_manifest.json");
  }
  if (paths.empty()) {
    require(!sample_manifest.is_null(), ErrorKind::kIo,
            "no synthetic tables given and no sample_manifest.json in " + config.output_dir.string());
    for (const auto& r : sample_manifest.at("runs")) paths.push_back(config.output_dir / r.at("synthetic").get<std::string>());
  }
  require(!paths.empty(), ErrorKind::kInvalidArgument, "no synthetic tables to evaluate");

  auto run_field = [](const nlohmann::json& manifest, std::size_t k, auto get) -> nlohmann::json {
    if (manifest.is_null() || !manifest.contains("runs")) return nullptr;
    for (const auto& r : manifest.at("runs")) {
      if (r.at("run") == k) return get(r);
    }
    return nullptr;
  };

  nlohmann::json runs = nlohmann::json::array();
  std::map<std::string, std::vector<double>> values;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    in_run(k, [&] {
      require_file(paths[k], "synthetic table");
      Schema schema = data.schema;
      const auto synth = read_table(paths[k].string(), schema);
      require(schema_fingerprint(schema) == schema_fingerprint(data.schema), ErrorKind::kSchema,
              "synthetic table schema does not match the real data");
      require(!synth.empty(), ErrorKind::kEvaluation, "synthetic table is empty");
      const std::uint64_t seed = config.eval_seed + k;
      const auto m = mle(data.raw.train, synth, data.raw.test, data.schema, seed, config.forest);
      MetricReport report;
      report.mle_synthetic = m.synthetic;
      report.mle_original = m.original;
      report.discrimination = discrimination(data.raw.train, synth, data.schema, seed, config.forest);
      report.dcr = dcr(data.raw.train, synth, data.schema);
      const auto metrics = report.to_json();
      for (const auto& [key, v] : metrics.items()) values[key].push_back(v.get<double>());
      runs.push_back({{"run", k},
                      {"synthetic", paths[k].string()},
                      {"metrics", metrics},
                      {"learning_rate", run_field(train_manifest, k, [](const auto& r) {
                         return r.at("summary").at("learning_rate");
                       })},
                      {"validity_rate", run_field(sample_manifest, k, [](const auto& r) { return r.at("validity_rate"); })}});
      return 0;
    });
  }

  nlohmann::json aggregate = nlohmann::json::object();
  for (const auto& [key, v] : values) {
    const auto ms = mean_std(v);
    aggregate[key] = {{"mean", ms.mean}, {"std", ms.std}};
  }
  const nlohmann::json summary = {{"task", config.task},
                                  {"method", config.method},
                                  {"task_type", to_string(data.schema.task)},
                                  {"runs", runs},
                                  {"aggregate", aggregate}};
  fs::create_directories(config.output_dir);
  const auto summary_path = config.output_dir / "eval_summary.json";
  const auto table_path = config.output_dir / "eval_table.txt";
  write_json(summary_path, summary);
  write_text(table_path, eval_table(summary));
  const nlohmann::json manifest = {{"command", "eval"},
                                   {"summary", summary_path.filename().string()},
                                   {"table", table_path.filename().string()},
                                   {"wall_seconds", seconds_since(start)}};
  write_json(config.output_dir / "eval_manifest.json", manifest);
  return summary;
}

std::string eval_table(const nlohmann::json& summary) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "task: " << summary.at("task").get<std::string>() << "  method: " << summary.at("method").get<std::string>()
      << "\n\n";
  out << std::left << std::setw(26) << "run" << std::setw(12) << "mle" << std::setw(16) << "discrimination"
      << std::setw(10) << "dcr" << "\n";
  for (const auto& r : summary.at("runs")) {
    const auto& m = r.at("metrics");
    out << std::setw(26) << r.at("run").get<std::size_t>() << std::setw(12) << m.at("mle_synthetic").get<double>()
        << std::setw(16) << m.at("discrimination").get<double>() << std::setw(10) << m.at("dcr").get<double>()
        << "\n";
  }
  const auto& a = summary.at("aggregate");
  auto pm = [&](const char* key) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << a.at(key).at("mean").get<double>() << " +- "
      << a.at(key).at("std").get<double>();
    return s.str();
  };
  out << "\n"
      << std::setw(26) << "mean +- std" << std::setw(20) << pm("mle_synthetic") << std::setw(20)
      << pm("discrimination") << pm("dcr") << "\n";
  out << std::setw(26) << "Original (Upper Bound)" << pm("mle_original") << "\n";
  return out.str();
}

nlohmann::json ProfileResult::to_json() const {
  nlohmann::json curves_json = nlohmann::json::array();
  for (const auto& c : curves) {
    curves_json.push_back({{"method", c.method}, {"ratios", c.ratios}, {"tau_star", c.tau_star}, {"aup", c.aup}});
  }
  std::vector<std::string> order;
  for (auto i : ranking) order.push_back(curves[i].method);
  return {{"tasks", scores.tasks},
          {"methods", scores.methods},
          {"scores", scores.s},
          {"curves", curves_json},
          {"ranking", order}};
}

std::string ProfileResult::table() const {
  std::ostringstream out;
  out << profile_table(curves) << "\nrank\tmethod\tAUP\n";
  out << std::setprecision(10);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    out << r + 1 << '\t' << curves[ranking[r]].method << '\t' << curves[ranking[r]].aup << '\n';
  }
  return out.str();
}

ProfileResult cmd_profile(const std::vector<fs::path>& summaries, const std::string& metric) {
  require(metric == "mle" || metric == "discrimination", ErrorKind::kInvalidArgument,
          "profile metric must be mle or discrimination");
  require(!summaries.empty(), ErrorKind::kInvalidArgument, "no eval summaries given");
  ProfileResult result;
  std::map<std::pair<std::string, std::string>, double> cells;
  for (const auto& path : summaries) {
    const auto doc = read_json(path);
    try {
      const auto task = doc.at("task").get<std::string>();
      const auto method = doc.at("method").get<std::string>();
      const auto& agg = doc.at("aggregate");
      const double score = metric == "mle" ? 1.0 - agg.at("mle_synthetic").at("mean").get<double>()
                                           : agg.at("discrimination").at("mean").get<double>();
      require(cells.emplace(std::make_pair(task, method), std::max(score, 0.0)).second, ErrorKind::kEvaluation,
              "duplicate entry for task '" + task + "', method '" + method + "'");
      if (std::find(result.scores.tasks.begin(), result.scores.tasks.end(), task) == result.scores.tasks.end()) {
        result.scores.tasks.push_back(task);
      }
      if (std::find(result.scores.methods.begin(), result.scores.methods.end(), method) ==
          result.scores.methods.end()) {
        result.scores.methods.push_back(method);
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kEvaluation, path.string() + ": " + e.what());
    }
  }
  std::vector<std::string> gaps;
  for (const auto& t : result.scores.tasks) {
    std::vector<double> row;
    for (const auto& m : result.scores.methods) {
      const auto it = cells.find({t, m});
      if (it == cells.end()) {
        gaps.push_back(t + "/" + m);
        row.push_back(0.0);
      } else {
        row.push_back(it->second);
      }
    }
    result.scores.s.push_back(row);
  }
  if (!gaps.empty()) {
    std::string list;
    for (const auto& g : gaps) list += (list.empty() ? "" : ", ") + g;
    fail(ErrorKind::kEvaluation, "missing task/method cells: " + list);
  }
  result.curves = performance_profile(result.scores);
  aup(result.curves);
  result.ranking = aup_ranking(result.curves);
  return result;
}

nlohmann::json cmd_make_toy(const std::string& kind, std::size_t rows, std::uint64_t seed, const fs::path& out_dir) {
  require(rows >= 3, ErrorKind::kInvalidArgument, "make-toy needs at least 3 rows");
  const auto ds = make_toy(kind, rows, seed);
  const auto bundle = split_bundle(ds.table, seed + 1);
  fs::create_directories(out_dir);
  const auto ext = table_extension(ds.schema);
  save_schema(ds.schema, (out_dir / "schema.json").string());
  write_table((out_dir / ("train" + ext)).string(), ds.schema, bundle.train);
  write_table((out_dir / ("validation" + ext)).string(), ds.schema, bundle.validation);
  write_table((out_dir / ("test" + ext)).string(), ds.schema, bundle.test);

  const auto vocab = build_vocabulary({bundle.train}, ds.schema);
  std::size_t longest = 0;
  for (const auto& row : ds.table) longest = std::max(longest, encode_plain_string(ds.schema, vocab, row).size());
  ModelConfig mc;
  mc.context_length = (longest + 8 + 7) / 8 * 8;
  auto model_json = mc.to_json();
  model_json.erase("vocab_size");

  TrainConfig tc;
  tc.max_epochs = 20;
  tc.lr_grid = {1e-3};
  tc.learning_rate = 1e-3;
  SampleConfig sc;
  sc.n_rows = bundle.train.size();
  const nlohmann::json config = {
      {"data",
       {{"train", "train" + ext}, {"validation", "validation" + ext}, {"test", "test" + ext}, {"schema", "schema.json"}}},
      {"output_dir", "runs"},
      {"encoding", "plain"},
      {"model", model_json},
      {"moe", {{"variant", "MH"}, {"shared", nlohmann::json::array()}}},
      {"train", tc.to_json()},
      {"sample", sc.to_json()},
      {"eval", {{"forest", ForestParams{}.to_json()}, {"seed", 0}}},
      {"n_runs", 3},
      {"task", kind},
      {"method", "tabby-mh"}};
  write_json(out_dir / "config.json", config);
  const nlohmann::json manifest = {{"command", "make-toy"},
                                   {"kind", kind},
                                   {"rows", rows},
                                   {"seed", seed},
                                   {"files",
                                    {"schema.json", "train" + ext, "validation" + ext, "test" + ext, "config.json"}},
                                   {"split", {{"train", bundle.train.size()},
                                              {"validation", bundle.validation.size()},
                                              {"test", bundle.test.size()}}}};
  write_json(out_dir / "toy_manifest.json", manifest);
  return manifest;
}

}  // namespace tabby
