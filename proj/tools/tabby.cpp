#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tabby/error.hpp"
#include "tabby/experiment.hpp"
#include "tabby/toy.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw tabby::Error(tabby::ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Column-routed transformer synthesis of tabular data"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train n_runs models (after an optional learning-rate grid)");
  train->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* sample = app.add_subcommand("sample", "Sample a synthetic table from each trained run");
  sample->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  std::optional<std::size_t> n_rows;
  std::optional<double> temperature;
  sample->add_option("-n,--rows", n_rows, "Rows per run (overrides the config)");
  sample->add_option("-t,--temperature", temperature, "Sampling temperature (overrides the config)");

  auto* eval = app.add_subcommand("eval", "Score synthetic tables: MLE, discrimination, DCR");
  eval->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  std::vector<std::string> synthetic;
  eval->add_option("--synthetic", synthetic, "Synthetic tables, one per run (default: from sample_manifest.json)")
      ->check(CLI::ExistingFile);

  auto* profile = app.add_subcommand("profile", "Performance profiles and AUP ranking across eval summaries");
  std::vector<std::string> summaries;
  std::string metric = "mle";
  std::string profile_out;
  profile->add_option("summaries", summaries, "eval_summary.json files")->required()->check(CLI::ExistingFile);
  profile->add_option("--metric", metric, "mle or discrimination")->check(CLI::IsMember({"mle", "discrimination"}));
  profile->add_option("-o,--output", profile_out, "Write profile.json and profile.txt into this directory");

  auto* toy = app.add_subcommand("make-toy", "Write a seeded toy dataset, its splits and a config");
  std::string kind = "deterministic";
  std::size_t rows = 2000;
  std::uint64_t seed = 0;
  std::string out_dir;
  toy->add_option("kind", kind, "Dataset kind")->check(CLI::IsMember(tabby::toy_kinds()));
  toy->add_option("-n,--rows", rows, "Rows before splitting");
  toy->add_option("-s,--seed", seed, "Random seed");
  toy->add_option("-o,--output", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(tabby::ErrorKind::kInvalidArgument);
  }

  try {
    if (*train) {
      const auto m = tabby::cmd_train(tabby::ExperimentConfig::load(config_path));
      std::cout << "learning rate " << m.at("learning_rate").get<double>() << "\n";
      for (const auto& r : m.at("runs")) {
        std::cout << "run " << r.at("run") << ": best validation loss "
                  << r.at("summary").at("best_validation_loss").get<double>() << " after "
                  << r.at("summary").at("steps") << " steps -> " << r.at("checkpoint").get<std::string>() << "\n";
      }
    } else if (*sample) {
      auto config = tabby::ExperimentConfig::load(config_path);
      if (n_rows) config.sample.n_rows = *n_rows;
      if (temperature) config.sample.temperature = *temperature;
      config.sample.validate();
      const auto m = tabby::cmd_sample(config);
      for (const auto& r : m.at("runs")) {
        std::cout << "run " << r.at("run") << ": " << r.at("rows") << " rows, validity "
                  << r.at("validity_rate").get<double>() << " -> " << r.at("synthetic").get<std::string>() << "\n";
      }
    } else if (*eval) {
      std::vector<fs::path> paths(synthetic.begin(), synthetic.end());
      const auto summary = tabby::cmd_eval(tabby::ExperimentConfig::load(config_path), paths);
      std::cout << tabby::eval_table(summary);
    } else if (*profile) {
      std::vector<fs::path> paths(summaries.begin(), summaries.end());
      const auto result = tabby::cmd_profile(paths, metric);
      if (!profile_out.empty()) {
        fs::create_directories(profile_out);
        write_file(fs::path(profile_out) / "profile.json", result.to_json().dump(2) + "\n");
        write_file(fs::path(profile_out) / "profile.txt", result.table());
      }
      std::cout << result.table();
    } else if (*toy) {
      const auto m = tabby::cmd_make_toy(kind, rows, seed, out_dir);
      std::cout << m.dump(2) << "\n";
    }
  } catch (const tabby::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
