// Experiment runner: bench synth|accuracy|timing --config <path> --out <dir> --seed <u64>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kge/error.hpp"
#include "kge/evalbench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reproducible experiments: synthetic structure, clustering accuracy, training time"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "bench_out";
  std::uint64_t seed = 0;
  for (const char* kind : {"synth", "accuracy", "timing", "all"}) {
    auto* sub = app.add_subcommand(kind, std::string("run the ") + kind + " experiments of the config");
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory for CSV files and manifest.json");
    sub->add_option("--seed", seed, "base seed; experiment i uses seed, seed+1, ...");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string kind = app.get_subcommands().front()->get_name();

  try {
    nlohmann::json config;
    try {
      config = nlohmann::json::parse(std::ifstream(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw kge::Error(kge::Errc::ConfigError, std::string("cannot parse config: ") + e.what());
    }
    const auto report = kge::run_experiment(config, out_dir, seed, kind == "all" ? "" : kind,
                                            std::filesystem::path(config_path).parent_path());
    for (const auto& run : report.manifest.at("experiments")) {
      std::cout << run.at("name").get<std::string>() << " -> " << run.at("file").get<std::string>() << "\n";
      for (const auto& c : run.at("checks"))
        std::cout << "  [" << (c.at("passed").get<bool>() ? "PASS" : "FAIL") << "] " << c.at("name").get<std::string>()
                  << ": " << c.at("value").get<double>() << " (" << c.at("threshold").get<std::string>() << ")\n";
    }
    std::cout << (report.all_passed ? "all checks passed" : "some checks FAILED") << "\n";
    return report.all_passed ? 0 : 1;
  } catch (const kge::Error& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return 2;
  }
}
