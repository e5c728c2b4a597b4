#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "capaa/error.hpp"
#include "json.hpp"
#include "pipeline.hpp"

namespace {

void print_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projector-based adversarial attack lab"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool force = false;
  std::string out;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Render scenes, capture sets, masks and the classifier dataset"},
      {"train", "Train the capture surrogates and the classifier zoo"},
      {"attack", "Run the attack grid (resumable)"},
      {"evaluate", "Score every pattern at every pose on every classifier"},
      {"report", "Rebuild tables, curves and attention maps from the records"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Overrides the configured seed");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1, 1024));
    sub->add_flag("--force", force, "Overwrite existing outputs");
    sub->add_option("--out", out, "Output root (overrides the configured one)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto cfg = capaa::experiment::ExperimentConfig::load(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.has_seed = true;
    }
    if (!cfg.has_seed) throw capaa::Error("invalid_config", "$.seed: required (set it in the config or pass --seed)");
    capaa::pipeline::RunOptions opt;
    opt.out = out.empty() ? cfg.out : std::filesystem::path(out);
    if (opt.out.empty()) throw capaa::Error("invalid_config", "$.out: required (set it in the config or pass --out)");
    opt.jobs = jobs;
    opt.force = force;

    nlohmann::json summary;
    if (command == "simulate") summary = capaa::pipeline::simulate(cfg, opt);
    if (command == "train") summary = capaa::pipeline::train(cfg, opt);
    if (command == "attack") summary = capaa::pipeline::run_attacks(cfg, opt);
    if (command == "evaluate") summary = capaa::pipeline::evaluate(cfg, opt);
    if (command == "report") summary = capaa::pipeline::report(cfg, opt);
    std::cout << summary.dump(2) << std::endl;
    return 0;
  } catch (const capaa::Error& e) {
    print_error(e.code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    print_error("io_error", e.what());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
  }
  return 1;
}
