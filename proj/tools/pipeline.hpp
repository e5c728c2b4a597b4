#pragma once

// Pipeline stages behind the capaa command. Each stage reads the previous
// stage's directory under the output root, refuses stale inputs and writes
// manifest.json with SHA-256 hashes of everything it produced.

#include <filesystem>
#include <string>

#include "capaa/experiment.hpp"
#include "json.hpp"

namespace capaa::pipeline {

struct RunOptions {
  std::filesystem::path out;
  int jobs = 1;
  bool force = false;
};

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of the configuration sections a stage depends on, chained through
/// its upstream stages.
std::string stage_key(const experiment::ExperimentConfig& cfg, const std::string& stage);

/// Stage functions return a JSON summary printed on stdout.
nlohmann::json simulate(const experiment::ExperimentConfig& cfg, const RunOptions& opt);
nlohmann::json train(const experiment::ExperimentConfig& cfg, const RunOptions& opt);
nlohmann::json run_attacks(const experiment::ExperimentConfig& cfg, const RunOptions& opt);
nlohmann::json evaluate(const experiment::ExperimentConfig& cfg, const RunOptions& opt);
nlohmann::json report(const experiment::ExperimentConfig& cfg, const RunOptions& opt);

}  // namespace capaa::pipeline
