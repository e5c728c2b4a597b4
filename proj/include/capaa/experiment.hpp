#pragma once

// Experiment plumbing shared by the command-line pipeline and the benchmark:
// configuration, seed derivation, the attack grid and per-scene preparation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "capaa/attack.hpp"
#include "capaa/eval.hpp"
#include "json.hpp"

namespace capaa::experiment {

/// A scene loaded from a directory written by scene::save_scene, or a
/// synthetic scene of the given class when no path is set.
struct SceneEntry {
  std::string id;
  std::filesystem::path path;
  int label = -1;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::filesystem::path out;
  int image_size = 32;
  std::vector<SceneEntry> scenes;
  std::vector<std::string> poses;  // subset of the seven pose ids; empty means all

  int captures = 500;  // M
  surrogate::TrainOptions surrogate;

  std::vector<std::string> ensemble = zoo::ensemble_ids();
  std::vector<std::string> heldout = zoo::heldout_ids();
  zoo::DatasetOptions dataset;
  zoo::TrainOptions classifier;

  std::vector<attack::Variant> variants{attack::Variant::kCapaa, attack::Variant::kCapaaNoAttention,
                                        attack::Variant::kCapaaClassifierSpecific, attack::Variant::kSpaa};
  bool untargeted = true;
  bool targeted = true;
  std::vector<int> targets;  // empty: every class except the scene label
  std::vector<double> d_thr{2.0, 3.0, 4.0, 5.0};
  attack::AttackConfig attack;  // shared settings; mode, target, variant and d_thr come from the grid

  bool successful_only = false;

  /// Parses and validates. Relative paths resolve against base_dir. Errors
  /// carry the JSON path of the offending field, e.g. "$.attack.d_thr[2]".
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Throws capaa::Error("invalid_config") naming the field.
  void validate() const;
};

/// Stable seed for a named sub-task, independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& label);

/// Runs fn(0..n-1) on up to `jobs` threads and rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

std::vector<scene::Pose> config_poses(const ExperimentConfig& cfg);
scene::Scene make_config_scene(const ExperimentConfig& cfg, std::size_t index);

/// One cell of the attack grid.
struct AttackJob {
  std::string id;          // relative path, e.g. "untargeted/d2/spaa-convA"
  std::string classifier;  // attacked member for single-classifier variants
  attack::AttackConfig config;
};

/// variants x modes x thresholds. Single-classifier variants expand to one
/// cell per ensemble member.
std::vector<AttackJob> attack_grid(const ExperimentConfig& cfg, int true_label);

/// Per-scene inputs shared by all attack jobs on that scene.
struct SceneContext {
  scene::Scene scene;
  CapturedImage gray_capture;  // I_{x0} at the training pose
  Tensor mask;                 // direct-light mask at the training pose
  std::vector<std::string> ids;
  std::vector<Tensor> cams;  // camera-space Grad-CAM++ per ensemble member
  attention::PerturbationAttentionMap pam;
};

SceneContext prepare_scene(const scene::Scene& s, const surrogate::SurrogateModel& surrogate,
                           const std::vector<const zoo::Classifier*>& ensemble);

/// Selects the ensemble subset and attention map for the job's variant and runs it.
attack::AttackResult run_job(const AttackJob& job, const SceneContext& ctx, const surrogate::SurrogateModel& surrogate,
                             const std::vector<const zoo::Classifier*>& ensemble,
                             const attack::IterateObserver& observer = {});

/// Scores a pattern at every pose. Full-ensemble variants are scored on
/// `ensemble` and `heldout`; single-classifier variants on the attacked
/// member and `heldout`.
std::vector<eval::EvaluationRecord> evaluate_job(const AttackJob& job, const std::string& scene_id,
                                                 const ProjectorImage& x_prime, const SceneContext& ctx,
                                                 const std::vector<scene::Pose>& poses,
                                                 const std::vector<const zoo::Classifier*>& ensemble,
                                                 const std::vector<const zoo::Classifier*>& heldout,
                                                 std::uint64_t seed);

}  // namespace capaa::experiment
