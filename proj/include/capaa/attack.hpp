#pragma once

// Alternating projector-pattern optimisation against a surrogate and an
// ensemble of classifiers. Each iteration either pushes the ensemble towards
// the attack goal (adversarial step) or pulls the predicted capture back
// towards the gray-lit scene (stealthiness step), with both gradients gated
// by the perturbation attention map.

#include <functional>
#include <string>
#include <vector>

#include "capaa/attention.hpp"
#include "capaa/surrogate.hpp"
#include "capaa/zoo.hpp"
#include "json.hpp"

namespace capaa::attack {

enum class Mode { kUntargeted, kTargeted };
enum class Variant { kCapaa, kCapaaNoAttention, kCapaaClassifierSpecific, kSpaa };

std::string to_string(Mode m);
std::string to_string(Variant v);
Mode mode_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);
/// Variants that attack a single classifier.
bool is_single_classifier(Variant v);
/// Variants that run with an all-ones attention map.
bool is_attention_free(Variant v);

struct TemperatureSchedule {
  double t_init = 5.0;
  double t_min = 1.0;
  double decay = 0.99;
};

/// One multiplicative decay step, floored at t_min.
double temperature_step(double t, const TemperatureSchedule& schedule);

struct AttackConfig {
  Mode mode = Mode::kUntargeted;
  int target = -1;
  Variant variant = Variant::kCapaa;
  std::vector<double> omega;  // empty: uniform
  double p_thr = 0.9;
  double d_thr = 2.0;
  double beta1 = 2.0;
  double beta2 = 1.0;
  int iterations = 200;
  TemperatureSchedule temperature;
  bool use_mask = false;
  /// Single update along A * grad(J - d) instead of alternating steps.
  bool summed_gradient = false;

  void validate(int ensemble_size, int num_classes) const;
  nlohmann::json to_json() const;
  static AttackConfig from_json(const nlohmann::json& j);
};

/// Weighted true-class logit sum_k w_k z_y^(k). The attack objective is its negation.
double loss_untargeted(const std::vector<Tensor>& logits, int y, const std::vector<double>& omega);
/// sum_k w_k log softmax(z^(k) / T)_{y_t}.
double loss_targeted(const std::vector<Tensor>& logits, int target, const std::vector<double>& omega, double t);

ad::Var loss_untargeted(const std::vector<ad::Var>& logits, int y, const std::vector<double>& omega);
ad::Var loss_targeted(const std::vector<ad::Var>& logits, int target, const std::vector<double>& omega, double t);

struct IterateRecord {
  int iteration = 0;
  std::string branch;        // adversarial, stealth, summed, skipped or final
  double confidence = 0.0;   // fraction fooled (untargeted) or min target probability (targeted)
  double d = 0.0;            // mean delta E of the predicted capture against the gray capture
  bool adversarial = false;  // adversarial condition met at this iterate
  double step_norm = 0.0;    // L2 norm of the applied update before clipping
  double temperature = 1.0;
};

struct AttackResult {
  ProjectorImage x_prime;
  Tensor perturbation;  // x_prime - x0
  std::vector<IterateRecord> log;
  int best_iter = -1;  // -1 when no iterate was adversarial
  bool success = false;
  std::vector<bool> surrogate_success;  // per ensemble member, at the returned iterate

  nlohmann::json to_json() const;
};

/// Called with every evaluated iterate before its update is applied.
using IterateObserver = std::function<void(const IterateRecord&, const Tensor& x)>;

/// Runs the attack. `ensemble` must hold one classifier for single-classifier
/// variants; `pam` must be all ones for attention-free variants. `mask` is the
/// direct-light mask (1,H,W), used when cfg.use_mask is set.
AttackResult run_attack(const AttackConfig& cfg, const surrogate::SurrogateModel& surrogate,
                        const std::vector<const zoo::Classifier*>& ensemble,
                        const attention::PerturbationAttentionMap& pam, const ProjectorImage& x0,
                        const CapturedImage& gray_capture, const Tensor& mask, int true_label,
                        const IterateObserver& observer = {});

}  // namespace capaa::attack
