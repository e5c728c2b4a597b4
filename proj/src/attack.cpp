#include "capaa/attack.hpp"

#include <algorithm>
#include <cmath>

#include "capaa/color.hpp"
#include "capaa/error.hpp"

namespace capaa::attack {

namespace {

std::vector<double> weights_or_uniform(const std::vector<double>& omega, std::size_t n) {
  if (omega.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (omega.size() != n) throw Error("invalid_config", "omega needs one weight per classifier");
  return omega;
}

}  // namespace

std::string to_string(Mode m) { return m == Mode::kUntargeted ? "untargeted" : "targeted"; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCapaa: return "capaa";
    case Variant::kCapaaNoAttention: return "capaa_no_attention";
    case Variant::kCapaaClassifierSpecific: return "capaa_classifier_specific";
    case Variant::kSpaa: return "spaa";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "untargeted") return Mode::kUntargeted;
  if (s == "targeted") return Mode::kTargeted;
  throw Error("invalid_config", "unknown attack mode " + s);
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::kCapaa, Variant::kCapaaNoAttention, Variant::kCapaaClassifierSpecific, Variant::kSpaa})
    if (s == to_string(v)) return v;
  throw Error("invalid_config", "unknown attack variant " + s);
}

bool is_single_classifier(Variant v) { return v == Variant::kCapaaClassifierSpecific || v == Variant::kSpaa; }
bool is_attention_free(Variant v) { return v == Variant::kCapaaNoAttention || v == Variant::kSpaa; }

double temperature_step(double t, const TemperatureSchedule& s) { return std::max(s.t_min, t * s.decay); }

void AttackConfig::validate(int ensemble_size, int num_classes) const {
  if (ensemble_size < 1) throw Error("invalid_config", "attack needs at least one classifier");
  if (is_single_classifier(variant) && ensemble_size != 1) {
    throw Error("invalid_config", to_string(variant) + " attacks exactly one classifier");
  }
  if (mode == Mode::kTargeted && (target < 0 || target >= num_classes)) {
    throw Error("invalid_config", "targeted attack needs a target class in [0, " + std::to_string(num_classes) + ")");
  }
  if (p_thr <= 0.0 || p_thr > 1.0 || d_thr <= 0.0 || beta1 <= 0.0 || beta2 <= 0.0) {
    throw Error("invalid_config", "p_thr, d_thr, beta1 and beta2 must be positive (p_thr <= 1)");
  }
  if (iterations < 1) throw Error("invalid_config", "iterations must be positive");
  if (temperature.t_min < 1.0 || temperature.t_init < temperature.t_min || temperature.decay <= 0.0 ||
      temperature.decay > 1.0) {
    throw Error("invalid_config", "temperature schedule needs 1 <= t_min <= t_init and decay in (0,1]");
  }
  const auto w = weights_or_uniform(omega, static_cast<std::size_t>(ensemble_size));
  double total = 0.0;
  for (double v : w) {
    if (v < 0.0) throw Error("invalid_config", "omega must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("invalid_config", "omega must sum to 1");
}

nlohmann::json AttackConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"target", target},
          {"variant", to_string(variant)},
          {"omega", omega},
          {"p_thr", p_thr},
          {"d_thr", d_thr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"iterations", iterations},
          {"temperature", {{"t_init", temperature.t_init}, {"t_min", temperature.t_min}, {"decay", temperature.decay}}},
          {"use_mask", use_mask},
          {"summed_gradient", summed_gradient}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  AttackConfig c;
  c.mode = mode_from_string(j.value("mode", to_string(c.mode)));
  c.target = j.value("target", c.target);
  c.variant = variant_from_string(j.value("variant", to_string(c.variant)));
  c.omega = j.value("omega", c.omega);
  c.p_thr = j.value("p_thr", c.p_thr);
  c.d_thr = j.value("d_thr", c.d_thr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.iterations = j.value("iterations", c.iterations);
  if (j.contains("temperature")) {
    const auto& t = j.at("temperature");
    c.temperature.t_init = t.value("t_init", c.temperature.t_init);
    c.temperature.t_min = t.value("t_min", c.temperature.t_min);
    c.temperature.decay = t.value("decay", c.temperature.decay);
  }
  c.use_mask = j.value("use_mask", c.use_mask);
  c.summed_gradient = j.value("summed_gradient", c.summed_gradient);
  return c;
}

ad::Var loss_untargeted(const std::vector<ad::Var>& logits, int y, const std::vector<double>& omega) {
  const auto w = weights_or_uniform(omega, logits.size());
  ad::Var total = ad::scalar(0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (y < 0 || y >= logits[k].shape().c) throw Error("invalid_class", "label " + std::to_string(y) + " out of range");
    total = ad::add(total, ad::scale(ad::select(logits[k], y), w[k]));
  }
  return total;
}

ad::Var loss_targeted(const std::vector<ad::Var>& logits, int target, const std::vector<double>& omega, double t) {
  if (t < 1.0) throw Error("invalid_argument", "temperature must be at least 1");
  const auto w = weights_or_uniform(omega, logits.size());
  ad::Var total = ad::scalar(0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (target < 0 || target >= logits[k].shape().c) throw Error("invalid_class", "target out of range");
    total = ad::add(total, ad::scale(ad::select(ad::log_softmax(ad::scale(logits[k], 1.0 / t)), target), w[k]));
  }
  return total;
}

double loss_untargeted(const std::vector<Tensor>& logits, int y, const std::vector<double>& omega) {
  std::vector<ad::Var> vars;
  for (const Tensor& z : logits) vars.push_back(ad::constant(z));
  return loss_untargeted(vars, y, omega).item();
}

double loss_targeted(const std::vector<Tensor>& logits, int target, const std::vector<double>& omega, double t) {
  std::vector<ad::Var> vars;
  for (const Tensor& z : logits) vars.push_back(ad::constant(z));
  return loss_targeted(vars, target, omega, t).item();
}

nlohmann::json AttackResult::to_json() const {
  nlohmann::json log_json = nlohmann::json::array();
  for (const auto& r : log) {
    log_json.push_back({{"iteration", r.iteration},
                        {"branch", r.branch},
                        {"confidence", r.confidence},
                        {"d", r.d},
                        {"adversarial", r.adversarial},
                        {"step_norm", r.step_norm},
                        {"temperature", r.temperature}});
  }
  return {{"best_iter", best_iter},
          {"success", success},
          {"surrogate_success", surrogate_success},
          {"perturbation_l2", std::sqrt(perturbation.squared_norm())},
          {"log", log_json}};
}

AttackResult run_attack(const AttackConfig& cfg, const surrogate::SurrogateModel& surrogate,
                        const std::vector<const zoo::Classifier*>& ensemble,
                        const attention::PerturbationAttentionMap& pam, const ProjectorImage& x0,
                        const CapturedImage& gray_capture, const Tensor& mask, int true_label,
                        const IterateObserver& observer) {
  if (ensemble.empty()) throw Error("invalid_config", "attack needs at least one classifier");
  const int num_classes = ensemble.front()->num_classes();
  cfg.validate(static_cast<int>(ensemble.size()), num_classes);
  if (cfg.mode == Mode::kUntargeted && (true_label < 0 || true_label >= num_classes)) {
    throw Error("invalid_class", "true label out of range");
  }
  const int h = surrogate.height();
  const int w = surrogate.width();
  if (x0.height() != h || x0.width() != w || gray_capture.height() != h || gray_capture.width() != w) {
    throw Error("shape_mismatch", "projector image, gray capture and surrogate resolution differ");
  }
  if (pam.weights.height() != h || pam.weights.width() != w) throw Error("shape_mismatch", "attention map size differs");
  if (is_attention_free(cfg.variant) && pam.weights.min() != 1.0) {
    throw Error("invalid_config", to_string(cfg.variant) + " requires an all-ones attention map");
  }

  Tensor gate = pam.expanded();
  if (cfg.use_mask) {
    if (mask.height() != h || mask.width() != w) throw Error("shape_mismatch", "direct-light mask size differs");
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) gate.plane(c)[p] *= mask[p];
  }
  const std::vector<double> omega = weights_or_uniform(cfg.omega, ensemble.size());
  const Tensor& reference = gray_capture.tensor();

  AttackResult result;
  Tensor x = x0.tensor();
  Tensor best_x = x;
  double best_d = std::numeric_limits<double>::infinity();
  std::vector<bool> best_fooled;
  std::vector<bool> last_fooled;
  double temperature = cfg.temperature.t_init;

  for (int j = 0; j <= cfg.iterations; ++j) {
    const ad::Var xv = ad::parameter(x);
    const ad::Var predicted = surrogate.infer(xv);
    const ad::Var d = color::mean_delta_e(predicted, reference);
    std::vector<ad::Var> logits;
    std::vector<bool> fooled;
    double confidence = cfg.mode == Mode::kUntargeted ? 0.0 : 1.0;
    for (const zoo::Classifier* f : ensemble) {
      logits.push_back(f->trace(predicted).logits);
      const zoo::Prediction p = zoo::make_prediction(logits.back().value());
      if (cfg.mode == Mode::kUntargeted) {
        fooled.push_back(p.top1 != true_label);
        confidence += fooled.back() ? 1.0 / static_cast<double>(ensemble.size()) : 0.0;
      } else {
        const double pt = p.probs[static_cast<std::size_t>(cfg.target)];
        fooled.push_back(pt >= cfg.p_thr);
        confidence = std::min(confidence, pt);
      }
    }
    const bool adversarial = std::all_of(fooled.begin(), fooled.end(), [](bool b) { return b; });
    last_fooled = fooled;

    IterateRecord rec;
    rec.iteration = j;
    rec.confidence = confidence;
    rec.d = d.item();
    rec.adversarial = adversarial;
    rec.temperature = temperature;
    if (adversarial && rec.d < best_d) {
      best_d = rec.d;
      best_x = x;
      best_fooled = fooled;
      result.best_iter = j;
    }
    if (j == cfg.iterations) {
      rec.branch = "final";
      if (observer) observer(rec, x);
      result.log.push_back(rec);
      break;
    }

    const ad::Var objective = cfg.mode == Mode::kUntargeted
                                  ? ad::scale(loss_untargeted(logits, true_label, omega), -1.0)
                                  : loss_targeted(logits, cfg.target, omega, temperature);
    double beta = cfg.beta1;
    if (cfg.summed_gradient) {
      rec.branch = "summed";
      ad::backward(ad::sub(objective, d));
    } else if (!adversarial || rec.d < cfg.d_thr) {
      rec.branch = "adversarial";
      ad::backward(objective);
    } else {
      rec.branch = "stealth";
      beta = cfg.beta2;
      ad::backward(ad::scale(d, -1.0));
    }
    if (observer) observer(rec, x);
    const Tensor g = hadamard(gate, xv.grad());
    const double norm = std::sqrt(g.squared_norm());
    if (norm > 0.0 && std::isfinite(norm)) {
      const double s = beta / norm;
      double applied = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        applied += (s * g[i]) * (s * g[i]);
        x[i] = std::clamp(x[i] + s * g[i], 0.0, 1.0);
      }
      rec.step_norm = std::sqrt(applied);
    } else {
      rec.branch = "skipped";
    }
    result.log.push_back(rec);
    temperature = temperature_step(temperature, cfg.temperature);
  }

  result.success = result.best_iter >= 0;
  if (result.success) {
    result.x_prime = ProjectorImage(best_x);
    result.surrogate_success = best_fooled;
  } else {
    result.x_prime = ProjectorImage(x);
    result.surrogate_success = last_fooled;
  }
  result.perturbation = result.x_prime.tensor() - x0.tensor();
  return result;
}

}  // namespace capaa::attack
