#include "capaa/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "capaa/error.hpp"

namespace capaa::experiment {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error("invalid_config", path + ": " + message);
}

// Walks one JSON object, rejecting keys nobody asked about.
class Object {
 public:
  Object(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& operator[](const std::string& key) const { return j_.at(key); }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& item : j_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; })) {
        fail(at(item.key()), "unknown field");
      }
    }
  }

  double number(const std::string& key, double fallback, double lo, double hi) const {
    if (!has(key)) return fallback;
    return checked_number(j_.at(key), at(key), lo, hi);
  }

  int integer(const std::string& key, int fallback, int lo, int hi) const {
    if (!has(key)) return fallback;
    return checked_integer(j_.at(key), at(key), lo, hi);
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) fail(at(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string string(const std::string& key) const {
    if (!has(key)) fail(at(key), "required");
    if (!j_.at(key).is_string()) fail(at(key), "expected a string");
    return j_.at(key).get<std::string>();
  }

  const json& array(const std::string& key) const {
    if (!j_.at(key).is_array()) fail(at(key), "expected an array");
    return j_.at(key);
  }

  static double checked_number(const json& v, const std::string& path, double lo, double hi) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) fail(path, "must be in [" + json(lo).dump() + ", " + json(hi).dump() + "]");
    return x;
  }

  static int checked_integer(const json& v, const std::string& path, int lo, int hi) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) fail(path, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(x);
  }

 private:
  const json& j_;
  std::string path_;
};

std::vector<std::string> string_list(const Object& o, const std::string& key, std::vector<std::string> fallback) {
  if (!o.has(key)) return fallback;
  std::vector<std::string> out;
  const json& a = o.array(key);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::string path = o.at(key) + "[" + std::to_string(i) + "]";
    if (!a[i].is_string()) fail(path, "expected a string");
    out.push_back(a[i].get<std::string>());
  }
  return out;
}

void check_ids(const std::vector<std::string>& ids, const std::string& path, bool allow_empty) {
  if (ids.empty() && !allow_empty) fail(path, "must not be empty");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!zoo::is_known_arch(ids[i])) fail(p, "unknown architecture '" + ids[i] + "'");
    if (!seen.insert(ids[i]).second) fail(p, "duplicate '" + ids[i] + "'");
  }
}

bool is_full_ensemble(attack::Variant v) { return !attack::is_single_classifier(v); }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  const Object root(j, "$");
  root.allow({"seed", "out", "image_size", "scenes", "poses", "surrogate", "classifiers", "attack", "evaluation"});

  if (root.has("seed")) {
    const json& v = root["seed"];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail("$.seed", "expected a non-negative integer");
    }
    c.seed = root["seed"].get<std::uint64_t>();
    c.has_seed = true;
  }
  if (root.has("out")) c.out = base_dir / root.string("out");
  c.image_size = root.integer("image_size", c.image_size, 16, 256);
  c.dataset.image_size = c.image_size;

  if (!root.has("scenes")) fail("$.scenes", "required");
  const json& scenes = root.array("scenes");
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Object s(scenes[i], "$.scenes[" + std::to_string(i) + "]");
    s.allow({"id", "path", "label"});
    SceneEntry e;
    e.id = s.string("id");
    if (e.id.empty() || e.id.find_first_of("/\\ ") != std::string::npos || e.id[0] == '.') {
      fail(s.at("id"), "must be a plain non-empty name");
    }
    if (s.has("path") == s.has("label")) fail(s.at("path"), "give exactly one of path or label");
    if (s.has("path")) {
      e.path = base_dir / s.string("path");
      if (!fs::is_directory(e.path) || !fs::exists(e.path / "scene.json")) {
        fail(s.at("path"), "no scene directory at '" + e.path.string() + "'");
      }
    } else {
      e.label = s.integer("label", -1, 0, scene::kNumClasses - 1);
    }
    c.scenes.push_back(std::move(e));
  }

  c.poses = string_list(root, "poses", {});

  if (root.has("surrogate")) {
    const Object s(root["surrogate"], "$.surrogate");
    s.allow({"captures", "epochs", "learning_rate", "batch_size", "validation_fraction", "grid_size", "hidden"});
    c.captures = s.integer("captures", c.captures, 32, 100000);
    c.surrogate.epochs = s.integer("epochs", c.surrogate.epochs, 1, 100000);
    c.surrogate.learning_rate = s.number("learning_rate", c.surrogate.learning_rate, 1e-9, 1.0);
    c.surrogate.batch_size = s.integer("batch_size", c.surrogate.batch_size, 1, 4096);
    c.surrogate.validation_fraction = s.number("validation_fraction", c.surrogate.validation_fraction, 0.0, 0.5);
    c.surrogate.grid_size = s.integer("grid_size", c.surrogate.grid_size, 2, 64);
    c.surrogate.hidden = s.integer("hidden", c.surrogate.hidden, 1, 256);
  }

  if (root.has("classifiers")) {
    const Object s(root["classifiers"], "$.classifiers");
    s.allow({"ensemble", "heldout", "epochs", "learning_rate", "batch_size", "min_accuracy", "dataset"});
    c.ensemble = string_list(s, "ensemble", c.ensemble);
    c.heldout = string_list(s, "heldout", c.heldout);
    c.classifier.epochs = s.integer("epochs", c.classifier.epochs, 1, 100000);
    c.classifier.learning_rate = s.number("learning_rate", c.classifier.learning_rate, 1e-9, 1.0);
    c.classifier.batch_size = s.integer("batch_size", c.classifier.batch_size, 1, 4096);
    c.classifier.min_accuracy = s.number("min_accuracy", c.classifier.min_accuracy, 0.0, 1.0);
    if (s.has("dataset")) {
      const Object d(s["dataset"], "$.classifiers.dataset");
      d.allow({"train_scenes_per_class", "test_scenes_per_class", "renders_per_scene", "min_gray", "max_gray"});
      c.dataset.train_scenes_per_class = d.integer("train_scenes_per_class", c.dataset.train_scenes_per_class, 1, 10000);
      c.dataset.test_scenes_per_class = d.integer("test_scenes_per_class", c.dataset.test_scenes_per_class, 1, 10000);
      c.dataset.renders_per_scene = d.integer("renders_per_scene", c.dataset.renders_per_scene, 1, 10000);
      c.dataset.min_gray = d.number("min_gray", c.dataset.min_gray, 0.0, 1.0);
      c.dataset.max_gray = d.number("max_gray", c.dataset.max_gray, 0.0, 1.0);
      if (c.dataset.min_gray > c.dataset.max_gray) fail(d.at("min_gray"), "must not exceed max_gray");
    }
  }

  if (root.has("attack")) {
    const Object a(root["attack"], "$.attack");
    a.allow({"variants", "untargeted", "targeted", "targets", "d_thr", "omega", "p_thr", "beta1", "beta2",
             "iterations", "temperature", "use_mask", "summed_gradient"});
    if (a.has("variants")) {
      c.variants.clear();
      const auto names = string_list(a, "variants", {});
      for (std::size_t i = 0; i < names.size(); ++i) {
        try {
          c.variants.push_back(attack::variant_from_string(names[i]));
        } catch (const Error&) {
          fail(a.at("variants") + "[" + std::to_string(i) + "]", "unknown variant '" + names[i] + "'");
        }
      }
    }
    c.untargeted = a.boolean("untargeted", c.untargeted);
    c.targeted = a.boolean("targeted", c.targeted);
    if (a.has("targets")) {
      const json& t = a.array("targets");
      for (std::size_t i = 0; i < t.size(); ++i) {
        c.targets.push_back(Object::checked_integer(t[i], a.at("targets") + "[" + std::to_string(i) + "]", 0,
                                                    scene::kNumClasses - 1));
      }
    }
    if (a.has("d_thr")) {
      c.d_thr.clear();
      const json& t = a.array("d_thr");
      for (std::size_t i = 0; i < t.size(); ++i) {
        c.d_thr.push_back(Object::checked_number(t[i], a.at("d_thr") + "[" + std::to_string(i) + "]", 2.0, 5.0));
      }
    }
    if (a.has("omega")) {
      const json& t = a.array("omega");
      for (std::size_t i = 0; i < t.size(); ++i) {
        c.attack.omega.push_back(Object::checked_number(t[i], a.at("omega") + "[" + std::to_string(i) + "]", 0.0, 1.0));
      }
    }
    c.attack.p_thr = a.number("p_thr", c.attack.p_thr, 1e-6, 1.0);
    c.attack.beta1 = a.number("beta1", c.attack.beta1, 1e-9, 1e6);
    c.attack.beta2 = a.number("beta2", c.attack.beta2, 1e-9, 1e6);
    c.attack.iterations = a.integer("iterations", c.attack.iterations, 1, 1000000);
    if (a.has("temperature")) {
      const Object t(a["temperature"], "$.attack.temperature");
      t.allow({"t_init", "t_min", "decay"});
      c.attack.temperature.t_init = t.number("t_init", c.attack.temperature.t_init, 1.0, 1e6);
      c.attack.temperature.t_min = t.number("t_min", c.attack.temperature.t_min, 1.0, 1e6);
      c.attack.temperature.decay = t.number("decay", c.attack.temperature.decay, 1e-9, 1.0);
      if (c.attack.temperature.t_min > c.attack.temperature.t_init) fail(t.at("t_min"), "must not exceed t_init");
    }
    c.attack.use_mask = a.boolean("use_mask", c.attack.use_mask);
    c.attack.summed_gradient = a.boolean("summed_gradient", c.attack.summed_gradient);
  }

  if (root.has("evaluation")) {
    const Object e(root["evaluation"], "$.evaluation");
    e.allow({"successful_only"});
    c.successful_only = e.boolean("successful_only", c.successful_only);
  }

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", "cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw Error("invalid_config", path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (scenes.empty()) fail("$.scenes", "must not be empty");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!ids.insert(scenes[i].id).second) fail("$.scenes[" + std::to_string(i) + "].id", "duplicate id");
  }
  const auto all = scene::pose_set(image_size, image_size);
  std::set<std::string> seen_poses;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const std::string p = "$.poses[" + std::to_string(i) + "]";
    if (std::none_of(all.begin(), all.end(), [&](const scene::Pose& g) { return g.id == poses[i]; })) {
      fail(p, "unknown pose '" + poses[i] + "'");
    }
    if (!seen_poses.insert(poses[i]).second) fail(p, "duplicate pose");
  }
  check_ids(ensemble, "$.classifiers.ensemble", false);
  check_ids(heldout, "$.classifiers.heldout", true);
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    if (std::find(ensemble.begin(), ensemble.end(), heldout[i]) != ensemble.end()) {
      fail("$.classifiers.heldout[" + std::to_string(i) + "]", "also in the ensemble");
    }
  }
  if (variants.empty()) fail("$.attack.variants", "must not be empty");
  if (!untargeted && !targeted) fail("$.attack.untargeted", "at least one of untargeted and targeted must be set");
  if (d_thr.empty()) fail("$.attack.d_thr", "must not be empty");
  if (!attack.omega.empty()) {
    if (attack.omega.size() != ensemble.size()) fail("$.attack.omega", "needs one weight per ensemble classifier");
    double total = 0.0;
    for (double w : attack.omega) total += w;
    if (std::abs(total - 1.0) > 1e-9) fail("$.attack.omega", "must sum to 1");
  }
}

json ExperimentConfig::to_json() const {
  json scene_list = json::array();
  for (const SceneEntry& e : scenes) {
    json s{{"id", e.id}};
    if (e.path.empty()) {
      s["label"] = e.label;
    } else {
      s["path"] = e.path.string();
    }
    scene_list.push_back(std::move(s));
  }
  json variant_names = json::array();
  for (attack::Variant v : variants) variant_names.push_back(attack::to_string(v));
  json j{{"image_size", image_size},
         {"scenes", scene_list},
         {"poses", poses},
         {"surrogate",
          {{"captures", captures},
           {"epochs", surrogate.epochs},
           {"learning_rate", surrogate.learning_rate},
           {"batch_size", surrogate.batch_size},
           {"validation_fraction", surrogate.validation_fraction},
           {"grid_size", surrogate.grid_size},
           {"hidden", surrogate.hidden}}},
         {"classifiers",
          {{"ensemble", ensemble},
           {"heldout", heldout},
           {"epochs", classifier.epochs},
           {"learning_rate", classifier.learning_rate},
           {"batch_size", classifier.batch_size},
           {"min_accuracy", classifier.min_accuracy},
           {"dataset",
            {{"train_scenes_per_class", dataset.train_scenes_per_class},
             {"test_scenes_per_class", dataset.test_scenes_per_class},
             {"renders_per_scene", dataset.renders_per_scene},
             {"min_gray", dataset.min_gray},
             {"max_gray", dataset.max_gray}}}}},
         {"attack",
          {{"variants", variant_names},
           {"untargeted", untargeted},
           {"targeted", targeted},
           {"targets", targets},
           {"d_thr", d_thr},
           {"omega", attack.omega},
           {"p_thr", attack.p_thr},
           {"beta1", attack.beta1},
           {"beta2", attack.beta2},
           {"iterations", attack.iterations},
           {"temperature",
            {{"t_init", attack.temperature.t_init},
             {"t_min", attack.temperature.t_min},
             {"decay", attack.temperature.decay}}},
           {"use_mask", attack.use_mask},
           {"summed_gradient", attack.summed_gradient}}},
         {"evaluation", {{"successful_only", successful_only}}}};
  if (has_seed) j["seed"] = seed;
  if (!out.empty()) j["out"] = out.string();
  return j;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  // FNV-1a over the label, then a splitmix64 finaliser mixed with the seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h ^ (seed + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  jobs = std::clamp(jobs, 1, n);
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        {
          std::lock_guard lock(error_mutex);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<scene::Pose> config_poses(const ExperimentConfig& cfg) {
  const auto all = scene::pose_set(cfg.image_size, cfg.image_size);
  if (cfg.poses.empty()) return all;
  std::vector<scene::Pose> out;
  for (const std::string& id : cfg.poses) out.push_back(scene::find_pose(all, id));
  return out;
}

scene::Scene make_config_scene(const ExperimentConfig& cfg, std::size_t index) {
  const SceneEntry& e = cfg.scenes.at(index);
  scene::Scene s;
  if (!e.path.empty()) {
    s = scene::load_scene(e.path);
    if (s.height() != cfg.image_size || s.width() != cfg.image_size) {
      throw Error("invalid_config", "$.scenes[" + std::to_string(index) + "].path: scene is " +
                                        std::to_string(s.height()) + "x" + std::to_string(s.width()) + ", expected " +
                                        std::to_string(cfg.image_size));
    }
  } else {
    std::mt19937_64 rng(derive_seed(cfg.seed, "scene/" + e.id));
    s = scene::make_scene(e.label, cfg.image_size, rng);
  }
  s.id = e.id;
  s.validate();
  return s;
}

std::vector<AttackJob> attack_grid(const ExperimentConfig& cfg, int true_label) {
  std::vector<std::pair<std::string, attack::AttackConfig>> modes;
  if (cfg.untargeted) {
    attack::AttackConfig c = cfg.attack;
    c.mode = attack::Mode::kUntargeted;
    c.target = -1;
    modes.emplace_back("untargeted", c);
  }
  if (cfg.targeted) {
    std::vector<int> targets = cfg.targets;
    if (targets.empty()) {
      for (int t = 0; t < scene::kNumClasses; ++t) targets.push_back(t);
    }
    for (int t : targets) {
      if (t == true_label) continue;
      attack::AttackConfig c = cfg.attack;
      c.mode = attack::Mode::kTargeted;
      c.target = t;
      modes.emplace_back("target" + std::to_string(t), c);
    }
  }

  std::vector<AttackJob> jobs;
  for (const auto& [mode_name, mode_cfg] : modes) {
    for (double d : cfg.d_thr) {
      char dbuf[32];
      std::snprintf(dbuf, sizeof dbuf, "d%g", d);
      for (attack::Variant v : cfg.variants) {
        AttackJob job;
        job.config = mode_cfg;
        job.config.variant = v;
        job.config.d_thr = d;
        const std::string base = mode_name + "/" + dbuf + "/" + attack::to_string(v);
        if (is_full_ensemble(v)) {
          job.id = base;
          jobs.push_back(job);
          continue;
        }
        job.config.omega.clear();
        for (const std::string& k : cfg.ensemble) {
          job.id = base + "-" + k;
          job.classifier = k;
          jobs.push_back(job);
        }
      }
    }
  }
  return jobs;
}

SceneContext prepare_scene(const scene::Scene& s, const surrogate::SurrogateModel& surrogate,
                           const std::vector<const zoo::Classifier*>& ensemble) {
  if (surrogate.height() != s.height() || surrogate.width() != s.width()) {
    throw Error("shape_mismatch", "surrogate and scene resolutions differ");
  }
  SceneContext ctx;
  ctx.scene = s;
  ctx.gray_capture = CapturedImage(surrogate.gray_capture());
  const auto poses = scene::pose_set(s.height(), s.width());
  ctx.mask = scene::direct_light_mask(s, scene::find_pose(poses, surrogate.pose_id()));
  for (const zoo::Classifier* f : ensemble) {
    ctx.ids.push_back(f->arch_id());
    ctx.cams.push_back(attention::grad_cam_pp(*f, ctx.gray_capture, s.label));
  }
  ctx.pam = attention::build_pam(ctx.cams, {}, &surrogate, ctx.ids);
  return ctx;
}

namespace {

std::size_t member_index(const SceneContext& ctx, const std::string& id) {
  const auto it = std::find(ctx.ids.begin(), ctx.ids.end(), id);
  if (it == ctx.ids.end()) throw Error("invalid_config", "classifier '" + id + "' is not in the ensemble");
  return static_cast<std::size_t>(it - ctx.ids.begin());
}

}  // namespace

attack::AttackResult run_job(const AttackJob& job, const SceneContext& ctx, const surrogate::SurrogateModel& surrogate,
                             const std::vector<const zoo::Classifier*>& ensemble,
                             const attack::IterateObserver& observer) {
  std::vector<const zoo::Classifier*> members = ensemble;
  attention::PerturbationAttentionMap pam = ctx.pam;
  if (attack::is_single_classifier(job.config.variant)) {
    const std::size_t k = member_index(ctx, job.classifier);
    members = {ensemble.at(k)};
    if (!attack::is_attention_free(job.config.variant)) {
      pam = attention::build_pam({ctx.cams[k]}, {}, &surrogate, {ctx.ids[k]});
    }
  }
  if (attack::is_attention_free(job.config.variant)) pam = attention::uniform_pam(ctx.scene.height(), ctx.scene.width());
  const ProjectorImage x0 = scene::gray_pattern(ctx.scene.height(), ctx.scene.width());
  return attack::run_attack(job.config, surrogate, members, pam, x0, ctx.gray_capture, ctx.mask, ctx.scene.label,
                            observer);
}

std::vector<eval::EvaluationRecord> evaluate_job(const AttackJob& job, const std::string& scene_id,
                                                 const ProjectorImage& x_prime, const SceneContext& ctx,
                                                 const std::vector<scene::Pose>& poses,
                                                 const std::vector<const zoo::Classifier*>& ensemble,
                                                 const std::vector<const zoo::Classifier*>& heldout,
                                                 std::uint64_t seed) {
  std::vector<const zoo::Classifier*> scored;
  if (attack::is_single_classifier(job.config.variant)) {
    scored.push_back(ensemble.at(member_index(ctx, job.classifier)));
  } else {
    scored = ensemble;
  }
  scored.insert(scored.end(), heldout.begin(), heldout.end());

  eval::PatternInfo info;
  info.pattern_id = scene_id + "/" + job.id;
  info.scene_id = scene_id;
  info.variant = attack::to_string(job.config.variant);
  info.targeted = job.config.mode == attack::Mode::kTargeted;
  info.true_label = ctx.scene.label;
  info.target = job.config.target;
  info.d_thr = job.config.d_thr;
  const ProjectorImage x0 = scene::gray_pattern(ctx.scene.height(), ctx.scene.width());
  return eval::evaluate_pattern(info, x_prime, x0, ctx.scene, poses, scored, seed);
}

}  // namespace capaa::experiment
