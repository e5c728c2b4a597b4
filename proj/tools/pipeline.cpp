#include "pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "capaa/error.hpp"

namespace capaa::pipeline {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using experiment::ExperimentConfig;

const std::vector<std::string> kStages{"simulate", "train", "attack", "evaluate", "report"};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx_, digest, &n);
    std::ostringstream os;
    for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", "cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("bad_artifact", path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

// Writes to a sibling temporary first so a crash never leaves a half file
// that a resumed run would take as complete.
void write_json_atomic(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  write_json(tmp, j);
  fs::rename(tmp, path);
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

json hash_tree(const fs::path& dir, const std::set<std::string>& skip = {}) {
  json out = json::object();
  for (const fs::path& rel : files_under(dir)) {
    if (skip.count(rel.generic_string())) continue;
    out[rel.generic_string()] = sha256_file(dir / rel);
  }
  return out;
}

fs::path stage_dir(const RunOptions& opt, const std::string& stage) { return opt.out / stage; }

void write_manifest(const ExperimentConfig& cfg, const RunOptions& opt, const std::string& stage,
                    const json& inputs) {
  const fs::path dir = stage_dir(opt, stage);
  json m{{"stage", stage},
         {"seed", cfg.seed},
         {"config_key", stage_key(cfg, stage)},
         {"config", cfg.to_json()},
         {"inputs", inputs},
         {"outputs", hash_tree(dir, {"manifest.json"})}};
  m["config"].erase("out");
  write_json(dir / "manifest.json", m);
}

/// Verifies an upstream stage: manifest present, produced with the same
/// configuration, and every listed output unchanged. Returns the manifest hash.
std::string require_stage(const ExperimentConfig& cfg, const RunOptions& opt, const std::string& stage) {
  const fs::path dir = stage_dir(opt, stage);
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) {
    throw Error("missing_stage", "no " + stage + " manifest in '" + opt.out.string() + "'; run 'capaa " + stage +
                                     "' first");
  }
  const json m = read_json(mpath);
  if (m.value("config_key", "") != stage_key(cfg, stage)) {
    throw Error("stale_artifact", "the " + stage + " stage ran with a different configuration; rerun 'capaa " +
                                      stage + " --force'");
  }
  for (const auto& [rel, hash] : m.at("outputs").items()) {
    const fs::path p = dir / rel;
    if (!fs::exists(p) || sha256_file(p) != hash.get<std::string>()) {
      throw Error("stale_artifact", "'" + p.string() + "' changed since the " + stage + " stage wrote it");
    }
  }
  return sha256_file(mpath);
}

/// Clears a stage directory, refusing when it already holds results unless forced.
void claim_stage(const RunOptions& opt, const std::string& stage, bool refuse_existing) {
  const fs::path dir = stage_dir(opt, stage);
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (refuse_existing && !opt.force) {
      throw Error("exists", "'" + dir.string() + "' already holds " + stage + " outputs; pass --force to overwrite");
    }
    fs::remove_all(dir);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("io_error", "cannot create '" + dir.string() + "': " + ec.message());
  const fs::path probe = dir / ".write_probe";
  if (!std::ofstream(probe)) throw Error("io_error", "output directory '" + dir.string() + "' is not writable");
  fs::remove(probe);
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Loaded artifacts shared by the later stages.
struct Models {
  std::vector<zoo::Classifier> ensemble_store;
  std::vector<zoo::Classifier> heldout_store;
  std::vector<const zoo::Classifier*> ensemble;
  std::vector<const zoo::Classifier*> heldout;
};

Models load_classifiers(const ExperimentConfig& cfg, const RunOptions& opt, bool with_heldout) {
  Models m;
  const fs::path dir = stage_dir(opt, "train") / "classifiers";
  for (const auto& id : cfg.ensemble) m.ensemble_store.push_back(zoo::Classifier::load(dir / id / "model.ckpt"));
  if (with_heldout) {
    for (const auto& id : cfg.heldout) m.heldout_store.push_back(zoo::Classifier::load(dir / id / "model.ckpt"));
  }
  for (const auto& f : m.ensemble_store) m.ensemble.push_back(&f);
  for (const auto& f : m.heldout_store) m.heldout.push_back(&f);
  return m;
}

scene::Scene load_stage_scene(const RunOptions& opt, const std::string& id) {
  return scene::load_scene(stage_dir(opt, "simulate") / "scenes" / id);
}

surrogate::SurrogateModel load_surrogate(const RunOptions& opt, const std::string& id) {
  return surrogate::SurrogateModel::load(stage_dir(opt, "train") / "surrogates" / id / "model.ckpt");
}

std::string mode_name(bool targeted) { return targeted ? "targeted" : "untargeted"; }

std::string write_report(const ExperimentConfig& cfg, const std::vector<eval::EvaluationRecord>& records,
                         const fs::path& dir) {
  const std::set<std::string> ensemble(cfg.ensemble.begin(), cfg.ensemble.end());
  std::ostringstream md;
  std::set<std::string> patterns, scenes;
  for (const auto& r : records) {
    patterns.insert(r.pattern_id);
    scenes.insert(r.scene_id);
  }
  md << "# Attack evaluation\n\n";
  md << "- seed: " << cfg.seed << "\n";
  md << "- scenes: " << scenes.size() << ", patterns: " << patterns.size() << ", records: " << records.size()
     << "\n";
  md << "- ensemble: ";
  for (std::size_t i = 0; i < cfg.ensemble.size(); ++i) md << (i ? ", " : "") << cfg.ensemble[i];
  md << "\n- held-out: ";
  for (std::size_t i = 0; i < cfg.heldout.size(); ++i) md << (i ? ", " : "") << cfg.heldout[i];
  md << "\n- stealthiness means over " << (cfg.successful_only ? "successful attacks only" : "all attempts")
     << "\n\n";
  md << "Success is top-1 over poses x classifiers x patterns; single-classifier variants are scored on the "
        "classifier they attacked.\n\n";

  std::map<std::string, eval::SuccessCurve> curves;
  for (bool targeted : {false, true}) {
    std::vector<eval::EvaluationRecord> mode_all, mode_ens;
    for (const auto& r : records) {
      if (r.targeted != targeted) continue;
      mode_all.push_back(r);
      if (ensemble.count(r.classifier_id)) mode_ens.push_back(r);
    }
    if (mode_ens.empty()) continue;
    const std::string title = targeted ? "Targeted attacks" : "Untargeted attacks";
    md << eval::table_report(mode_ens, cfg.successful_only).markdown(title) << "\n";
    if (!cfg.heldout.empty()) {
      md << eval::transfer_eval(mode_all, cfg.ensemble, cfg.heldout, cfg.successful_only)
                .markdown(title + " on held-out classifiers")
         << "\n";
    }
    std::map<std::string, std::vector<eval::EvaluationRecord>> by_variant;
    for (const auto& r : mode_ens) by_variant[r.variant].push_back(r);
    std::map<std::string, eval::SuccessCurve> mode_curves;
    for (const auto& [variant, recs] : by_variant) {
      mode_curves[variant] = eval::cumulative_curve(recs, eval::default_grid());
      curves[mode_name(targeted) + "/" + variant] = mode_curves[variant];
    }
    const std::string svg = "curves_" + mode_name(targeted) + ".svg";
    eval::write_curves_svg(dir / svg, mode_curves, title);
    md << "Cumulative success against the dE threshold: [" << svg << "](" << svg << ")\n\n";
  }
  eval::write_curves_csv(dir / "curves.csv", curves);
  const std::string text = md.str();
  std::ofstream(dir / "report.md") << text;
  return text;
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot read '" + path.string() + "'");
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.hex();
}

std::string stage_key(const ExperimentConfig& cfg, const std::string& stage) {
  const json j = cfg.to_json();
  json k{{"stage", stage}};
  if (stage == "simulate") {
    json scenes = json::array();
    for (const auto& e : cfg.scenes) {
      json s{{"id", e.id}};
      if (e.path.empty()) {
        s["label"] = e.label;
      } else {
        s["files"] = hash_tree(e.path);
      }
      scenes.push_back(std::move(s));
    }
    k["seed"] = cfg.seed;
    k["image_size"] = cfg.image_size;
    k["scenes"] = scenes;
    k["poses"] = j["poses"];
    k["captures"] = cfg.captures;
    k["dataset"] = j["classifiers"]["dataset"];
  } else if (stage == "train") {
    k["upstream"] = stage_key(cfg, "simulate");
    k["surrogate"] = j["surrogate"];
    k["surrogate"].erase("captures");
    k["classifiers"] = j["classifiers"];
    k["classifiers"].erase("dataset");
  } else if (stage == "attack") {
    k["upstream"] = stage_key(cfg, "train");
    k["attack"] = j["attack"];
  } else if (stage == "evaluate") {
    k["upstream"] = stage_key(cfg, "attack");
    k["evaluation"] = j["evaluation"];
  } else if (stage == "report") {
    k["upstream"] = stage_key(cfg, "evaluate");
  } else {
    throw Error("invalid_argument", "unknown stage '" + stage + "'");
  }
  return sha256_hex(k.dump());
}

json simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  claim_stage(opt, "simulate", true);
  const fs::path dir = stage_dir(opt, "simulate");
  const auto poses = experiment::config_poses(cfg);
  const auto all_poses = scene::pose_set(cfg.image_size, cfg.image_size);

  // Scenes and their capture sets; slot n is the classifier dataset.
  const int n = static_cast<int>(cfg.scenes.size());
  experiment::parallel_for(n + 1, opt.jobs, [&](int i) {
    if (i == n) {
      const zoo::DatasetSplit data = zoo::make_dataset(cfg.dataset, experiment::derive_seed(cfg.seed, "dataset"));
      data.validate();
      zoo::save_dataset(data.train, dir / "dataset" / "train");
      zoo::save_dataset(data.test, dir / "dataset" / "test");
      return;
    }
    const scene::Scene s = experiment::make_config_scene(cfg, static_cast<std::size_t>(i));
    scene::save_scene(s, dir / "scenes" / s.id);
    const scene::Pose& pose0 = scene::find_pose(all_poses, "original");
    const auto samples =
        scene::capture_dataset(s, pose0, cfg.captures, experiment::derive_seed(cfg.seed, "captures/" + s.id));
    nn::Checkpoint ckpt;
    ckpt.metadata = {{"kind", "captures"}, {"scene_id", s.id}, {"pose_id", pose0.id}, {"count", samples.size()}};
    for (std::size_t k = 0; k < samples.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "%06zu", k);
      ckpt.tensors.emplace_back(std::string("x_") + name, samples[k].projector_input.tensor());
      ckpt.tensors.emplace_back(std::string("c_") + name, samples[k].captured.tensor());
    }
    fs::create_directories(dir / "captures");
    nn::save_checkpoint(dir / "captures" / (s.id + ".ckpt"), ckpt);
    fs::create_directories(dir / "masks" / s.id);
    for (const auto& g : poses) write_png(dir / "masks" / s.id / (g.id + ".png"), scene::direct_light_mask(s, g));
  });

  json inputs = json::object();
  for (const auto& e : cfg.scenes) {
    if (!e.path.empty()) inputs[e.path.string()] = hash_tree(e.path);
  }
  write_manifest(cfg, opt, "simulate", inputs);
  return {{"stage", "simulate"}, {"scenes", n}, {"captures_per_scene", cfg.captures}, {"out", dir.string()}};
}

json train(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::string upstream = require_stage(cfg, opt, "simulate");
  claim_stage(opt, "train", true);
  const fs::path sim = stage_dir(opt, "simulate");
  const fs::path dir = stage_dir(opt, "train");

  zoo::DatasetSplit data;
  data.train = zoo::load_dataset(sim / "dataset" / "train");
  data.test = zoo::load_dataset(sim / "dataset" / "test");

  std::vector<std::string> classifiers = cfg.ensemble;
  classifiers.insert(classifiers.end(), cfg.heldout.begin(), cfg.heldout.end());
  const int nc = static_cast<int>(classifiers.size());
  const int ns = static_cast<int>(cfg.scenes.size());
  std::vector<json> summaries(static_cast<std::size_t>(nc + ns));

  experiment::parallel_for(nc + ns, opt.jobs, [&](int i) {
    if (i < nc) {
      const std::string& id = classifiers[static_cast<std::size_t>(i)];
      zoo::TrainReport report;
      const zoo::Classifier f =
          zoo::train_classifier(id, data, cfg.classifier, experiment::derive_seed(cfg.seed, "classifier/" + id), &report);
      json per_pose = json::object();
      std::set<std::string> pose_ids(data.test.pose_ids.begin(), data.test.pose_ids.end());
      for (const auto& p : pose_ids) per_pose[p] = zoo::accuracy(f, data.test, p);
      const json metrics{{"model", id},
                         {"kind", "classifier"},
                         {"epoch_loss", report.epoch_loss},
                         {"train_accuracy", report.train_accuracy},
                         {"test_accuracy", report.test_accuracy},
                         {"test_accuracy_all_poses", zoo::accuracy(f, data.test)},
                         {"test_accuracy_by_pose", per_pose},
                         {"min_accuracy", cfg.classifier.min_accuracy}};
      fs::create_directories(dir / "classifiers" / id);
      f.save(dir / "classifiers" / id / "model.ckpt", {{"metrics", metrics}});
      write_json(dir / "classifiers" / id / "metrics.json", metrics);
      summaries[static_cast<std::size_t>(i)] = {{"model", id}, {"test_accuracy", report.test_accuracy}};
      return;
    }
    const std::string& id = cfg.scenes[static_cast<std::size_t>(i - nc)].id;
    const nn::Checkpoint ckpt = nn::load_checkpoint(sim / "captures" / (id + ".ckpt"));
    std::vector<scene::CaptureSample> samples;
    const int count = ckpt.metadata.at("count").get<int>();
    for (int k = 0; k < count; ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "%06d", k);
      samples.push_back({ProjectorImage(ckpt.tensor(std::string("x_") + name)),
                         CapturedImage(ckpt.tensor(std::string("c_") + name)),
                         ckpt.metadata.at("pose_id").get<std::string>()});
    }
    const auto model =
        surrogate::train_surrogate(samples, cfg.surrogate, experiment::derive_seed(cfg.seed, "surrogate/" + id));

    // Fidelity on fresh patterns against the ground-truth renderer.
    const scene::Scene s = load_stage_scene(opt, id);
    const auto poses = scene::pose_set(s.height(), s.width());
    const scene::Pose& pose0 = scene::find_pose(poses, model.pose_id());
    std::mt19937_64 rng(experiment::derive_seed(cfg.seed, "surrogate_check/" + id));
    double l1 = 0.0;
    const int checks = 20;
    for (int k = 0; k < checks; ++k) {
      const ProjectorImage x = scene::random_pattern(k % 4, s.height(), s.width(), rng);
      const CapturedImage truth = scene::render(x, s, pose0, rng());
      l1 += mean_abs_diff(model.infer(x).tensor(), truth.tensor());
    }
    const json metrics{{"model", id},
                       {"kind", "surrogate"},
                       {"train_loss", model.log().train_loss},
                       {"val_loss", model.log().val_loss},
                       {"best_epoch", model.log().best_epoch},
                       {"best_val_loss", model.log().best_val_loss},
                       {"fresh_pattern_l1", l1 / checks}};
    fs::create_directories(dir / "surrogates" / id);
    model.save(dir / "surrogates" / id / "model.ckpt");
    write_json(dir / "surrogates" / id / "metrics.json", metrics);
    summaries[static_cast<std::size_t>(i)] = {{"model", id}, {"fresh_pattern_l1", l1 / checks}};
  });

  write_manifest(cfg, opt, "train", {{"simulate_manifest", upstream}});
  return {{"stage", "train"}, {"models", summaries}, {"out", dir.string()}};
}

json run_attacks(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::string upstream = require_stage(cfg, opt, "train");
  const fs::path dir = stage_dir(opt, "attack");
  fs::create_directories(dir);
  if (fs::exists(dir / "manifest.json")) fs::remove(dir / "manifest.json");
  const Models models = load_classifiers(cfg, opt, false);

  struct Cell {
    std::size_t scene;
    experiment::AttackJob job;
  };
  std::vector<experiment::SceneContext> contexts;
  std::vector<surrogate::SurrogateModel> surrogates;
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < cfg.scenes.size(); ++i) {
    const std::string& id = cfg.scenes[i].id;
    surrogates.push_back(load_surrogate(opt, id));
    contexts.push_back(experiment::prepare_scene(load_stage_scene(opt, id), surrogates.back(), models.ensemble));
    const auto& ctx = contexts.back();
    const fs::path cdir = dir / id / "context";
    fs::create_directories(cdir);
    write_png(cdir / "gray_capture.png", ctx.gray_capture.tensor());
    write_png(cdir / "pam.png", ctx.pam.weights);
    write_png(cdir / "mask.png", ctx.mask);
    for (std::size_t k = 0; k < ctx.ids.size(); ++k) write_png(cdir / ("cam_" + ctx.ids[k] + ".png"), ctx.cams[k]);
    for (auto& job : experiment::attack_grid(cfg, ctx.scene.label)) cells.push_back({i, std::move(job)});
  }

  std::mutex count_mutex;
  int ran = 0, skipped = 0, succeeded = 0;
  experiment::parallel_for(static_cast<int>(cells.size()), opt.jobs, [&](int c) {
    const Cell& cell = cells[static_cast<std::size_t>(c)];
    const auto& ctx = contexts[cell.scene];
    const fs::path jdir = dir / cfg.scenes[cell.scene].id / cell.job.id;
    const json echo{{"attack", cell.job.config.to_json()},
                    {"classifier", cell.job.classifier},
                    {"ensemble", cfg.ensemble},
                    {"seed", cfg.seed}};
    if (!opt.force && fs::exists(jdir / "result.json") && fs::exists(jdir / "x_prime.png")) {
      const json prev = read_json(jdir / "result.json");
      if (prev.value("config", json()) == echo && prev.value("train_manifest", "") == upstream) {
        std::lock_guard lock(count_mutex);
        ++skipped;
        succeeded += prev.at("result").at("success").get<bool>();
        return;
      }
    }
    const attack::AttackResult r = experiment::run_job(cell.job, ctx, surrogates[cell.scene], models.ensemble);
    const CapturedImage predicted = surrogates[cell.scene].infer(r.x_prime);
    const color::StealthinessReport m = color::stealthiness(predicted, ctx.gray_capture);
    fs::create_directories(jdir);
    write_png(jdir / "x_prime.png", r.x_prime.tensor());
    write_json_atomic(jdir / "result.json",
                      {{"scene_id", ctx.scene.id},
                       {"job_id", cell.job.id},
                       {"true_label", ctx.scene.label},
                       {"config", echo},
                       {"train_manifest", upstream},
                       {"surrogate_metrics",
                        {{"delta_e", m.delta_e}, {"l2", m.l2}, {"l_inf", m.l_inf}, {"ssim", m.ssim}}},
                       {"result", r.to_json()}});
    std::lock_guard lock(count_mutex);
    ++ran;
    succeeded += r.success;
  });

  write_manifest(cfg, opt, "attack", {{"train_manifest", upstream}});
  return {{"stage", "attack"},
          {"jobs", cells.size()},
          {"ran", ran},
          {"skipped", skipped},
          {"surrogate_successes", succeeded},
          {"out", dir.string()}};
}

json evaluate(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::string upstream = require_stage(cfg, opt, "attack");
  claim_stage(opt, "evaluate", false);
  const fs::path dir = stage_dir(opt, "evaluate");
  const fs::path adir = stage_dir(opt, "attack");
  const Models models = load_classifiers(cfg, opt, true);
  const auto poses = experiment::config_poses(cfg);

  struct Cell {
    std::size_t scene;
    experiment::AttackJob job;
  };
  std::vector<experiment::SceneContext> contexts;
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < cfg.scenes.size(); ++i) {
    experiment::SceneContext ctx;
    ctx.scene = load_stage_scene(opt, cfg.scenes[i].id);
    ctx.ids = cfg.ensemble;
    for (auto& job : experiment::attack_grid(cfg, ctx.scene.label)) cells.push_back({i, std::move(job)});
    contexts.push_back(std::move(ctx));
  }

  std::vector<std::vector<eval::EvaluationRecord>> per_cell(cells.size());
  experiment::parallel_for(static_cast<int>(cells.size()), opt.jobs, [&](int c) {
    const Cell& cell = cells[static_cast<std::size_t>(c)];
    const std::string& sid = cfg.scenes[cell.scene].id;
    const fs::path png = adir / sid / cell.job.id / "x_prime.png";
    if (!fs::exists(png)) throw Error("missing_artifact", "no attack result at '" + png.string() + "'");
    const ProjectorImage x_prime(read_png(png));
    per_cell[static_cast<std::size_t>(c)] =
        experiment::evaluate_job(cell.job, sid, x_prime, contexts[cell.scene], poses, models.ensemble, models.heldout,
                                 experiment::derive_seed(cfg.seed, "eval/" + sid));
  });
  std::vector<eval::EvaluationRecord> records;
  for (auto& v : per_cell) records.insert(records.end(), v.begin(), v.end());

  eval::write_records_csv(dir / "records.csv", records);
  write_report(cfg, records, dir);
  write_manifest(cfg, opt, "evaluate", {{"attack_manifest", upstream}});
  return {{"stage", "evaluate"}, {"patterns", cells.size()}, {"records", records.size()}, {"out", dir.string()}};
}

json report(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::string upstream = require_stage(cfg, opt, "evaluate");
  claim_stage(opt, "report", false);
  const fs::path dir = stage_dir(opt, "report");
  const auto records = eval::read_records_csv(stage_dir(opt, "evaluate") / "records.csv");
  write_report(cfg, records, dir);

  // CAM and fused attention maps per scene.
  for (const auto& e : cfg.scenes) {
    const fs::path src = stage_dir(opt, "attack") / e.id / "context";
    if (!fs::exists(src)) continue;
    fs::create_directories(dir / "attention" / e.id);
    for (const auto& rel : files_under(src)) fs::copy_file(src / rel, dir / "attention" / e.id / rel);
  }
  std::ofstream(dir / "report.md", std::ios::app)
      << "Grad-CAM++ maps and the fused perturbation attention map for each scene are in attention/.\n";
  write_manifest(cfg, opt, "report", {{"evaluate_manifest", upstream}});
  return {{"stage", "report"}, {"records", records.size()}, {"out", dir.string()}};
}

}  // namespace capaa::pipeline
