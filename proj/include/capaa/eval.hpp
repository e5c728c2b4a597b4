#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "capaa/color.hpp"
#include "capaa/scene.hpp"
#include "capaa/zoo.hpp"

namespace capaa::eval {

/// What a pattern was generated for.
struct PatternInfo {
  std::string pattern_id;
  std::string scene_id;
  std::string variant;
  bool targeted = false;
  int true_label = -1;
  int target = -1;
  double d_thr = 0.0;
};

struct EvaluationRecord {
  std::string pattern_id;
  std::string scene_id;
  std::string variant;
  std::string pose_id;
  std::string classifier_id;
  bool targeted = false;
  int predicted = -1;
  int true_label = -1;
  int target = -1;
  double d_thr = 0.0;
  color::StealthinessReport metrics;  // I_{x',pose} against I_{x0,pose}
};

/// Fooled predicate: predicted == target (targeted) or != true label.
bool is_fooled(const EvaluationRecord& r);
/// 1 iff fooled and delta E <= h.
int stealth_success(const EvaluationRecord& r, double h);

/// Projects x' and x0 through the ground-truth renderer at every pose with a
/// shared noise seed and scores each classifier on the adversarial capture.
std::vector<EvaluationRecord> evaluate_pattern(const PatternInfo& info, const ProjectorImage& x_prime,
                                               const ProjectorImage& x0, const scene::Scene& s,
                                               const std::vector<scene::Pose>& poses,
                                               const std::vector<const zoo::Classifier*>& classifiers,
                                               std::uint64_t seed, const scene::RenderOptions& opt = {});

/// h in {0, 0.25, ..., 12}.
std::vector<double> default_grid();

struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  int poses = 0;        // P
  int classifiers = 0;  // N
  int patterns = 0;     // H, patterns per classifier
  int missing = 0;      // grid cells without a record, scored 0
};

/// Mean of stealth_success over the P x N x H grid spanned by the records.
SuccessCurve cumulative_curve(const std::vector<EvaluationRecord>& records, const std::vector<double>& grid);

struct TableRow {
  std::string variant;
  double d_thr = 0.0;
  double l_inf = 0.0;
  double l2 = 0.0;
  double delta_e = 0.0;
  double ssim = 0.0;
  double success_rate = 0.0;  // top-1 success over the group's grid
  int records = 0;
};

struct Table {
  std::vector<TableRow> rows;                 // sorted by variant, then d_thr
  std::map<std::string, double> average;      // per variant, mean of the per-threshold rates

  std::string markdown(const std::string& title) const;
};

/// Groups records by (variant, d_thr). Stealthiness means use every attempt
/// unless successful_only is set.
Table table_report(const std::vector<EvaluationRecord>& records, bool successful_only = false);

/// Same table restricted to held-out classifiers. Throws when the held-out
/// set is empty or overlaps the ensemble.
Table transfer_eval(const std::vector<EvaluationRecord>& records, const std::vector<std::string>& ensemble_ids,
                    const std::vector<std::string>& heldout_ids, bool successful_only = false);

void write_records_csv(const std::filesystem::path& path, const std::vector<EvaluationRecord>& records);
std::vector<EvaluationRecord> read_records_csv(const std::filesystem::path& path);
void write_curves_csv(const std::filesystem::path& path, const std::map<std::string, SuccessCurve>& curves);
void write_curves_svg(const std::filesystem::path& path, const std::map<std::string, SuccessCurve>& curves,
                      const std::string& title);

}  // namespace capaa::eval
