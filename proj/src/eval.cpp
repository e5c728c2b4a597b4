#include "capaa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "capaa/error.hpp"

namespace capaa::eval {

bool is_fooled(const EvaluationRecord& r) { return r.targeted ? r.predicted == r.target : r.predicted != r.true_label; }

int stealth_success(const EvaluationRecord& r, double h) { return is_fooled(r) && r.metrics.delta_e <= h ? 1 : 0; }

std::vector<EvaluationRecord> evaluate_pattern(const PatternInfo& info, const ProjectorImage& x_prime,
                                               const ProjectorImage& x0, const scene::Scene& s,
                                               const std::vector<scene::Pose>& poses,
                                               const std::vector<const zoo::Classifier*>& classifiers,
                                               std::uint64_t seed, const scene::RenderOptions& opt) {
  std::vector<EvaluationRecord> out;
  for (std::size_t j = 0; j < poses.size(); ++j) {
    const std::uint64_t render_seed = seed * 1000003 + j;
    const CapturedImage adv = scene::render(x_prime, s, poses[j], render_seed, opt);
    const CapturedImage ref = scene::render(x0, s, poses[j], render_seed, opt);
    const color::StealthinessReport m = color::stealthiness(adv, ref);
    for (const zoo::Classifier* f : classifiers) {
      EvaluationRecord r;
      r.pattern_id = info.pattern_id;
      r.scene_id = info.scene_id;
      r.variant = info.variant;
      r.pose_id = poses[j].id;
      r.classifier_id = f->arch_id();
      r.targeted = info.targeted;
      r.predicted = f->predict(adv).top1;
      r.true_label = info.true_label;
      r.target = info.target;
      r.d_thr = info.d_thr;
      r.metrics = m;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 48; ++i) g.push_back(0.25 * i);
  return g;
}

SuccessCurve cumulative_curve(const std::vector<EvaluationRecord>& records, const std::vector<double>& grid) {
  if (records.empty()) throw Error("empty_records", "cannot build a success curve from no records");
  std::set<std::string> poses;
  std::map<std::string, std::set<std::string>> patterns_per_classifier;
  for (const auto& r : records) {
    poses.insert(r.pose_id);
    patterns_per_classifier[r.classifier_id].insert(r.pattern_id);
  }
  std::size_t h_count = 0;
  for (const auto& [id, pats] : patterns_per_classifier) h_count = std::max(h_count, pats.size());

  SuccessCurve curve;
  curve.thresholds = grid;
  curve.poses = static_cast<int>(poses.size());
  curve.classifiers = static_cast<int>(patterns_per_classifier.size());
  curve.patterns = static_cast<int>(h_count);
  const double cells = static_cast<double>(curve.poses) * curve.classifiers * curve.patterns;
  curve.missing = static_cast<int>(cells) - static_cast<int>(records.size());
  for (double h : grid) {
    int hits = 0;
    for (const auto& r : records) hits += stealth_success(r, h);
    curve.values.push_back(hits / cells);
  }
  return curve;
}

std::string Table::markdown(const std::string& title) const {
  std::ostringstream os;
  os << "### " << title << "\n\n";
  os << "| Variant | d_thr | L_inf | L2 | dE | SSIM | Success | Avg. success |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  os << std::fixed;
  std::string last;
  for (const auto& r : rows) {
    os << "| " << r.variant << " | " << std::setprecision(0) << r.d_thr << " | " << std::setprecision(2) << r.l_inf
       << " | " << r.l2 << " | " << r.delta_e << " | " << std::setprecision(3) << r.ssim << " | "
       << std::setprecision(2) << 100.0 * r.success_rate << "% | ";
    if (r.variant != last) os << std::setprecision(2) << 100.0 * average.at(r.variant) << "%";
    os << " |\n";
    last = r.variant;
  }
  return os.str();
}

Table table_report(const std::vector<EvaluationRecord>& records, bool successful_only) {
  std::map<std::pair<std::string, double>, std::vector<const EvaluationRecord*>> groups;
  for (const auto& r : records) groups[{r.variant, r.d_thr}].push_back(&r);
  Table t;
  std::map<std::string, std::vector<double>> rates;
  for (const auto& [key, group] : groups) {
    TableRow row;
    row.variant = key.first;
    row.d_thr = key.second;
    row.records = static_cast<int>(group.size());
    std::vector<EvaluationRecord> copy;
    for (const auto* r : group) copy.push_back(*r);
    const SuccessCurve c = cumulative_curve(copy, {std::numeric_limits<double>::infinity()});
    row.success_rate = c.values[0];
    int n = 0;
    for (const auto* r : group) {
      if (successful_only && !is_fooled(*r)) continue;
      row.l_inf += r->metrics.l_inf;
      row.l2 += r->metrics.l2;
      row.delta_e += r->metrics.delta_e;
      row.ssim += r->metrics.ssim;
      ++n;
    }
    if (n > 0) {
      row.l_inf /= n;
      row.l2 /= n;
      row.delta_e /= n;
      row.ssim /= n;
    }
    rates[row.variant].push_back(row.success_rate);
    t.rows.push_back(row);
  }
  for (const auto& [variant, rs] : rates) {
    double sum = 0.0;
    for (double r : rs) sum += r;
    t.average[variant] = sum / static_cast<double>(rs.size());
  }
  return t;
}

Table transfer_eval(const std::vector<EvaluationRecord>& records, const std::vector<std::string>& ensemble_ids,
                    const std::vector<std::string>& heldout_ids, bool successful_only) {
  if (heldout_ids.empty()) throw Error("empty_heldout", "transfer evaluation needs at least one held-out classifier");
  for (const auto& id : heldout_ids) {
    if (std::find(ensemble_ids.begin(), ensemble_ids.end(), id) != ensemble_ids.end()) {
      throw Error("invalid_config", "held-out classifier " + id + " is also in the attack ensemble");
    }
  }
  std::vector<EvaluationRecord> subset;
  for (const auto& r : records) {
    if (std::find(heldout_ids.begin(), heldout_ids.end(), r.classifier_id) != heldout_ids.end()) subset.push_back(r);
  }
  if (subset.empty()) throw Error("empty_heldout", "no records for the held-out classifiers");
  return table_report(subset, successful_only);
}

void write_records_csv(const std::filesystem::path& path, const std::vector<EvaluationRecord>& records) {
  std::ofstream os(path);
  if (!os) throw Error("io_error", "cannot write " + path.string());
  os << "pattern_id,scene_id,variant,pose_id,classifier_id,targeted,predicted,true_label,target,d_thr,delta_e,l2,l_inf,ssim\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.pattern_id << ',' << r.scene_id << ',' << r.variant << ',' << r.pose_id << ',' << r.classifier_id << ','
       << (r.targeted ? 1 : 0) << ',' << r.predicted << ',' << r.true_label << ',' << r.target << ',' << r.d_thr << ','
       << r.metrics.delta_e << ',' << r.metrics.l2 << ',' << r.metrics.l_inf << ',' << r.metrics.ssim << '\n';
  }
}

std::vector<EvaluationRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("missing_file", "cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<EvaluationRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 14) throw Error("bad_records", "malformed row in " + path.string() + ": " + line);
    EvaluationRecord r;
    r.pattern_id = f[0];
    r.scene_id = f[1];
    r.variant = f[2];
    r.pose_id = f[3];
    r.classifier_id = f[4];
    r.targeted = f[5] == "1";
    r.predicted = std::stoi(f[6]);
    r.true_label = std::stoi(f[7]);
    r.target = std::stoi(f[8]);
    r.d_thr = std::stod(f[9]);
    r.metrics = {std::stod(f[10]), std::stod(f[11]), std::stod(f[12]), std::stod(f[13])};
    out.push_back(std::move(r));
  }
  return out;
}

void write_curves_csv(const std::filesystem::path& path, const std::map<std::string, SuccessCurve>& curves) {
  std::ofstream os(path);
  if (!os) throw Error("io_error", "cannot write " + path.string());
  os << "curve,h,c_h,P,N,H\n";
  for (const auto& [name, c] : curves)
    for (std::size_t i = 0; i < c.thresholds.size(); ++i)
      os << name << ',' << c.thresholds[i] << ',' << c.values[i] << ',' << c.poses << ',' << c.classifiers << ','
         << c.patterns << '\n';
}

void write_curves_svg(const std::filesystem::path& path, const std::map<std::string, SuccessCurve>& curves,
                      const std::string& title) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double kW = 640, kH = 420, kL = 60, kR = 170, kT = 40, kB = 50;
  double h_max = 0.0;
  for (const auto& [name, c] : curves)
    if (!c.thresholds.empty()) h_max = std::max(h_max, c.thresholds.back());
  if (h_max <= 0.0) h_max = 1.0;
  auto px = [&](double h) { return kL + (kW - kL - kR) * h / h_max; };
  auto py = [&](double v) { return kT + (kH - kT - kB) * (1.0 - v); };

  std::ofstream os(path);
  if (!os) throw Error("io_error", "cannot write " + path.string());
  os << std::fixed << std::setprecision(1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << py(0) << "\" x2=\"" << px(h_max) << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << py(0) << "\" x2=\"" << kL << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    os << "<text x=\"" << kL - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << std::setprecision(2) << v
       << "</text>\n" << std::setprecision(1);
    const double h = h_max * i / 4.0;
    os << "<text x=\"" << px(h) << "\" y=\"" << py(0) + 18 << "\" text-anchor=\"middle\">" << h << "</text>\n";
  }
  os << "<text x=\"" << (kL + px(h_max)) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">dE threshold h</text>\n";
  os << "<text x=\"16\" y=\"" << (kT + py(0)) / 2 << "\" transform=\"rotate(-90 16 " << (kT + py(0)) / 2
     << ")\" text-anchor=\"middle\">cumulative success rate</text>\n";
  std::size_t i = 0;
  for (const auto& [name, c] : curves) {
    const char* color = kColors[i % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < c.thresholds.size(); ++k) os << px(c.thresholds[k]) << ',' << py(c.values[k]) << ' ';
    os << "\"/>\n";
    const double ly = kT + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << kW - kR + 15 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kR + 40 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    ++i;
  }
  os << "</svg>\n";
}

}  // namespace capaa::eval
