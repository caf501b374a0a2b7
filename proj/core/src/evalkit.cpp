#include "ipr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"
#include "json.hpp"

namespace ipr {

namespace {

double dist_xy(const XY& a, const XY& b) { return std::hypot(a.x - b.x, a.y - b.y); }

const XY& entry_position(const GroundTruth& gt, std::uint64_t entry_id) {
  if (entry_id >= gt.map_positions.size())
    throw DataError("match entry id has no ground-truth map position");
  return gt.map_positions[static_cast<size_t>(entry_id)];
}

bool has_possible_positive(const GroundTruth& gt, const XY& query) {
  for (const XY& m : gt.map_positions)
    if (dist_xy(m, query) <= gt.positive_radius) return true;
  return false;
}

void validate_results(const std::vector<RankedQuery>& results, const GroundTruth& gt) {
  gt.validate();
  if (results.empty()) throw DataError("evaluation needs at least one query");
  if (results.size() != gt.query_positions.size())
    throw DataError("result count does not match query ground-truth count");
}

}  // namespace

void GroundTruth::validate() const {
  if (positive_radius <= 0.0) throw ConfigError("positive_radius must be > 0");
  if (!(positive_radius < negative_radius))
    throw ConfigError("positive_radius must be < negative_radius");
  if (map_positions.empty()) throw DataError("ground truth has no map positions");
}

double recall_at_n(const std::vector<RankedQuery>& results, const GroundTruth& gt, int n) {
  validate_results(results, gt);
  if (n < 1) throw ConfigError("recall N must be >= 1");
  size_t hits = 0;
  for (size_t q = 0; q < results.size(); ++q) {
    const XY& truth = gt.query_positions[q];
    const size_t top = std::min(results[q].matches.size(), static_cast<size_t>(n));
    for (size_t i = 0; i < top; ++i) {
      if (dist_xy(entry_position(gt, results[q].matches[i].entry_id), truth) <=
          gt.positive_radius) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<PrPoint> pr_curve(const std::vector<RankedQuery>& results, const GroundTruth& gt) {
  validate_results(results, gt);

  enum class Label { kPositive, kNegative, kBand, kNoMatch };
  struct QueryCase {
    double distance = 0.0;
    Label label = Label::kNoMatch;
    bool possible_positive = false;
  };
  std::vector<QueryCase> cases(results.size());
  std::set<double> thresholds;
  for (size_t q = 0; q < results.size(); ++q) {
    QueryCase& c = cases[q];
    c.possible_positive = has_possible_positive(gt, gt.query_positions[q]);
    if (results[q].matches.empty()) continue;  // counts as never accepted
    const Match& top = results[q].matches[0];
    c.distance = top.distance;
    const double err = dist_xy(entry_position(gt, top.entry_id), gt.query_positions[q]);
    if (err <= gt.positive_radius) c.label = Label::kPositive;
    else if (err > gt.negative_radius) c.label = Label::kNegative;
    else c.label = Label::kBand;
    thresholds.insert(top.distance);
  }
  if (thresholds.empty()) throw DataError("pr_curve needs at least one retrieved match");

  std::vector<PrPoint> curve;
  for (double t : thresholds) {
    size_t tp = 0, fp = 0, fn = 0;
    for (const QueryCase& c : cases) {
      const bool accepted = c.label != Label::kNoMatch && c.distance <= t;
      if (accepted) {
        if (c.label == Label::kPositive) ++tp;
        else if (c.label == Label::kNegative) ++fp;
        // band matches enter neither count
      } else if (c.possible_positive) {
        ++fn;
      }
    }
    PrPoint p;
    p.threshold = t;
    p.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    curve.push_back(p);
  }
  return curve;
}

double average_precision(const std::vector<PrPoint>& curve) {
  if (curve.empty()) throw DataError("average_precision of an empty curve");
  std::map<double, double> best;  // recall -> best precision at that recall
  for (const PrPoint& p : curve) {
    auto [it, inserted] = best.emplace(p.recall, p.precision);
    if (!inserted && p.precision > it->second) it->second = p.precision;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& [recall, precision] : best) {
    ap += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return ap;
}

double f_beta(double precision, double recall, double beta) {
  if (beta <= 0.0) throw ConfigError("f_beta beta must be > 0");
  if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0)
    throw DataError("f_beta inputs must lie in [0, 1]");
  if (precision == 0.0 && recall == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * precision * recall / (b2 * precision + recall);
}

std::vector<RrPoint> recall_at_rejection(const std::vector<RankedQuery>& results,
                                         const std::vector<double>& uncertainties,
                                         const GroundTruth& gt,
                                         const std::vector<double>& thresholds) {
  validate_results(results, gt);
  if (uncertainties.size() != results.size())
    throw DataError("one uncertainty per query is required");

  std::vector<RrPoint> curve;
  for (double t : thresholds) {
    std::vector<RankedQuery> survivors;
    GroundTruth sub;
    sub.map_positions = gt.map_positions;
    sub.positive_radius = gt.positive_radius;
    sub.negative_radius = gt.negative_radius;
    for (size_t q = 0; q < results.size(); ++q) {
      if (uncertainties[q] > t) continue;
      survivors.push_back(results[q]);
      sub.query_positions.push_back(gt.query_positions[q]);
    }
    if (survivors.empty()) continue;
    RrPoint p;
    p.threshold = t;
    p.rejection_fraction =
        1.0 - static_cast<double>(survivors.size()) / static_cast<double>(results.size());
    p.recall_at_1 = recall_at_n(survivors, sub, 1);
    curve.push_back(p);
  }
  return curve;
}

std::vector<double> quantile_thresholds(const std::vector<double>& uncertainties) {
  std::set<double> unique(uncertainties.begin(), uncertainties.end());
  return {unique.rbegin(), unique.rend()};
}

EvalReport evaluate(const std::vector<RankedQuery>& results,
                    const std::vector<double>& uncertainties, const GroundTruth& gt,
                    const ThresholdSet& static_thresholds) {
  EvalReport report;
  report.recall_at_1 = recall_at_n(results, gt, 1);
  report.recall_at_5 = recall_at_n(results, gt, 5);
  report.recall_at_10 = recall_at_n(results, gt, 10);

  const std::vector<PrPoint> curve = pr_curve(results, gt);
  report.average_precision = average_precision(curve);
  const PrPoint* best = &curve.front();
  double best_f1 = f_beta(best->precision, best->recall, 1.0);
  for (const PrPoint& p : curve) {
    const double f1 = f_beta(p.precision, p.recall, 1.0);
    if (f1 > best_f1) {
      best_f1 = f1;
      best = &p;
    }
  }
  report.f_05 = f_beta(best->precision, best->recall, 0.5);
  report.f_1 = best_f1;
  report.f_2 = f_beta(best->precision, best->recall, 2.0);

  report.rr_static = recall_at_rejection(results, uncertainties, gt, static_thresholds.values);
  report.rr_quantile =
      recall_at_rejection(results, uncertainties, gt, quantile_thresholds(uncertainties));
  return report;
}

std::vector<std::pair<int, int>> all_ordered_pairs(int n_sessions) {
  if (n_sessions < 2) throw DataError("cross-validation needs at least 2 sessions");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_sessions; ++i)
    for (int j = 0; j < n_sessions; ++j)
      if (i != j) pairs.emplace_back(i, j);
  return pairs;
}

namespace {

bool curves_aligned(const std::vector<EvalReport>& reports,
                    std::vector<RrPoint> EvalReport::*curve) {
  const std::vector<RrPoint>& first = reports.front().*curve;
  for (const EvalReport& r : reports) {
    const std::vector<RrPoint>& c = r.*curve;
    if (c.size() != first.size()) return false;
    for (size_t i = 0; i < c.size(); ++i)
      if (c[i].rejection_fraction != first[i].rejection_fraction) return false;
  }
  return true;
}

std::vector<RrPoint> average_curves(const std::vector<EvalReport>& reports,
                                    std::vector<RrPoint> EvalReport::*curve) {
  if (!curves_aligned(reports, curve)) return {};
  std::vector<RrPoint> mean = reports.front().*curve;
  for (RrPoint& p : mean) p.recall_at_1 = 0.0;
  for (const EvalReport& r : reports)
    for (size_t i = 0; i < mean.size(); ++i) mean[i].recall_at_1 += (r.*curve)[i].recall_at_1;
  for (RrPoint& p : mean) p.recall_at_1 /= static_cast<double>(reports.size());
  return mean;
}

nlohmann::json curve_to_json(const std::vector<RrPoint>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RrPoint& p : curve)
    arr.push_back({{"threshold", p.threshold},
                   {"rejection_fraction", p.rejection_fraction},
                   {"recall_at_1", p.recall_at_1}});
  return arr;
}

}  // namespace

EvalReport average_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw DataError("average_reports needs at least one report");
  EvalReport mean;
  for (const EvalReport& r : reports) {
    mean.recall_at_1 += r.recall_at_1;
    mean.recall_at_5 += r.recall_at_5;
    mean.recall_at_10 += r.recall_at_10;
    mean.average_precision += r.average_precision;
    mean.f_05 += r.f_05;
    mean.f_1 += r.f_1;
    mean.f_2 += r.f_2;
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  mean.recall_at_1 *= inv;
  mean.recall_at_5 *= inv;
  mean.recall_at_10 *= inv;
  mean.average_precision *= inv;
  mean.f_05 *= inv;
  mean.f_1 *= inv;
  mean.f_2 *= inv;
  mean.rr_static = average_curves(reports, &EvalReport::rr_static);
  mean.rr_quantile = average_curves(reports, &EvalReport::rr_quantile);
  return mean;
}

void save_report_json(const EvalReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["recall_at"] = {{"1", report.recall_at_1},
                    {"5", report.recall_at_5},
                    {"10", report.recall_at_10}};
  j["average_precision"] = report.average_precision;
  j["f_scores"] = {{"0.5", report.f_05}, {"1", report.f_1}, {"2", report.f_2}};
  j["recall_rr"] = {{"static", curve_to_json(report.rr_static)},
                    {"quantile", curve_to_json(report.rr_quantile)}};
  io::atomic_write(
      path, [&](std::ostream& out) { out << j.dump(2) << '\n'; }, /*binary=*/false);
}

void save_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  io::atomic_write(
      path,
      [&](std::ostream& out) {
        out << "metric,value\n";
        out << "recall_at_1," << io::fmt_double(report.recall_at_1) << '\n';
        out << "recall_at_5," << io::fmt_double(report.recall_at_5) << '\n';
        out << "recall_at_10," << io::fmt_double(report.recall_at_10) << '\n';
        out << "average_precision," << io::fmt_double(report.average_precision) << '\n';
        out << "f_0.5," << io::fmt_double(report.f_05) << '\n';
        out << "f_1," << io::fmt_double(report.f_1) << '\n';
        out << "f_2," << io::fmt_double(report.f_2) << '\n';
      },
      /*binary=*/false);
}

void save_rr_csv(const std::vector<RrPoint>& curve, const std::filesystem::path& path) {
  io::atomic_write(
      path,
      [&](std::ostream& out) {
        out << "rejection_fraction,recall_at_1\n";
        for (const RrPoint& p : curve)
          out << io::fmt_double(p.rejection_fraction) << ','
              << io::fmt_double(p.recall_at_1) << '\n';
      },
      /*binary=*/false);
}

}  // namespace ipr
