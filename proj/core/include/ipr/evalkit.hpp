#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "ipr/query.hpp"

namespace ipr {

struct XY {
  double x = 0.0;
  double y = 0.0;
};

// Positive/negative geometry for retrieval scoring. map_positions is indexed
// by entry_id; a retrieved entry within positive_radius of the query's true
// position is correct, beyond negative_radius it is a false match, and the
// band in between counts as neither.
struct GroundTruth {
  std::vector<XY> map_positions;
  std::vector<XY> query_positions;
  double positive_radius = 25.0;
  double negative_radius = 50.0;
  void validate() const;  // throws ConfigError / DataError
};

// Ranked retrieval output for one query (ascending distance).
struct RankedQuery {
  std::vector<Match> matches;
};

// Fraction of queries whose top-N contains at least one entry within
// positive_radius of the query's true position.
double recall_at_n(const std::vector<RankedQuery>& results, const GroundTruth& gt, int n);

// Precision/recall sweep over a top-1 distance-acceptance threshold. At each
// unique observed distance t (ascending): queries with top-1 distance <= t
// are accepted; TP = accepted within positive_radius, FP = accepted beyond
// negative_radius (band matches are excluded from precision), FN = unaccepted
// queries that have at least one possible positive in the map.
struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};
std::vector<PrPoint> pr_curve(const std::vector<RankedQuery>& results, const GroundTruth& gt);

// Mean precision over unique recall levels (rectangular rule from recall 0,
// taking the best precision at each unique recall value).
double average_precision(const std::vector<PrPoint>& curve);

// (1 + b^2) P R / (b^2 P + R); 0 when P = R = 0.
double f_beta(double precision, double recall, double beta);

// Recall@1 among surviving queries after rejecting every query with U
// strictly above the threshold, one point per threshold; thresholds whose
// survivor set is empty produce no point.
struct RrPoint {
  double threshold = 0.0;
  double rejection_fraction = 0.0;
  double recall_at_1 = 0.0;
};
std::vector<RrPoint> recall_at_rejection(const std::vector<RankedQuery>& results,
                                         const std::vector<double>& uncertainties,
                                         const GroundTruth& gt,
                                         const std::vector<double>& thresholds);

// Unique uncertainty values in descending order — sweeping them as thresholds
// walks the rejection fraction from 0 toward 100%.
std::vector<double> quantile_thresholds(const std::vector<double>& uncertainties);

struct EvalReport {
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double average_precision = 0.0;
  double f_05 = 0.0;  // beta = 0.5
  double f_1 = 0.0;   // beta = 1
  double f_2 = 0.0;   // beta = 2
  std::vector<RrPoint> rr_static;    // swept over the configured ThresholdSet
  std::vector<RrPoint> rr_quantile;  // swept over empirical quantiles
};

// Full metric suite for one (map, query) evaluation. F-scores are taken at
// the PR point with the best F-1 (lowest threshold on ties).
EvalReport evaluate(const std::vector<RankedQuery>& results,
                    const std::vector<double>& uncertainties, const GroundTruth& gt,
                    const ThresholdSet& static_thresholds);

// Every ordered (map_session, query_session) pair, i != j.
std::vector<std::pair<int, int>> all_ordered_pairs(int n_sessions);

// Mean of each scalar metric; rejection curves are averaged pointwise only
// when every report's curve has identical rejection fractions, else dropped.
EvalReport average_reports(const std::vector<EvalReport>& reports);

// Report files: JSON, flat CSV (metric,value), and per-curve CSV
// (rejection_fraction,recall_at_1).
void save_report_json(const EvalReport& report, const std::filesystem::path& path);
void save_report_csv(const EvalReport& report, const std::filesystem::path& path);
void save_rr_csv(const std::vector<RrPoint>& curve, const std::filesystem::path& path);

}  // namespace ipr
