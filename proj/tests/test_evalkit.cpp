#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "ipr/errors.hpp"
#include "ipr/evalkit.hpp"
#include "test_util.hpp"

using namespace ipr;

namespace {

// Ten landmarks strung 100 m apart: far enough that only a query's own
// entry can ever fall inside the 25 m positive radius.
GroundTruth string_of_pearls(int n_queries) {
  GroundTruth gt;
  for (int i = 0; i < 10; ++i) gt.map_positions.push_back({100.0 * i, 0.0});
  for (int q = 0; q < n_queries; ++q) gt.query_positions.push_back({100.0 * (q % 10), 0.0});
  return gt;
}

RankedQuery ranked(std::vector<std::uint64_t> ids, double first_dist = 0.1) {
  RankedQuery r;
  double d = first_dist;
  for (std::uint64_t id : ids) {
    r.matches.push_back({id, d});
    d += 0.1;
  }
  return r;
}

// 20 queries against the pearls: own entry at rank 1 for q0-q11, rank 3 for
// q12-q14, rank 7 for q15-q16, absent for q17-q19.
std::vector<RankedQuery> recall_instance() {
  std::vector<RankedQuery> results;
  for (int q = 0; q < 20; ++q) {
    const std::uint64_t own = static_cast<std::uint64_t>(q % 10);
    std::vector<std::uint64_t> fillers;
    for (std::uint64_t id = 0; id < 10; ++id)
      if (id != own) fillers.push_back(id);

    std::vector<std::uint64_t> ids;
    int rank;
    if (q <= 11)
      rank = 0;
    else if (q <= 14)
      rank = 2;
    else if (q <= 16)
      rank = 6;
    else
      rank = -1;  // absent
    std::size_t filler_at = 0;
    for (int slot = 0; slot < 9; ++slot) {
      if (slot == rank)
        ids.push_back(own);
      else
        ids.push_back(fillers[filler_at++]);
    }
    results.push_back(ranked(ids));
  }
  return results;
}

// Ten queries, one per pearl, top-1 labels P P N P P N P N P N with
// distances 0.1 .. 1.0. Negatives retrieve the entry five pearls away.
std::vector<RankedQuery> ap_instance() {
  const bool positive[10] = {true, true, false, true, true, false, true, false, true, false};
  std::vector<RankedQuery> results;
  for (int q = 0; q < 10; ++q) {
    const std::uint64_t id =
        positive[q] ? static_cast<std::uint64_t>(q) : static_cast<std::uint64_t>((q + 5) % 10);
    RankedQuery r;
    r.matches.push_back({id, 0.1 * (q + 1)});
    results.push_back(r);
  }
  return results;
}

}  // namespace

TEST_SUITE("evalkit") {
  TEST_CASE("recall at each depth matches the hand-counted instance") {
    const GroundTruth gt = string_of_pearls(20);
    const auto results = recall_instance();
    CHECK(recall_at_n(results, gt, 1) == doctest::Approx(12.0 / 20.0).epsilon(1e-12));
    CHECK(recall_at_n(results, gt, 5) == doctest::Approx(15.0 / 20.0).epsilon(1e-12));
    CHECK(recall_at_n(results, gt, 10) == doctest::Approx(17.0 / 20.0).epsilon(1e-12));

    // Independent recount.
    CHECK(recall_at_n(results, gt, 1) == testutil::oracle_recall_at_n(results, gt, 1));
    CHECK(recall_at_n(results, gt, 5) == testutil::oracle_recall_at_n(results, gt, 5));
    CHECK(recall_at_n(results, gt, 10) == testutil::oracle_recall_at_n(results, gt, 10));
  }

  TEST_CASE("recall denominators count every query, answered or not") {
    GroundTruth gt = string_of_pearls(2);
    // Second query sits far from every map entry: it can never be correct,
    // yet it must still count in the denominator.
    gt.query_positions[1] = {5000.0, 0.0};
    const std::vector<RankedQuery> results = {ranked({0}), ranked({3})};
    CHECK(recall_at_n(results, gt, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("recall input validation") {
    const GroundTruth gt = string_of_pearls(2);
    const std::vector<RankedQuery> results = {ranked({0}), ranked({1})};
    CHECK_THROWS_AS(recall_at_n(results, gt, 0), ConfigError);
    CHECK_THROWS_AS(recall_at_n({}, gt, 1), DataError);
    CHECK_THROWS_AS(recall_at_n({ranked({0})}, gt, 1), DataError);  // count mismatch
    CHECK_THROWS_AS(recall_at_n({ranked({77}), ranked({0})}, gt, 1), DataError);  // bad id
    GroundTruth bad = gt;
    bad.positive_radius = 60.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("the precision-recall sweep matches the hand-walked table") {
    const GroundTruth gt = string_of_pearls(10);
    const auto results = ap_instance();
    const auto curve = pr_curve(results, gt);
    REQUIRE(curve.size() == 10);

    const double expect_p[10] = {1.0,       1.0,       2.0 / 3.0, 3.0 / 4.0, 4.0 / 5.0,
                                 2.0 / 3.0, 5.0 / 7.0, 5.0 / 8.0, 2.0 / 3.0, 3.0 / 5.0};
    const double expect_r[10] = {0.1,       0.2,       2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0,
                                 0.5,       5.0 / 8.0, 5.0 / 7.0, 6.0 / 7.0, 1.0};
    for (int k = 0; k < 10; ++k) {
      CHECK(curve[static_cast<std::size_t>(k)].threshold ==
            doctest::Approx(0.1 * (k + 1)).epsilon(1e-12));
      CHECK(curve[static_cast<std::size_t>(k)].precision ==
            doctest::Approx(expect_p[k]).epsilon(1e-12));
      CHECK(curve[static_cast<std::size_t>(k)].recall ==
            doctest::Approx(expect_r[k]).epsilon(1e-12));
    }

    // Cross-check each point against the direct counting oracle.
    for (const PrPoint& pt : curve) {
      const auto counts = testutil::oracle_pr_counts(results, gt, pt.threshold);
      const double p = (counts.tp + counts.fp == 0)
                           ? 1.0
                           : static_cast<double>(counts.tp) / (counts.tp + counts.fp);
      const double r = (counts.tp + counts.fn == 0)
                           ? 0.0
                           : static_cast<double>(counts.tp) / (counts.tp + counts.fn);
      CHECK(pt.precision == doctest::Approx(p).epsilon(1e-12));
      CHECK(pt.recall == doctest::Approx(r).epsilon(1e-12));
    }
  }

  TEST_CASE("average precision reproduces the exact fraction sum") {
    const GroundTruth gt = string_of_pearls(10);
    const auto curve = pr_curve(ap_instance(), gt);
    const double expected = 1.0 / 10 + 1.0 / 10 + 2.0 / 135 + 1.0 / 12 + 4.0 / 45 +
                            1.0 / 27 + 5.0 / 56 + 25.0 / 448 + 2.0 / 21 + 3.0 / 35;
    CHECK(average_precision(curve) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(average_precision(curve) ==
          doctest::Approx(testutil::oracle_average_precision(ap_instance(), gt))
              .epsilon(1e-12));
  }

  TEST_CASE("matches in the indifference band sway neither precision nor recall") {
    GroundTruth gt;
    gt.map_positions = {{0.0, 0.0}, {100.0, 0.0}, {200.0, 0.0}};
    gt.query_positions = {{0.0, 0.0}, {35.0, 0.0}, {200.0, 0.0}};
    // q0: true positive. q1: 35 m separation — inside the (25, 50] band, and
    // no map entry lies within 25 m, so it is never a false negative either.
    // q2: retrieves the entry 200 m away -> false positive once accepted.
    std::vector<RankedQuery> results = {ranked({0}, 0.1), ranked({0}, 0.2), ranked({0}, 0.3)};

    const auto curve = pr_curve(results, gt);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(curve[0].recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(curve[1].precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(curve[1].recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(curve[2].precision == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(curve[2].recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(average_precision(curve) == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("degenerate counts fall back to the conventional values") {
    GroundTruth gt;
    gt.map_positions = {{0.0, 0.0}};
    gt.query_positions = {{35.0, 0.0}};  // band-only query, no possible positive
    const auto curve = pr_curve({ranked({0}, 0.5)}, gt);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].precision == 1.0);  // TP + FP == 0
    CHECK(curve[0].recall == 0.0);     // TP + FN == 0
  }

  TEST_CASE("f-scores reproduce the hand examples") {
    CHECK(f_beta(0.8, 0.8, 0.5) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f_beta(0.8, 0.8, 1.0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f_beta(0.8, 0.8, 2.0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f_beta(1.0, 0.5, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(f_beta(0.5, 1.0, 2.0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(f_beta(0.0, 0.0, 1.0) == 0.0);
    CHECK_THROWS_AS(f_beta(0.5, 0.5, 0.0), ConfigError);
    CHECK_THROWS_AS(f_beta(1.5, 0.5, 1.0), DataError);
  }

  TEST_CASE("rejection sweep on constructed labels walks the hand curve") {
    // Queries q0-q4 are answered correctly and confidently (U 0.1..0.5);
    // q5-q9 are wrong and shaky (U 0.6..1.0).
    const GroundTruth gt = string_of_pearls(10);
    std::vector<RankedQuery> results;
    std::vector<double> us;
    for (int q = 0; q < 10; ++q) {
      const std::uint64_t id =
          q < 5 ? static_cast<std::uint64_t>(q) : static_cast<std::uint64_t>((q + 3) % 10);
      RankedQuery r;
      r.matches.push_back({id, 0.2});
      results.push_back(r);
      us.push_back(0.1 * (q + 1));
    }

    const auto thresholds = quantile_thresholds(us);
    REQUIRE(thresholds.size() == 10);
    CHECK(thresholds.front() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::is_sorted(thresholds.rbegin(), thresholds.rend()));

    const auto curve = recall_at_rejection(results, us, gt, thresholds);
    REQUIRE(curve.size() == 10);
    CHECK(curve[0].rejection_fraction == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(curve[0].recall_at_1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(curve[1].rejection_fraction == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(curve[1].recall_at_1 == doctest::Approx(5.0 / 9.0).epsilon(1e-12));
    CHECK(curve[5].rejection_fraction == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(curve[5].recall_at_1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(curve[9].rejection_fraction == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(curve[9].recall_at_1 == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < curve.size(); ++i)
      CHECK(curve[i].rejection_fraction > curve[i - 1].rejection_fraction);

    // Filtering on uncertainty strictly improves recall on this instance.
    CHECK(curve[5].recall_at_1 > curve[0].recall_at_1);

    // A threshold below every uncertainty empties the survivor set: no point.
    auto with_empty = thresholds;
    with_empty.push_back(0.05);
    CHECK(recall_at_rejection(results, us, gt, with_empty).size() == 10);

    CHECK_THROWS_AS(recall_at_rejection(results, {0.1}, gt, thresholds), DataError);
  }

  TEST_CASE("quantile thresholds are the unique uncertainties descending") {
    const auto t = quantile_thresholds({0.3, 0.1, 0.3, 0.7});
    REQUIRE(t.size() == 3);
    CHECK(t[0] == 0.7);
    CHECK(t[1] == 0.3);
    CHECK(t[2] == 0.1);
  }

  TEST_CASE("the full report agrees with its component metrics") {
    const GroundTruth gt = string_of_pearls(10);
    const auto results = ap_instance();
    std::vector<double> us;
    for (int q = 0; q < 10; ++q) us.push_back(0.1 * (q + 1));
    const ThresholdSet ladder = make_thresholds(0.5, 10);

    const EvalReport report = evaluate(results, us, gt, ladder);
    CHECK(report.recall_at_1 == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(report.recall_at_5 == doctest::Approx(0.6).epsilon(1e-12));   // single match lists
    CHECK(report.recall_at_10 == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(report.average_precision ==
          doctest::Approx(average_precision(pr_curve(results, gt))).epsilon(1e-12));

    // Best F-1 on this curve sits at the k=9 sweep point (P=2/3, R=6/7);
    // the k=10 point ties at F1=3/4 and the lower threshold must win.
    CHECK(report.f_1 == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(report.f_05 == doctest::Approx(30.0 / 43.0).epsilon(1e-12));
    CHECK(report.f_2 == doctest::Approx(30.0 / 37.0).epsilon(1e-12));

    // Static curve: only thresholds with survivors produce points. With U in
    // 0.1..1.0 every ladder value from 0.5 up keeps someone.
    CHECK(!report.rr_static.empty());
    for (const RrPoint& pt : report.rr_static) {
      CHECK(pt.rejection_fraction >= 0.0);
      CHECK(pt.rejection_fraction < 1.0);
      CHECK(pt.recall_at_1 >= 0.0);
      CHECK(pt.recall_at_1 <= 1.0);
    }
    CHECK(report.rr_quantile.size() == 10);
  }

  TEST_CASE("session pairing enumerates every ordered pair once") {
    const auto pairs = all_ordered_pairs(5);
    CHECK(pairs.size() == 20);
    std::set<std::pair<int, int>> seen(pairs.begin(), pairs.end());
    CHECK(seen.size() == 20);
    for (const auto& [a, b] : pairs) {
      CHECK(a != b);
      CHECK(a >= 0);
      CHECK(a < 5);
      CHECK(b >= 0);
      CHECK(b < 5);
    }
    CHECK(all_ordered_pairs(2).size() == 2);
    CHECK_THROWS_AS(all_ordered_pairs(1), DataError);
  }

  TEST_CASE("report averaging is a plain scalar mean") {
    EvalReport a;
    a.recall_at_1 = 0.5;
    a.average_precision = 0.4;
    a.f_1 = 0.6;
    a.rr_quantile = {{1.0, 0.0, 0.5}, {0.5, 0.5, 0.7}};
    EvalReport b;
    b.recall_at_1 = 0.7;
    b.average_precision = 0.8;
    b.f_1 = 0.2;
    b.rr_quantile = {{0.9, 0.0, 0.9}, {0.4, 0.5, 0.9}};

    const EvalReport mean = average_reports({a, b});
    CHECK(mean.recall_at_1 == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(mean.average_precision == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(mean.f_1 == doctest::Approx(0.4).epsilon(1e-12));

    // Matching rejection fractions average pointwise.
    REQUIRE(mean.rr_quantile.size() == 2);
    CHECK(mean.rr_quantile[0].rejection_fraction == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mean.rr_quantile[0].recall_at_1 == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(mean.rr_quantile[1].recall_at_1 == doctest::Approx(0.8).epsilon(1e-12));

    // Misaligned fractions drop the curve rather than fabricate one.
    b.rr_quantile[1].rejection_fraction = 0.6;
    const EvalReport dropped = average_reports({a, b});
    CHECK(dropped.rr_quantile.empty());
  }

  TEST_CASE("report files carry the exact scalar keys") {
    testutil::TempDir dir("reports");
    EvalReport report;
    report.recall_at_1 = 0.625;
    report.recall_at_5 = 0.75;
    report.recall_at_10 = 0.875;
    report.average_precision = 0.5;
    report.f_05 = 0.25;
    report.f_1 = 0.3;
    report.f_2 = 0.4;
    report.rr_static = {{1.5, 0.0, 0.625}, {1.0, 0.25, 0.75}};

    const auto json_path = dir.path() / "report.json";
    const auto csv_path = dir.path() / "report.csv";
    const auto rr_path = dir.path() / "rr.csv";
    save_report_json(report, json_path);
    save_report_csv(report, csv_path);
    save_rr_csv(report.rr_static, rr_path);

    std::ifstream csv(csv_path);
    std::string text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
    CHECK(text.find("metric,value") != std::string::npos);
    CHECK(text.find("recall_at_1,0.625") != std::string::npos);
    CHECK(text.find("recall_at_5,0.75") != std::string::npos);
    CHECK(text.find("recall_at_10,0.875") != std::string::npos);
    CHECK(text.find("average_precision,0.5") != std::string::npos);
    CHECK(text.find("f_0.5,0.25") != std::string::npos);
    CHECK(text.find("f_1,0.3") != std::string::npos);
    CHECK(text.find("f_2,0.4") != std::string::npos);

    std::ifstream rr(rr_path);
    std::string rr_text((std::istreambuf_iterator<char>(rr)),
                        std::istreambuf_iterator<char>());
    CHECK(rr_text.find("rejection_fraction,recall_at_1") != std::string::npos);
    CHECK(rr_text.find("0.25,0.75") != std::string::npos);

    std::ifstream json(json_path);
    std::string json_text((std::istreambuf_iterator<char>(json)),
                          std::istreambuf_iterator<char>());
    CHECK(json_text.find("\"recall_at_1\"") != std::string::npos);
    CHECK(json_text.find("\"average_precision\"") != std::string::npos);
  }
}
