#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "draftuq/datagen.hpp"
#include "draftuq/errors.hpp"
#include "draftuq/metrics.hpp"
#include "draftuq/report.hpp"
#include "draftuq/rng.hpp"

using namespace draftuq;

TEST_CASE("rmse unit values") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  CHECK(rmse(a, a) == 0.0);
  const std::vector<double> shifted{1.5, 2.5, 3.5};
  CHECK(rmse(shifted, a) == 0.5);
  CHECK(rmse(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0}) == 1.0);
  CHECK_THROWS_AS(rmse(a, std::vector<double>{1.0}), InvalidInput);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), InvalidInput);
}

TEST_CASE("rmse is scale-homogeneous and translation-detecting") {
  SplitRng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(7), y(7);
    for (int i = 0; i < 7; ++i) {
      x[static_cast<std::size_t>(i)] = rng.next_gaussian();
      y[static_cast<std::size_t>(i)] = rng.next_gaussian();
    }
    const double a = 3.0 * rng.next_gaussian();
    const double c = rng.next_gaussian();
    std::vector<double> xs(7), ys(7);
    for (int i = 0; i < 7; ++i) {
      xs[static_cast<std::size_t>(i)] = a * x[static_cast<std::size_t>(i)] + c;
      ys[static_cast<std::size_t>(i)] = a * y[static_cast<std::size_t>(i)] + c;
    }
    CHECK(std::abs(rmse(xs, ys) - std::abs(a) * rmse(x, y)) <= 1e-12);
  }
}

TEST_CASE("average ranks give ties their mean position") {
  const auto ranks = average_ranks(std::vector<double>{10.0, 20.0, 20.0, 30.0});
  REQUIRE(ranks.size() == 4);
  CHECK(ranks[0] == 1.0);
  CHECK(ranks[1] == 2.5);
  CHECK(ranks[2] == 2.5);
  CHECK(ranks[3] == 4.0);
}

TEST_CASE("rank correlation unit values") {
  const std::vector<double> up{0.1, 0.4, 0.9};
  const std::vector<double> also_up{2.0, 30.0, 31.0};
  CHECK(spearman(up, also_up) == 1.0);
  const std::vector<double> down{5.0, 4.0, 3.0};
  CHECK(spearman(up, down) == -1.0);
  const std::vector<double> tied{1.0, 1.0, 2.0};
  const std::vector<double> strict{1.0, 2.0, 3.0};
  CHECK(std::abs(spearman(tied, strict) - 0.8660254037844386) <= 1e-15);
  CHECK_THROWS_AS(spearman(std::vector<double>{1.0, 1.0}, strict), UndefinedCorrelation);
  CHECK_THROWS_AS(spearman(std::vector<double>{1.0}, std::vector<double>{2.0}), InvalidInput);
}

TEST_CASE("rank correlation ignores strictly increasing transforms") {
  SplitRng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(9), y(9);
    for (int i = 0; i < 9; ++i) {
      x[static_cast<std::size_t>(i)] = rng.next_gaussian();
      y[static_cast<std::size_t>(i)] = rng.next_gaussian();
    }
    std::vector<double> warped(9);
    for (int i = 0; i < 9; ++i) {
      warped[static_cast<std::size_t>(i)] = std::exp(x[static_cast<std::size_t>(i)]);
    }
    CHECK(spearman(x, y) == spearman(warped, y));
  }
}

TEST_CASE("concordance correlation unit values") {
  const std::vector<double> x{1.0, 2.0, 3.0};
  CHECK(ccc(x, x) == 1.0);
  const std::vector<double> shifted{1.5, 2.5, 3.5};
  // 2 sigma^2 / (2 sigma^2 + c^2) with sigma^2 = 2/3, c = 0.5: 16/19.
  CHECK(std::abs(ccc(x, shifted) - 0.8421052631578947) <= 1e-15);
  const std::vector<double> mirrored{3.0, 2.0, 1.0};
  CHECK(ccc(x, mirrored) == -1.0);
  CHECK_THROWS_AS(ccc(std::vector<double>{2.0, 2.0}, std::vector<double>{3.0, 3.0}),
                  UndefinedCorrelation);
  CHECK(ccc(std::vector<double>{2.0, 2.0, 2.0}, x) == 0.0);
}

TEST_CASE("logistic calibration on separable and uninformative data") {
  const std::vector<double> scores{-2.0, -1.0, 1.0, 2.0};
  const std::vector<int> labels{0, 0, 1, 1};
  const CalibrationModel model = fit_logistic(scores, labels, 1e-4);
  CHECK(std::isfinite(model.slope));
  CHECK(model.slope > 0.0);
  std::vector<double> probs;
  for (const double s : scores) probs.push_back(model.predict(s));
  const DetectionMetrics dm = detection_metrics(probs, labels);
  REQUIRE(dm.auroc.has_value());
  CHECK(*dm.auroc == 1.0);

  // Labels balanced at every score value: the regularized MLE is flat.
  const std::vector<double> flat_scores{-1.0, -1.0, 1.0, 1.0};
  const std::vector<int> flat_labels{0, 1, 0, 1};
  const CalibrationModel flat = fit_logistic(flat_scores, flat_labels, 1e-4);
  CHECK(std::abs(flat.slope) <= 0.01);
  for (const double s : flat_scores) CHECK(std::abs(flat.predict(s) - 0.5) <= 0.01);

  const CalibrationModel again = fit_logistic(scores, labels, 1e-4);
  CHECK(again.slope == model.slope);
  CHECK(again.intercept == model.intercept);

  CHECK_THROWS_AS(fit_logistic(scores, std::vector<int>{1, 1, 1, 1}, 1e-4), InvalidInput);
  CHECK_THROWS_AS(fit_logistic(scores, std::vector<int>{0, 1}, 1e-4), InvalidInput);
}

TEST_CASE("detection metrics unit values") {
  const std::vector<int> labels{0, 0, 1, 1};
  const std::vector<double> perfect{0.1, 0.2, 0.8, 0.9};
  const DetectionMetrics good = detection_metrics(perfect, labels);
  REQUIRE(good.auroc.has_value());
  CHECK(*good.auroc == 1.0);

  const std::vector<double> inverted{0.9, 0.8, 0.2, 0.1};
  const DetectionMetrics bad = detection_metrics(inverted, labels);
  REQUIRE(bad.auroc.has_value());
  CHECK(*bad.auroc == 0.0);

  const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
  const DetectionMetrics flat = detection_metrics(half, labels);
  CHECK(flat.brier == 0.25);
  CHECK(flat.ece == 0.0);
  REQUIRE(flat.auroc.has_value());
  CHECK(*flat.auroc == 0.5);

  const DetectionMetrics tied =
      detection_metrics(std::vector<double>{0.7, 0.7}, std::vector<int>{0, 1});
  REQUIRE(tied.auroc.has_value());
  CHECK(*tied.auroc == 0.5);

  const DetectionMetrics one_class =
      detection_metrics(std::vector<double>{0.3, 0.6}, std::vector<int>{1, 1});
  CHECK(!one_class.auroc.has_value());
  CHECK(one_class.brier == doctest::Approx((0.49 + 0.16) / 2.0).epsilon(1e-12));
}

TEST_CASE("ranking metric ignores strictly increasing transforms of probabilities") {
  SplitRng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs(12);
    std::vector<int> labels(12);
    for (int i = 0; i < 12; ++i) {
      probs[static_cast<std::size_t>(i)] = rng.next_double();
      labels[static_cast<std::size_t>(i)] = i % 2;
    }
    std::vector<double> squeezed(12);
    for (int i = 0; i < 12; ++i) {
      squeezed[static_cast<std::size_t>(i)] = 0.5 * probs[static_cast<std::size_t>(i)] + 0.25;
    }
    const auto a = detection_metrics(probs, labels);
    const auto b = detection_metrics(squeezed, labels);
    REQUIRE(a.auroc.has_value());
    REQUIRE(b.auroc.has_value());
    CHECK(*a.auroc == *b.auroc);
  }
}

TEST_CASE("fitted logistic never loses to the best constant predictor") {
  SplitRng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(30);
    std::vector<int> labels(30);
    int positives = 0;
    for (int i = 0; i < 30; ++i) {
      scores[static_cast<std::size_t>(i)] = rng.next_gaussian();
      labels[static_cast<std::size_t>(i)] =
          (scores[static_cast<std::size_t>(i)] + 0.8 * rng.next_gaussian() > 0.0) ? 1 : 0;
      positives += labels[static_cast<std::size_t>(i)];
    }
    if (positives == 0 || positives == 30) continue;
    const CalibrationModel model = fit_logistic(scores, labels, 1e-6);
    std::vector<double> fitted, constant;
    const double base_rate = static_cast<double>(positives) / 30.0;
    for (int i = 0; i < 30; ++i) {
      fitted.push_back(model.predict(scores[static_cast<std::size_t>(i)]));
      constant.push_back(base_rate);
    }
    const double fitted_brier = detection_metrics(fitted, labels).brier;
    const double constant_brier = detection_metrics(constant, labels).brier;
    CHECK(fitted_brier <= constant_brier + 1e-9);
  }
}

TEST_CASE("relative compute cost reproduces the published ratios") {
  const CostEntry baseline{"target-ensemble", {{8.0, 3}}};
  CHECK(baseline.total() == 24.0);
  CHECK(relative_flops(baseline, baseline) == 1.00);
  const CostEntry drafts_plus_target{"drafts-plus-target", {{1.0, 6}, {8.0, 1}}};
  CHECK(drafts_plus_target.total() == 14.0);
  CHECK(relative_flops(drafts_plus_target, baseline) == 0.58);
  const CostEntry medium_drafts{"medium-drafts-plus-target", {{3.0, 6}, {8.0, 1}}};
  CHECK(relative_flops(medium_drafts, baseline) == 1.08);
  CHECK_THROWS_AS(relative_flops(baseline, CostEntry{"empty", {}}), InvalidInput);
}

namespace {

ExperimentReport make_report() {
  ExperimentReport report;
  report.config_fingerprint = "deadbeefdeadbeef";
  report.settings.fidelity_population = "token";
  report.settings.aggregation = "mean";
  report.settings.ece_bins = 10;
  report.settings.cost_mode = "drafts-plus-target";
  report.settings.runs = 5;
  for (int i = 0; i < 5; ++i) {
    RunMetrics run;
    run.run_id = i;
    run.rmse = 0.1 * (i + 1);
    run.spearman = 0.9 - 0.05 * i;
    run.ccc = 0.8 - 0.1 * i;
    run.auroc = (i == 3) ? std::nullopt : std::optional<double>(0.9);
    run.ece = 0.05;
    run.brier = 0.2;
    run.rel_flops = 0.58;
    report.per_run.push_back(run);
  }
  finalize_report(report);
  return report;
}

}  // namespace

TEST_CASE("report summaries are consistent with the per-run rows") {
  const ExperimentReport report = make_report();
  CHECK(std::abs(report.rmse.mean - 0.3) <= 1e-12);
  CHECK(std::abs(report.rmse.stddev - std::sqrt(0.02)) <= 1e-12);
  CHECK(std::abs(report.brier.mean - 0.2) <= 1e-15);
  CHECK(report.brier.stddev == 0.0);
  REQUIRE(report.auroc.has_value());
  CHECK(std::abs(report.auroc->mean - 0.9) <= 1e-15);
  CHECK(report.successful_runs().size() == 5);
}

TEST_CASE("failed runs are excluded from summaries but kept in the rows") {
  ExperimentReport report = make_report();
  report.per_run[4].failed = true;
  report.per_run[4].diagnostic = "training diverged";
  report.per_run[4].rmse = 1e9;
  finalize_report(report);
  CHECK(report.successful_runs().size() == 4);
  CHECK(std::abs(report.rmse.mean - 0.25) <= 1e-12);
}

TEST_CASE("report serialization round-trips byte for byte") {
  const ExperimentReport report = make_report();
  const std::string text = report_to_json(report);
  const ExperimentReport back = report_from_json(text);
  CHECK(report_to_json(back) == text);
  CHECK(back.config_fingerprint == report.config_fingerprint);
  REQUIRE(back.per_run.size() == 5);
  CHECK(back.per_run[2].rmse == report.per_run[2].rmse);
  CHECK(!back.per_run[3].auroc.has_value());
}

TEST_CASE("flat table has the fixed column order and one row per run") {
  const ExperimentReport report = make_report();
  const std::string csv = report_to_csv(report);
  CHECK(csv.rfind("run_id,rmse,spearman,ccc,auroc,ece,brier,rel_flops\n", 0) == 0);
  int lines = 0;
  for (const char c : csv) {
    if (c == '\n') ++lines;
  }
  CHECK(lines == 6);
}

TEST_CASE("scatter chart draws one point per successful run") {
  ExperimentReport report = make_report();
  report.per_run[1].failed = true;
  report.per_run[1].diagnostic = "injected";
  finalize_report(report);
  const std::string svg = report_to_scatter_svg(report);
  CHECK(svg.find("<svg") != std::string::npos);
  std::size_t points = 0;
  for (std::size_t pos = svg.find("<circle"); pos != std::string::npos;
       pos = svg.find("<circle", pos + 1)) {
    ++points;
  }
  CHECK(points == 4);
}

TEST_CASE("report emission writes the requested artifact") {
  const ExperimentReport report = make_report();
  const auto dir = std::filesystem::temp_directory_path() / "draftuq_report_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto written = emit_report(report, ReportFormat::Document, dir.string());
  REQUIRE(written.size() == 1);
  CHECK(load_text_file(written[0]) == report_to_json(report));
  CHECK(report_format_from_string("table") == ReportFormat::Table);
  CHECK(report_format_from_string("document") == ReportFormat::Document);
  CHECK(report_format_from_string("scatter-svg") == ReportFormat::ScatterSvg);
  CHECK_THROWS_AS(report_format_from_string("pdf"), InvalidInput);
  std::filesystem::remove_all(dir);
}
