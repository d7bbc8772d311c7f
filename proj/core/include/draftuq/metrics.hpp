#pragma once

// Fidelity metrics (RMSE, Spearman, CCC), the hallucination-detection
// pipeline (logistic calibration, AUROC, ECE, Brier), and the relative-FLOPs
// cost model. All pure functions; correlation on a zero-variance argument
// raises UndefinedCorrelation.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace draftuq {

double rmse(std::span<const double> est, std::span<const double> gt);

// Pearson correlation of average-ranked values; ties get average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

// Lin's concordance correlation coefficient with population moments:
// 2 cov / (var_x + var_y + (mean_x - mean_y)^2).
double ccc(std::span<const double> x, std::span<const double> y);

// Average ranks in [1, n], ties averaged (exposed for oracle tests).
std::vector<double> average_ranks(std::span<const double> x);

struct CalibrationModel {
  double slope = 0.0;
  double intercept = 0.0;
  double regularization = 0.0;

  // P(label = 1 | score) through the fitted logistic function.
  double predict(double score) const;
};

struct LogisticFitConfig {
  int max_iter = 300;
  double grad_tol = 1e-8;
};

// L2-regularized logistic regression of binary labels on a scalar score,
// fitted by damped Newton iterations to gradient norm <= grad_tol.
// Deterministic given inputs; requires both classes present.
CalibrationModel fit_logistic(std::span<const double> scores, std::span<const int> labels,
                              double regularization, const LogisticFitConfig& config = {});

struct DetectionMetrics {
  std::optional<double> auroc;  // absent when only one class is present
  double ece = 0.0;
  double brier = 0.0;
};

// AUROC via the Mann-Whitney rank statistic (ties contribute 1/2); ECE with
// n_bins equal-width bins over [0, 1]; Brier = mean squared error.
DetectionMetrics detection_metrics(std::span<const double> probs, std::span<const int> labels,
                                   int n_bins = 10);

struct CostPass {
  double model_size_units = 1.0;
  int count = 1;
};

struct CostEntry {
  std::string label;
  std::vector<CostPass> passes;

  double total() const;
};

// Sum(size * count) ratio of method to baseline, rounded to 2 decimals.
double relative_flops(const CostEntry& method, const CostEntry& baseline);

}  // namespace draftuq
