#include "draftuq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "draftuq/errors.hpp"

namespace draftuq {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len,
                const char* what) {
  if (x.size() != y.size()) throw InvalidInput(std::string(what) + ": length mismatch");
  if (x.size() < min_len) {
    throw InvalidInput(std::string(what) + ": needs at least " + std::to_string(min_len) + " pairs");
  }
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// x >= 0 only; stable log(1 + exp(-x)) companion is handled by callers.
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_labels(std::span<const int> labels, const char* what) {
  bool has0 = false;
  bool has1 = false;
  for (int y : labels) {
    if (y == 0) {
      has0 = true;
    } else if (y == 1) {
      has1 = true;
    } else {
      throw InvalidInput(std::string(what) + ": labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) throw InvalidInput(std::string(what) + ": both classes must be present");
}

}  // namespace

double rmse(std::span<const double> est, std::span<const double> gt) {
  check_pair(est, gt, 1, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double d = est[i] - gt[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(est.size()));
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y, const char* what) {
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation(std::string(what) + ": an argument has zero variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "spearman");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry, "spearman");
}

double ccc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2, "ccc");
  const double n = static_cast<double>(x.size());
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 && syy == 0.0) {
    throw UndefinedCorrelation("ccc: both arguments have zero variance");
  }
  const double dm = mx - my;
  return (2.0 * sxy / n) / (sxx / n + syy / n + dm * dm);
}

double CalibrationModel::predict(double score) const {
  return sigmoid(slope * score + intercept);
}

CalibrationModel fit_logistic(std::span<const double> scores, std::span<const int> labels,
                              double regularization, const LogisticFitConfig& config) {
  if (scores.size() != labels.size()) throw InvalidInput("fit_logistic: length mismatch");
  if (scores.empty()) throw InvalidInput("fit_logistic: empty input");
  if (!(regularization >= 0.0)) throw InvalidInput("fit_logistic: regularization must be >= 0");
  check_labels(labels, "fit_logistic");

  const auto objective = [&](double w, double b) {
    double f = regularization * (w * w + b * b);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = w * scores[i] + b;
      // -[y ln sigma(z) + (1-y) ln(1 - sigma(z))] in overflow-safe form.
      f += labels[i] == 1 ? softplus(-z) : softplus(z);
    }
    return f;
  };

  const auto grad_norm = [&](double w, double b) {
    double gw = 2.0 * regularization * w;
    double gb = 2.0 * regularization * b;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = sigmoid(w * scores[i] + b);
      gw += (p - labels[i]) * scores[i];
      gb += (p - labels[i]);
    }
    return std::sqrt(gw * gw + gb * gb);
  };

  double w = 0.0;
  double b = 0.0;
  double f = objective(w, b);
  for (int iter = 0; iter < config.max_iter; ++iter) {
    double gw = 2.0 * regularization * w;
    double gb = 2.0 * regularization * b;
    double hww = 2.0 * regularization;
    double hwb = 0.0;
    double hbb = 2.0 * regularization;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = sigmoid(w * scores[i] + b);
      const double r = p - static_cast<double>(labels[i]);
      gw += r * scores[i];
      gb += r;
      const double c = p * (1.0 - p);
      hww += c * scores[i] * scores[i];
      hwb += c * scores[i];
      hbb += c;
    }
    if (std::sqrt(gw * gw + gb * gb) <= config.grad_tol) {
      return CalibrationModel{w, b, regularization};
    }

    // Newton direction with a ridge fallback when the Hessian is near singular.
    double det = hww * hbb - hwb * hwb;
    if (!(det > 1e-12)) {
      hww += 1e-8;
      hbb += 1e-8;
      det = hww * hbb - hwb * hwb;
    }
    const double dw = (hbb * gw - hwb * gb) / det;
    const double db = (hww * gb - hwb * gw) / det;

    double step = 1.0;
    bool moved = false;
    for (int half = 0; half < 60; ++half) {
      const double fw = objective(w - step * dw, b - step * db);
      if (fw < f) {
        w -= step * dw;
        b -= step * db;
        f = fw;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // Near the optimum the objective improvement can underflow its own
      // floating-point noise while the Newton step still contracts the
      // gradient, so fall back to accepting on gradient-norm decrease.
      const double g_here = std::sqrt(gw * gw + gb * gb);
      step = 1.0;
      for (int half = 0; half < 60; ++half) {
        if (grad_norm(w - step * dw, b - step * db) < g_here) {
          w -= step * dw;
          b -= step * db;
          f = objective(w, b);
          moved = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!moved) break;
  }

  // Final convergence check after the iteration budget.
  if (grad_norm(w, b) > config.grad_tol) {
    throw InvalidInput("fit_logistic: did not reach the gradient tolerance");
  }
  return CalibrationModel{w, b, regularization};
}

DetectionMetrics detection_metrics(std::span<const double> probs, std::span<const int> labels,
                                   int n_bins) {
  if (probs.size() != labels.size()) throw InvalidInput("detection_metrics: length mismatch");
  if (probs.empty()) throw InvalidInput("detection_metrics: empty input");
  if (n_bins < 1) throw InvalidInput("detection_metrics: n_bins must be >= 1");
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("detection_metrics: probabilities must lie in [0, 1]");
  }
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidInput("detection_metrics: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = probs.size();
  const std::size_t n_neg = n - n_pos;

  DetectionMetrics out;
  if (n_pos > 0 && n_neg > 0) {
    const std::vector<double> ranks = average_ranks(probs);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == 1) rank_sum += ranks[i];
    }
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    out.auroc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  }

  std::vector<double> bin_conf(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> bin_acc(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<std::size_t> bin_count(static_cast<std::size_t>(n_bins), 0);
  double brier = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto bin = static_cast<std::size_t>(
        std::min<int>(n_bins - 1, static_cast<int>(probs[i] * n_bins)));
    bin_conf[bin] += probs[i];
    bin_acc[bin] += labels[i];
    bin_count[bin] += 1;
    const double d = probs[i] - labels[i];
    brier += d * d;
  }
  double ece = 0.0;
  for (std::size_t bin = 0; bin < static_cast<std::size_t>(n_bins); ++bin) {
    if (bin_count[bin] == 0) continue;
    const double cnt = static_cast<double>(bin_count[bin]);
    ece += (cnt / static_cast<double>(n)) * std::abs(bin_acc[bin] / cnt - bin_conf[bin] / cnt);
  }
  out.ece = ece;
  out.brier = brier / static_cast<double>(n);
  return out;
}

double CostEntry::total() const {
  if (passes.empty()) throw InvalidInput("cost entry needs at least one pass");
  double acc = 0.0;
  for (const auto& p : passes) {
    if (!(p.model_size_units > 0.0)) throw InvalidInput("cost pass size must be positive");
    if (p.count < 0) throw InvalidInput("cost pass count must be >= 0");
    acc += p.model_size_units * p.count;
  }
  return acc;
}

double relative_flops(const CostEntry& method, const CostEntry& baseline) {
  const double denom = baseline.total();
  if (!(denom > 0.0)) throw InvalidInput("baseline cost must be positive");
  const double ratio = method.total() / denom;
  return std::round(ratio * 100.0) / 100.0;
}

}  // namespace draftuq
