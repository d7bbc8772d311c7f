#pragma once

// Experiment report assembly and deterministic emission: a JSON document, a
// flat CSV (fixed column order: run_id, rmse, spearman, ccc, auroc, ece,
// brier, rel_flops), and an RMSE-vs-Spearman scatter SVG with one point per
// successful run. Re-emission of a loaded report is byte-identical.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace draftuq {

struct RunMetrics {
  int run_id = 0;
  bool failed = false;
  std::string diagnostic;  // empty unless failed
  double rmse = 0.0;
  double spearman = 0.0;
  double ccc = 0.0;
  std::optional<double> auroc;  // absent when a run saw only one label class
  double ece = 0.0;
  double brier = 0.0;
  double rel_flops = 0.0;
  int flagged_infinite = 0;  // support-violation tokens excluded from aggregates
};

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation across runs
};

struct ReportSettings {
  std::string fidelity_population = "token";  // "token" | "sequence"
  std::string aggregation = "mean";
  int ece_bins = 10;
  std::string cost_mode = "drafts-plus-target";
  int runs = 0;
};

struct ExperimentReport {
  std::string config_fingerprint;
  ReportSettings settings;
  std::vector<RunMetrics> per_run;
  SummaryStat rmse;
  SummaryStat spearman;
  SummaryStat ccc;
  std::optional<SummaryStat> auroc;  // over runs where AUROC was defined
  SummaryStat ece;
  SummaryStat brier;
  std::optional<double> detection_auroc;  // means over successful runs
  double detection_ece = 0.0;
  double detection_brier = 0.0;
  double rel_flops = 0.0;

  std::vector<const RunMetrics*> successful_runs() const;
};

// Fills every summary field from per_run (successful runs only).
void finalize_report(ExperimentReport& report);

enum class ReportFormat { Table, Document, ScatterSvg };

ReportFormat report_format_from_string(const std::string& s);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
std::string report_to_csv(const ExperimentReport& report);
std::string report_to_scatter_svg(const ExperimentReport& report);

// Writes the chosen format into out_dir (report.json / report.csv /
// scatter.svg) and returns the paths written.
std::vector<std::string> emit_report(const ExperimentReport& report, ReportFormat format,
                                     const std::string& out_dir);

}  // namespace draftuq
