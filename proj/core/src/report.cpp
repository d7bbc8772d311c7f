#include "draftuq/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <span>
#include <sstream>

#include "draftuq/datagen.hpp"
#include "draftuq/errors.hpp"
#include "json.hpp"

namespace draftuq {

namespace {

using ordered_json = nlohmann::ordered_json;

// Shortest decimal text that round-trips the double (the JSON serializer's
// Grisu path); used for CSV cells too so both formats agree exactly.
std::string num(double x) { return ordered_json(x).dump(); }

SummaryStat stat_over(std::span<const double> xs) {
  SummaryStat s;
  if (xs.empty()) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    s.stddev = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

ordered_json stat_json(const SummaryStat& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.stddev;
  return j;
}

SummaryStat stat_from_json(const ordered_json& j) {
  SummaryStat s;
  s.mean = j.at("mean").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("mean").get<double>();
  s.stddev = j.at("std").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("std").get<double>();
  return s;
}

}  // namespace

std::vector<const RunMetrics*> ExperimentReport::successful_runs() const {
  std::vector<const RunMetrics*> out;
  for (const auto& r : per_run) {
    if (!r.failed) out.push_back(&r);
  }
  return out;
}

void finalize_report(ExperimentReport& report) {
  if (report.per_run.empty()) throw InvalidInput("report needs at least one run");
  const auto ok = report.successful_runs();
  std::vector<double> rmse_v;
  std::vector<double> spearman_v;
  std::vector<double> ccc_v;
  std::vector<double> auroc_v;
  std::vector<double> ece_v;
  std::vector<double> brier_v;
  for (const auto* r : ok) {
    rmse_v.push_back(r->rmse);
    spearman_v.push_back(r->spearman);
    ccc_v.push_back(r->ccc);
    if (r->auroc.has_value()) auroc_v.push_back(*r->auroc);
    ece_v.push_back(r->ece);
    brier_v.push_back(r->brier);
  }
  report.rmse = stat_over(rmse_v);
  report.spearman = stat_over(spearman_v);
  report.ccc = stat_over(ccc_v);
  report.auroc = auroc_v.empty() ? std::nullopt : std::optional<SummaryStat>(stat_over(auroc_v));
  report.ece = stat_over(ece_v);
  report.brier = stat_over(brier_v);
  report.detection_auroc =
      auroc_v.empty() ? std::nullopt : std::optional<double>(stat_over(auroc_v).mean);
  report.detection_ece = stat_over(ece_v).mean;
  report.detection_brier = stat_over(brier_v).mean;
  report.rel_flops = ok.empty() ? 0.0 : ok.front()->rel_flops;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "table") return ReportFormat::Table;
  if (s == "document") return ReportFormat::Document;
  if (s == "scatter-svg") return ReportFormat::ScatterSvg;
  throw InvalidInput("unknown report format: " + s);
}

std::string report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["format_version"] = 1;
  j["config_fingerprint"] = report.config_fingerprint;
  ordered_json settings;
  settings["fidelity_population"] = report.settings.fidelity_population;
  settings["aggregation"] = report.settings.aggregation;
  settings["ece_bins"] = report.settings.ece_bins;
  settings["cost_mode"] = report.settings.cost_mode;
  settings["runs"] = report.settings.runs;
  j["settings"] = settings;

  ordered_json runs = ordered_json::array();
  for (const auto& r : report.per_run) {
    ordered_json rj;
    rj["run_id"] = r.run_id;
    rj["failed"] = r.failed;
    rj["diagnostic"] = r.diagnostic;
    if (r.failed) {
      rj["rmse"] = nullptr;
      rj["spearman"] = nullptr;
      rj["ccc"] = nullptr;
      rj["auroc"] = nullptr;
      rj["ece"] = nullptr;
      rj["brier"] = nullptr;
      rj["rel_flops"] = nullptr;
    } else {
      rj["rmse"] = r.rmse;
      rj["spearman"] = r.spearman;
      rj["ccc"] = r.ccc;
      if (r.auroc.has_value()) {
        rj["auroc"] = *r.auroc;
      } else {
        rj["auroc"] = nullptr;
      }
      rj["ece"] = r.ece;
      rj["brier"] = r.brier;
      rj["rel_flops"] = r.rel_flops;
    }
    rj["flagged_infinite"] = r.flagged_infinite;
    runs.push_back(rj);
  }
  j["per_run"] = runs;

  ordered_json summary;
  summary["rmse"] = stat_json(report.rmse);
  summary["spearman"] = stat_json(report.spearman);
  summary["ccc"] = stat_json(report.ccc);
  summary["auroc"] = report.auroc.has_value() ? stat_json(*report.auroc) : ordered_json(nullptr);
  summary["ece"] = stat_json(report.ece);
  summary["brier"] = stat_json(report.brier);
  j["summary"] = summary;

  ordered_json detection;
  if (report.detection_auroc.has_value()) {
    detection["auroc"] = *report.detection_auroc;
  } else {
    detection["auroc"] = nullptr;
  }
  detection["ece"] = report.detection_ece;
  detection["brier"] = report.detection_brier;
  j["detection"] = detection;

  ordered_json cost;
  cost["rel_flops"] = report.rel_flops;
  j["cost"] = cost;
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed report: ") + e.what());
  }
  ExperimentReport report;
  try {
    report.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    const auto& settings = j.at("settings");
    report.settings.fidelity_population = settings.at("fidelity_population").get<std::string>();
    report.settings.aggregation = settings.at("aggregation").get<std::string>();
    report.settings.ece_bins = settings.at("ece_bins").get<int>();
    report.settings.cost_mode = settings.at("cost_mode").get<std::string>();
    report.settings.runs = settings.at("runs").get<int>();
    for (const auto& rj : j.at("per_run")) {
      RunMetrics r;
      r.run_id = rj.at("run_id").get<int>();
      r.failed = rj.at("failed").get<bool>();
      r.diagnostic = rj.at("diagnostic").get<std::string>();
      if (!r.failed) {
        r.rmse = rj.at("rmse").get<double>();
        r.spearman = rj.at("spearman").get<double>();
        r.ccc = rj.at("ccc").get<double>();
        if (!rj.at("auroc").is_null()) r.auroc = rj.at("auroc").get<double>();
        r.ece = rj.at("ece").get<double>();
        r.brier = rj.at("brier").get<double>();
        r.rel_flops = rj.at("rel_flops").get<double>();
      }
      r.flagged_infinite = rj.at("flagged_infinite").get<int>();
      report.per_run.push_back(std::move(r));
    }
    const auto& summary = j.at("summary");
    report.rmse = stat_from_json(summary.at("rmse"));
    report.spearman = stat_from_json(summary.at("spearman"));
    report.ccc = stat_from_json(summary.at("ccc"));
    if (!summary.at("auroc").is_null()) report.auroc = stat_from_json(summary.at("auroc"));
    report.ece = stat_from_json(summary.at("ece"));
    report.brier = stat_from_json(summary.at("brier"));
    const auto& detection = j.at("detection");
    if (!detection.at("auroc").is_null()) report.detection_auroc = detection.at("auroc").get<double>();
    report.detection_ece = detection.at("ece").get<double>();
    report.detection_brier = detection.at("brier").get<double>();
    report.rel_flops = j.at("cost").at("rel_flops").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "run_id,rmse,spearman,ccc,auroc,ece,brier,rel_flops\n";
  for (const auto& r : report.per_run) {
    out << r.run_id << ",";
    if (r.failed) {
      out << ",,,,,,\n";
      continue;
    }
    out << num(r.rmse) << "," << num(r.spearman) << "," << num(r.ccc) << ",";
    if (r.auroc.has_value()) out << num(*r.auroc);
    out << "," << num(r.ece) << "," << num(r.brier) << "," << num(r.rel_flops) << "\n";
  }
  return out.str();
}

std::string report_to_scatter_svg(const ExperimentReport& report) {
  const auto ok = report.successful_runs();
  const double width = 480.0;
  const double height = 360.0;
  const double margin = 56.0;

  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 1.0;
  for (const auto* r : ok) {
    x_max = std::max(x_max, r->rmse);
    y_min = std::min(y_min, r->spearman);
  }
  x_max = x_max > 0.0 ? x_max * 1.1 : 1.0;

  const auto sx = [&](double v) { return margin + (v / x_max) * (width - 2.0 * margin); };
  const auto sy = [&](double v) {
    return height - margin - ((v - y_min) / (y_max - y_min)) * (height - 2.0 * margin);
  };
  const auto coord = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  const auto tick = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return std::string(buf);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\" "
         "viewBox=\"0 0 480 360\">\n";
  out << "  <rect width=\"480\" height=\"360\" fill=\"white\"/>\n";
  out << "  <line x1=\"" << coord(margin) << "\" y1=\"" << coord(height - margin) << "\" x2=\""
      << coord(width - margin) << "\" y2=\"" << coord(height - margin)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "  <line x1=\"" << coord(margin) << "\" y1=\"" << coord(margin) << "\" x2=\""
      << coord(margin) << "\" y2=\"" << coord(height - margin)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "  <text x=\"" << coord(width / 2.0) << "\" y=\"" << coord(height - 12.0)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">RMSE</text>\n";
  out << "  <text x=\"16\" y=\"" << coord(height / 2.0)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" transform=\"rotate(-90 16 "
      << coord(height / 2.0) << ")\">Spearman</text>\n";
  out << "  <text x=\"" << coord(margin) << "\" y=\"" << coord(height - margin + 18.0)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
  out << "  <text x=\"" << coord(width - margin) << "\" y=\"" << coord(height - margin + 18.0)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick(x_max)
      << "</text>\n";
  out << "  <text x=\"" << coord(margin - 8.0) << "\" y=\"" << coord(height - margin + 4.0)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick(y_min)
      << "</text>\n";
  out << "  <text x=\"" << coord(margin - 8.0) << "\" y=\"" << coord(margin + 4.0)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick(y_max)
      << "</text>\n";
  for (const auto* r : ok) {
    const double cx = sx(r->rmse);
    const double cy = sy(r->spearman);
    out << "  <circle cx=\"" << coord(cx) << "\" cy=\"" << coord(cy)
        << "\" r=\"4\" fill=\"steelblue\"/>\n";
    out << "  <text x=\"" << coord(cx + 7.0) << "\" y=\"" << coord(cy + 4.0)
        << "\" font-family=\"sans-serif\" font-size=\"10\">run " << r->run_id << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<std::string> emit_report(const ExperimentReport& report, ReportFormat format,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  const auto write = [&](const std::string& name, const std::string& text) {
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    save_text_file(text, path);
    paths.push_back(path);
  };
  switch (format) {
    case ReportFormat::Document: write("report.json", report_to_json(report)); break;
    case ReportFormat::Table: write("report.csv", report_to_csv(report)); break;
    case ReportFormat::ScatterSvg: write("scatter.svg", report_to_scatter_svg(report)); break;
  }
  return paths;
}

}  // namespace draftuq
