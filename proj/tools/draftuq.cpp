// draftuq: command-line front end for the draft-ensemble epistemic-uncertainty
// toolkit. Every stage of the pipeline is independently invokable; the `run`
// subcommand executes the whole experiment.
//
// Exit codes: 0 success, 1 invalid input, 2 theory-check failure,
// 3 training failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "draftuq/checkpoint.hpp"
#include "draftuq/errors.hpp"
#include "draftuq/experiment.hpp"
#include "draftuq/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 1;
constexpr int kExitTheoryFailure = 2;
constexpr int kExitTrainingFailure = 3;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<std::string> cost_mode;
};

draftuq::ExperimentConfig resolve_config(const CommonOptions& opts) {
  draftuq::ExperimentConfig cfg =
      opts.config_path.empty() ? draftuq::ExperimentConfig{} : draftuq::load_config(opts.config_path);
  if (opts.seed) cfg.master_seed = *opts.seed;
  if (opts.runs) cfg.runs = *opts.runs;
  if (opts.cost_mode) cfg.cost_mode = *opts.cost_mode;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_runs = false,
                bool with_cost_mode = false) {
  cmd->add_option("--config", opts.config_path, "Experiment config document (defaults used if omitted)");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--seed", opts.seed, "Override the master seed");
  if (with_runs) cmd->add_option("--runs", opts.runs, "Override the number of runs");
  if (with_cost_mode) {
    cmd->add_option("--cost-mode", opts.cost_mode,
                    "Cost accounting: drafts-only | drafts-plus-target");
  }
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void save_model(const draftuq::AutoregressiveModel& model, draftuq::Provenance provenance,
                std::vector<std::uint64_t> lineage, const std::string& path) {
  draftuq::save_checkpoint(draftuq::Checkpoint{model, provenance, std::move(lineage)}, path);
}

int require_run_success(const draftuq::RunArtifacts& artifacts) {
  if (artifacts.metrics.failed) {
    std::fprintf(stderr, "run failed: %s\n", artifacts.metrics.diagnostic.c_str());
    return kExitTrainingFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Draft-ensemble epistemic-uncertainty toolkit"};
  app.require_subcommand(1);

  // verify-theory
  int trials = 1000;
  double tolerance = 1e-10;
  std::uint64_t theory_seed = 1;
  bool self_test_corrupt = false;
  CLI::App* verify_cmd =
      app.add_subcommand("verify-theory", "Check the decomposition identities numerically");
  verify_cmd->add_option("--trials", trials, "Randomized instances to draw");
  verify_cmd->add_option("--tolerance", tolerance, "Max acceptable absolute residual");
  verify_cmd->add_option("--seed", theory_seed, "Seed for the randomized instances");
  verify_cmd->add_flag("--self-test-corrupt", self_test_corrupt,
                       "Deliberately corrupt one identity to prove the check can fail");

  // Stage subcommands sharing the config/out/seed options.
  CommonOptions gen_opts;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate the task dataset and teacher corpus");
  add_common(gen_cmd, gen_opts);

  CommonOptions drafts_opts;
  CLI::App* drafts_cmd =
      app.add_subcommand("train-drafts", "Train the draft family and save checkpoints");
  add_common(drafts_cmd, drafts_opts);

  CommonOptions pmix_opts;
  CLI::App* pmix_cmd =
      app.add_subcommand("train-pmix", "Distill the proxy of the target family mean");
  add_common(pmix_cmd, pmix_opts);

  CommonOptions estimate_opts;
  CLI::App* estimate_cmd =
      app.add_subcommand("estimate", "Score generated sequences and write token EU traces");
  add_common(estimate_cmd, estimate_opts);

  CommonOptions evaluate_opts;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Run one seed end to end and report its metrics");
  add_common(evaluate_cmd, evaluate_opts, /*with_runs=*/false, /*with_cost_mode=*/true);

  CommonOptions run_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "Execute the full multi-run experiment");
  add_common(run_cmd, run_opts, /*with_runs=*/true, /*with_cost_mode=*/true);

  // report: re-emit an existing report document in another format.
  std::string report_in;
  std::string report_out = "out";
  std::string report_format = "document";
  CLI::App* report_cmd = app.add_subcommand("report", "Re-emit a report document in another format");
  report_cmd->add_option("input", report_in, "Path to an existing report document")->required();
  report_cmd->add_option("--out", report_out, "Output directory");
  report_cmd->add_option("--format", report_format, "table | document | scatter-svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    if (verify_cmd->parsed()) {
      const draftuq::TheoryCheckResult result =
          draftuq::verify_theory(trials, theory_seed, self_test_corrupt);
      std::fputs(draftuq::theory_report_text(result, tolerance).c_str(), stdout);
      return result.passed(tolerance) ? kExitOk : kExitTheoryFailure;
    }

    if (gen_cmd->parsed()) {
      const draftuq::ExperimentConfig cfg = resolve_config(gen_opts);
      const draftuq::TaskSetup setup = draftuq::build_task_setup(cfg);
      const draftuq::RunModels models = draftuq::build_run_models(cfg, setup, 0);
      std::filesystem::create_directories(gen_opts.out_dir);
      draftuq::save_text_file(draftuq::dataset_to_jsonl(setup.data),
                              join_path(gen_opts.out_dir, "dataset.jsonl"));
      draftuq::save_text_file(draftuq::corpus_to_jsonl(models.corpus),
                              join_path(gen_opts.out_dir, "corpus.jsonl"));
      std::printf("wrote %d queries and %zu corpus records to %s\n", setup.data.size(),
                  models.corpus.records.size(), gen_opts.out_dir.c_str());
      return kExitOk;
    }

    if (drafts_cmd->parsed()) {
      const draftuq::ExperimentConfig cfg = resolve_config(drafts_opts);
      const draftuq::TaskSetup setup = draftuq::build_task_setup(cfg);
      const draftuq::RunModels models = draftuq::build_run_models(cfg, setup, 0);
      const draftuq::RunDrafts drafts = draftuq::build_run_drafts(cfg, setup, models, 0);
      std::filesystem::create_directories(drafts_opts.out_dir);
      save_model(models.target, draftuq::Provenance::TargetFamily, {cfg.master_seed},
                 join_path(drafts_opts.out_dir, "target.json"));
      for (int i = 0; i < drafts.drafts.size(); ++i) {
        save_model(drafts.drafts.members[static_cast<std::size_t>(i)],
                   drafts.drafts.provenance, {cfg.master_seed, static_cast<std::uint64_t>(i)},
                   join_path(drafts_opts.out_dir, "draft_member" + std::to_string(i) + ".json"));
      }
      for (const auto& log : drafts.logs) {
        draftuq::save_text_file(
            draftuq::train_log_to_jsonl(log),
            join_path(drafts_opts.out_dir,
                      "train_log_member" + std::to_string(log.member_index) + ".jsonl"));
      }
      std::printf("trained %d draft members into %s\n", drafts.drafts.size(),
                  drafts_opts.out_dir.c_str());
      return kExitOk;
    }

    if (pmix_cmd->parsed()) {
      const draftuq::ExperimentConfig cfg = resolve_config(pmix_opts);
      const draftuq::TaskSetup setup = draftuq::build_task_setup(cfg);
      const draftuq::RunModels models = draftuq::build_run_models(cfg, setup, 0);
      const draftuq::AutoregressiveModel pmix = draftuq::build_run_pmix(cfg, setup, models, 0);
      std::filesystem::create_directories(pmix_opts.out_dir);
      save_model(pmix, draftuq::Provenance::TargetFamily, {cfg.master_seed},
                 join_path(pmix_opts.out_dir, "pmix.json"));
      std::printf("distilled proxy saved to %s\n",
                  join_path(pmix_opts.out_dir, "pmix.json").c_str());
      return kExitOk;
    }

    if (estimate_cmd->parsed()) {
      const draftuq::ExperimentConfig cfg = resolve_config(estimate_opts);
      const draftuq::TaskSetup setup = draftuq::build_task_setup(cfg);
      const draftuq::RunArtifacts artifacts = draftuq::execute_run(cfg, setup, 0);
      if (const int code = require_run_success(artifacts); code != kExitOk) return code;
      std::filesystem::create_directories(estimate_opts.out_dir);
      draftuq::save_text_file(draftuq::traces_to_jsonl(artifacts.traces),
                              join_path(estimate_opts.out_dir, "eu_traces.jsonl"));
      std::printf("wrote %zu traces to %s\n", artifacts.traces.size(),
                  estimate_opts.out_dir.c_str());
      return kExitOk;
    }

    if (evaluate_cmd->parsed()) {
      draftuq::ExperimentConfig cfg = resolve_config(evaluate_opts);
      cfg.runs = 1;
      const draftuq::ExperimentReport report = draftuq::run_experiment(cfg, evaluate_opts.out_dir);
      if (report.successful_runs().empty()) {
        std::fprintf(stderr, "run failed: %s\n", report.per_run.front().diagnostic.c_str());
        return kExitTrainingFailure;
      }
      const auto& m = report.per_run.front();
      std::printf("rmse %.6f  spearman %.6f  ccc %.6f  ece %.6f  brier %.6f  rel_flops %.2f\n",
                  m.rmse, m.spearman, m.ccc, m.ece, m.brier, m.rel_flops);
      return kExitOk;
    }

    if (run_cmd->parsed()) {
      const draftuq::ExperimentConfig cfg = resolve_config(run_opts);
      const draftuq::ExperimentReport report = draftuq::run_experiment(cfg, run_opts.out_dir);
      std::printf("completed %zu/%d runs; report written to %s\n",
                  report.successful_runs().size(), cfg.runs, run_opts.out_dir.c_str());
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      const draftuq::ExperimentReport report =
          draftuq::report_from_json(draftuq::load_text_file(report_in));
      const draftuq::ReportFormat fmt = draftuq::report_format_from_string(report_format);
      const auto paths = draftuq::emit_report(report, fmt, report_out);
      for (const auto& p : paths) std::printf("wrote %s\n", p.c_str());
      return kExitOk;
    }
  } catch (const draftuq::TrainingFailure& e) {
    std::fprintf(stderr, "training failure: %s\n", e.what());
    return kExitTrainingFailure;
  } catch (const draftuq::InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalidInput;
  }
  return kExitInvalidInput;
}
