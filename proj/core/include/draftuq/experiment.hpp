#pragma once

// End-to-end experiment orchestration. A run builds the target and its
// perturbed families, generates the corpus, trains the draft family and the
// proxy, scores the target's own generations token by token, and produces
// fidelity + detection + cost metrics. The whole pipeline is a pure function
// of (config, master seed); runs may execute on a worker pool (environment
// variable DRAFTUQ_WORKERS) without changing a single output byte.

#include <cstdint>
#include <string>

#include "draftuq/distill.hpp"
#include "draftuq/estimators.hpp"
#include "draftuq/report.hpp"

namespace draftuq {

inline constexpr const char* kWorkersEnvVar = "DRAFTUQ_WORKERS";

struct ExperimentConfig {
  // Model shapes.
  int vocab_size = 24;
  int context_window = 2;
  int target_hidden = 16;
  int draft_hidden = 4;
  int target_family_size = 3;
  // Held-out family used as ground truth. A fresh draw the size of the
  // generating family is dominated by which-members-were-drawn noise at toy
  // scale, so the estimand defaults to a larger fresh sample.
  int gt_family_size = 16;

  // Low-rank noise.
  int noise_rank = 2;
  double target_sigma = 0.1;
  double draft_init_sigma = 0.5;
  double konly_sigma = 0.1;

  // Task and corpus.
  int n_queries = 16;
  int key_len = 1;
  double target_coverage = 0.5;  // fraction of queries the target is trained on
  int responses_per_query = 4;
  int response_max_len = 8;
  double corpus_temperature = 1.0;
  std::string corpus_teacher = "base";  // "base" | "family"

  // Draft ensemble.
  DraftStrategy strategy;               // init_noise filled from draft_init_sigma / noise_rank
  std::string ensemble_mode = "sxm";    // "sxm" | "konly"
  int konly_k = 3;

  // Estimation choices.
  std::string proxy = "distilled";  // "distilled" | "raw"
  std::string aggregation = "mean";
  std::string fidelity_population = "token";  // "token" | "sequence"

  // Evaluation.
  int eval_samples_per_query = 2;
  double eval_temperature = 1.0;
  int detection_samples_per_query = 3;
  double detection_temperature = 1.0;
  double calibration_regularization = 1e-3;
  int ece_bins = 10;
  std::string cost_mode = "drafts-plus-target";  // | "drafts-only"

  // Runs.
  int runs = 5;
  std::uint64_t master_seed = 1;

  // Training stages.
  TrainConfig task_train_cfg{0.5, 600, 8, 2, 0, kDefaultResponseLen};
  TrainConfig osd_cfg{0.5, 800, 8, 2, 0, kDefaultResponseLen};
  TrainConfig draft_cfg{0.5, 500, 8, 1, 0, kDefaultResponseLen};

  // Test hook: deliberately fail this run index (-1 = never).
  int inject_failure_at_run = -1;

  void validate() const;
  VocabSpec vocab() const;
  LowRankNoiseSpec target_noise() const;
  LowRankNoiseSpec draft_init_noise() const;
  LowRankNoiseSpec konly_noise() const;
};

// Strict parsing: starts from defaults, overlays the document, rejects
// unknown keys at every level.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical single-document serialization containing every key.
std::string config_to_json(const ExperimentConfig& config);

// FNV-1a 64-bit hash of the canonical document, as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& config);

// Worker count from DRAFTUQ_WORKERS (default 1).
int worker_count_from_env();

// Executes all runs (parallelizable across runs), writes report files and
// per-run artifacts under out_dir, and returns the finalized report.
ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& out_dir);

// The deterministic artifacts shared by every run.
struct TaskSetup {
  QADataset data;
  std::vector<int> covered_items;  // sorted item indices the target trains on
};
TaskSetup build_task_setup(const ExperimentConfig& config);

// Single-run execution (exposed for the stage subcommands and tests).
struct RunArtifacts {
  RunMetrics metrics;
  std::vector<std::vector<TokenEU>> traces;
  std::vector<LabeledSample> labels;
  std::vector<MemberTrainLog> draft_logs;
};
RunArtifacts execute_run(const ExperimentConfig& config, const TaskSetup& setup, int run_index);

// Stage outputs shared between execute_run and the CLI stage subcommands.
struct RunModels {
  AutoregressiveModel target;
  ModelFamily gen_family;  // generated the corpus / raw proxy
  ModelFamily gt_family;   // fresh held-out family used as ground truth
  GeneratedCorpus corpus;
  AutoregressiveModel draft_template;
};
RunModels build_run_models(const ExperimentConfig& config, const TaskSetup& setup, int run_index);

struct RunDrafts {
  ModelFamily drafts;
  std::vector<MemberTrainLog> logs;
};
RunDrafts build_run_drafts(const ExperimentConfig& config, const TaskSetup& setup,
                           const RunModels& models, int run_index);

AutoregressiveModel build_run_pmix(const ExperimentConfig& config, const TaskSetup& setup,
                                   const RunModels& models, int run_index);

}  // namespace draftuq
