#include "draftuq/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "draftuq/errors.hpp"
#include "draftuq/estimators.hpp"
#include "draftuq/metrics.hpp"
#include "draftuq/rng.hpp"
#include "json.hpp"

namespace draftuq {

namespace {

using ordered_json = nlohmann::ordered_json;

// Per-run seed streams, all derived from derive_seed(master, kRunBase + run).
constexpr std::uint64_t kTaskDataStream = 1;
constexpr std::uint64_t kCoverageStream = 2;
constexpr std::uint64_t kRunBase = 1000;
constexpr std::uint64_t kTargetOrderStream = 1;
constexpr std::uint64_t kGenFamilyStream = 2;
constexpr std::uint64_t kGtFamilyStream = 3;
constexpr std::uint64_t kCorpusStream = 4;
constexpr std::uint64_t kTemplateOrderStream = 5;
constexpr std::uint64_t kDraftTrainStream = 6;
constexpr std::uint64_t kPmixTrainStream = 7;
constexpr std::uint64_t kEvalStream = 8;
constexpr std::uint64_t kDetectStream = 9;
constexpr std::uint64_t kKOnlyStream = 10;
constexpr std::uint64_t kTargetInitStream = 11;
constexpr std::uint64_t kTemplateInitStream = 12;
constexpr std::uint64_t kPmixInitStream = 13;
// Fan-in-scaled init spread; the factorized backend cannot train from zeros.
constexpr double kInitScale = 1.0;
// Fixed base for the calibration train/test split by query id.
constexpr std::uint64_t kCalibSplitSeed = 0xCA11B5EEDULL;

std::uint64_t run_seed_of(const ExperimentConfig& config, int run_index) {
  return derive_seed(config.master_seed, kRunBase + static_cast<std::uint64_t>(run_index));
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(what);
}

void parse_train_block(const ordered_json& j, TrainConfig& cfg, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") {
      cfg.learning_rate = value.get<double>();
    } else if (key == "steps") {
      cfg.steps = value.get<int>();
    } else if (key == "batch_size") {
      cfg.batch_size = value.get<int>();
    } else if (key == "teacher_samples_per_step") {
      cfg.teacher_samples_per_step = value.get<int>();
    } else if (key == "rollout_len") {
      cfg.rollout_len = value.get<int>();
    } else {
      throw InvalidInput("unknown config key: " + where + "." + key);
    }
  }
}

ordered_json train_block_json(const TrainConfig& cfg) {
  ordered_json j;
  j["learning_rate"] = cfg.learning_rate;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["teacher_samples_per_step"] = cfg.teacher_samples_per_step;
  j["rollout_len"] = cfg.rollout_len;
  return j;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(vocab_size >= 5, "vocab_size must be >= 5");
  require(context_window >= 1, "context_window must be >= 1");
  require(target_hidden >= 0, "target_hidden must be >= 0");
  require(draft_hidden >= 0, "draft_hidden must be >= 0");
  require(draft_hidden <= target_hidden, "draft_hidden must be <= target_hidden");
  require(target_family_size >= 1, "target_family_size must be >= 1");
  require(gt_family_size >= 2, "gt_family_size must be >= 2");
  require(noise_rank >= 1, "noise_rank must be >= 1");
  require(target_sigma >= 0.0, "target_sigma must be >= 0");
  require(draft_init_sigma >= 0.0, "draft_init_sigma must be >= 0");
  require(konly_sigma >= 0.0, "konly_sigma must be >= 0");
  require(n_queries >= 2, "n_queries must be >= 2");
  require(key_len >= 1, "key_len must be >= 1");
  require(target_coverage > 0.0 && target_coverage <= 1.0, "target_coverage must be in (0, 1]");
  require(responses_per_query >= 1, "responses_per_query must be >= 1");
  require(response_max_len >= 1, "response_max_len must be >= 1");
  require(corpus_temperature >= 0.0, "corpus_temperature must be >= 0");
  require(corpus_teacher == "base" || corpus_teacher == "family",
          "corpus_teacher must be 'base' or 'family'");
  strategy.validate();
  require(ensemble_mode == "sxm" || ensemble_mode == "konly",
          "ensemble_mode must be 'sxm' or 'konly'");
  require(konly_k >= 2, "konly_k must be >= 2");
  require(proxy == "distilled" || proxy == "raw", "proxy must be 'distilled' or 'raw'");
  aggregation_from_string(aggregation);
  require(fidelity_population == "token" || fidelity_population == "sequence",
          "fidelity_population must be 'token' or 'sequence'");
  require(eval_samples_per_query >= 1, "eval_samples_per_query must be >= 1");
  require(eval_temperature >= 0.0, "eval_temperature must be >= 0");
  require(detection_samples_per_query >= 1, "detection_samples_per_query must be >= 1");
  require(detection_temperature >= 0.0, "detection_temperature must be >= 0");
  require(calibration_regularization >= 0.0, "calibration_regularization must be >= 0");
  require(ece_bins >= 1, "ece_bins must be >= 1");
  require(cost_mode == "drafts-only" || cost_mode == "drafts-plus-target",
          "cost_mode must be 'drafts-only' or 'drafts-plus-target'");
  require(runs >= 1, "runs must be >= 1");
  task_train_cfg.validate();
  osd_cfg.validate();
  draft_cfg.validate();
}

VocabSpec ExperimentConfig::vocab() const { return make_task_vocab(vocab_size); }

LowRankNoiseSpec ExperimentConfig::target_noise() const {
  return LowRankNoiseSpec{noise_rank, target_sigma, {}};
}

LowRankNoiseSpec ExperimentConfig::draft_init_noise() const {
  return LowRankNoiseSpec{noise_rank, draft_init_sigma, {}};
}

LowRankNoiseSpec ExperimentConfig::konly_noise() const {
  return LowRankNoiseSpec{noise_rank, konly_sigma, {}};
}

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "vocab_size") {
        cfg.vocab_size = value.get<int>();
      } else if (key == "context_window") {
        cfg.context_window = value.get<int>();
      } else if (key == "target_hidden") {
        cfg.target_hidden = value.get<int>();
      } else if (key == "draft_hidden") {
        cfg.draft_hidden = value.get<int>();
      } else if (key == "target_family_size") {
        cfg.target_family_size = value.get<int>();
      } else if (key == "gt_family_size") {
        cfg.gt_family_size = value.get<int>();
      } else if (key == "noise_rank") {
        cfg.noise_rank = value.get<int>();
      } else if (key == "target_sigma") {
        cfg.target_sigma = value.get<double>();
      } else if (key == "draft_init_sigma") {
        cfg.draft_init_sigma = value.get<double>();
      } else if (key == "konly_sigma") {
        cfg.konly_sigma = value.get<double>();
      } else if (key == "n_queries") {
        cfg.n_queries = value.get<int>();
      } else if (key == "key_len") {
        cfg.key_len = value.get<int>();
      } else if (key == "target_coverage") {
        cfg.target_coverage = value.get<double>();
      } else if (key == "responses_per_query") {
        cfg.responses_per_query = value.get<int>();
      } else if (key == "response_max_len") {
        cfg.response_max_len = value.get<int>();
      } else if (key == "corpus_temperature") {
        cfg.corpus_temperature = value.get<double>();
      } else if (key == "corpus_teacher") {
        cfg.corpus_teacher = value.get<std::string>();
      } else if (key == "strategy") {
        for (const auto& [skey, svalue] : value.items()) {
          if (skey == "kind") {
            cfg.strategy.kind = strategy_kind_from_string(svalue.get<std::string>());
          } else if (skey == "s") {
            cfg.strategy.s = svalue.get<int>();
          } else if (skey == "m") {
            cfg.strategy.m = svalue.get<int>();
          } else {
            throw InvalidInput("unknown config key: strategy." + skey);
          }
        }
      } else if (key == "ensemble_mode") {
        cfg.ensemble_mode = value.get<std::string>();
      } else if (key == "konly_k") {
        cfg.konly_k = value.get<int>();
      } else if (key == "proxy") {
        cfg.proxy = value.get<std::string>();
      } else if (key == "aggregation") {
        cfg.aggregation = value.get<std::string>();
      } else if (key == "fidelity_population") {
        cfg.fidelity_population = value.get<std::string>();
      } else if (key == "eval_samples_per_query") {
        cfg.eval_samples_per_query = value.get<int>();
      } else if (key == "eval_temperature") {
        cfg.eval_temperature = value.get<double>();
      } else if (key == "detection_samples_per_query") {
        cfg.detection_samples_per_query = value.get<int>();
      } else if (key == "detection_temperature") {
        cfg.detection_temperature = value.get<double>();
      } else if (key == "calibration_regularization") {
        cfg.calibration_regularization = value.get<double>();
      } else if (key == "ece_bins") {
        cfg.ece_bins = value.get<int>();
      } else if (key == "cost_mode") {
        cfg.cost_mode = value.get<std::string>();
      } else if (key == "runs") {
        cfg.runs = value.get<int>();
      } else if (key == "master_seed") {
        cfg.master_seed = value.get<std::uint64_t>();
      } else if (key == "task_train") {
        parse_train_block(value, cfg.task_train_cfg, "task_train");
      } else if (key == "osd_train") {
        parse_train_block(value, cfg.osd_cfg, "osd_train");
      } else if (key == "draft_train") {
        parse_train_block(value, cfg.draft_cfg, "draft_train");
      } else if (key == "inject_failure_at_run") {
        cfg.inject_failure_at_run = value.get<int>();
      } else {
        throw InvalidInput("unknown config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(load_text_file(path));
}

std::string config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["vocab_size"] = cfg.vocab_size;
  j["context_window"] = cfg.context_window;
  j["target_hidden"] = cfg.target_hidden;
  j["draft_hidden"] = cfg.draft_hidden;
  j["target_family_size"] = cfg.target_family_size;
  j["gt_family_size"] = cfg.gt_family_size;
  j["noise_rank"] = cfg.noise_rank;
  j["target_sigma"] = cfg.target_sigma;
  j["draft_init_sigma"] = cfg.draft_init_sigma;
  j["konly_sigma"] = cfg.konly_sigma;
  j["n_queries"] = cfg.n_queries;
  j["key_len"] = cfg.key_len;
  j["target_coverage"] = cfg.target_coverage;
  j["responses_per_query"] = cfg.responses_per_query;
  j["response_max_len"] = cfg.response_max_len;
  j["corpus_temperature"] = cfg.corpus_temperature;
  j["corpus_teacher"] = cfg.corpus_teacher;
  ordered_json strategy;
  strategy["kind"] = to_string(cfg.strategy.kind);
  strategy["s"] = cfg.strategy.s;
  strategy["m"] = cfg.strategy.m;
  j["strategy"] = strategy;
  j["ensemble_mode"] = cfg.ensemble_mode;
  j["konly_k"] = cfg.konly_k;
  j["proxy"] = cfg.proxy;
  j["aggregation"] = cfg.aggregation;
  j["fidelity_population"] = cfg.fidelity_population;
  j["eval_samples_per_query"] = cfg.eval_samples_per_query;
  j["eval_temperature"] = cfg.eval_temperature;
  j["detection_samples_per_query"] = cfg.detection_samples_per_query;
  j["detection_temperature"] = cfg.detection_temperature;
  j["calibration_regularization"] = cfg.calibration_regularization;
  j["ece_bins"] = cfg.ece_bins;
  j["cost_mode"] = cfg.cost_mode;
  j["runs"] = cfg.runs;
  j["master_seed"] = cfg.master_seed;
  j["task_train"] = train_block_json(cfg.task_train_cfg);
  j["osd_train"] = train_block_json(cfg.osd_cfg);
  j["draft_train"] = train_block_json(cfg.draft_cfg);
  j["inject_failure_at_run"] = cfg.inject_failure_at_run;
  return j.dump(2) + "\n";
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
  return buf;
}

int worker_count_from_env() {
  const char* raw = std::getenv(kWorkersEnvVar);
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1 || v > 256) {
    throw InvalidInput(std::string(kWorkersEnvVar) + " must be an integer in [1, 256]");
  }
  return static_cast<int>(v);
}

TaskSetup build_task_setup(const ExperimentConfig& config) {
  TaskSetup setup;
  setup.data = make_synthetic_qa(config.vocab(), config.n_queries, config.key_len,
                                 derive_seed(config.master_seed, kTaskDataStream));
  const int n = setup.data.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  SplitRng rng(derive_seed(config.master_seed, kCoverageStream));
  for (int i = n - 1; i > 0; --i) {
    const auto k = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(k)]);
  }
  int covered = static_cast<int>(std::lround(config.target_coverage * n));
  covered = std::clamp(covered, 1, n);
  setup.covered_items.assign(order.begin(), order.begin() + covered);
  std::sort(setup.covered_items.begin(), setup.covered_items.end());
  return setup;
}

RunModels build_run_models(const ExperimentConfig& config, const TaskSetup& setup, int run_index) {
  const std::uint64_t run_seed = run_seed_of(config, run_index);
  const VocabSpec vocab = config.vocab();

  TrainConfig target_cfg = config.task_train_cfg;
  target_cfg.seed = derive_seed(run_seed, kTargetOrderStream);
  AutoregressiveModel target =
      task_train(AutoregressiveModel::random_init(Backend::LinearSoftmax, vocab,
                                                  config.context_window, config.target_hidden,
                                                  kInitScale, derive_seed(run_seed, kTargetInitStream)),
                 setup.data, setup.covered_items, target_cfg)
          .model;

  ModelFamily gen_family = make_target_family(target, config.target_family_size,
                                              config.target_noise(), derive_seed(run_seed, kGenFamilyStream));
  ModelFamily gt_family = make_target_family(target, config.gt_family_size,
                                             config.target_noise(), derive_seed(run_seed, kGtFamilyStream));

  GeneratedCorpus corpus =
      config.corpus_teacher == "family"
          ? generate_corpus(gen_family, setup.data, config.responses_per_query,
                            config.corpus_temperature, derive_seed(run_seed, kCorpusStream),
                            config.response_max_len)
          : generate_corpus(target, setup.data, config.responses_per_query,
                            config.corpus_temperature, derive_seed(run_seed, kCorpusStream),
                            config.response_max_len);

  TrainConfig template_cfg = config.task_train_cfg;
  template_cfg.seed = derive_seed(run_seed, kTemplateOrderStream);
  AutoregressiveModel draft_template =
      task_train(AutoregressiveModel::random_init(Backend::LinearSoftmax, vocab,
                                                  config.context_window, config.draft_hidden,
                                                  kInitScale, derive_seed(run_seed, kTemplateInitStream)),
                 setup.data, setup.covered_items, template_cfg)
          .model;

  return RunModels{std::move(target), std::move(gen_family), std::move(gt_family),
                   std::move(corpus), std::move(draft_template)};
}

RunDrafts build_run_drafts(const ExperimentConfig& config, const TaskSetup& setup,
                           const RunModels& models, int run_index) {
  const std::uint64_t run_seed = run_seed_of(config, run_index);
  TrainConfig cfg = config.draft_cfg;
  cfg.seed = derive_seed(run_seed, kDraftTrainStream);

  if (config.ensemble_mode == "konly") {
    const StochasticTeacher teacher =
        StochasticTeacher::enumerated(ModelFamily{{models.target}, Provenance::TargetFamily});
    TrainedModel trained = osd_train(models.draft_template, teacher, models.corpus, setup.data, cfg);
    RunDrafts out;
    out.logs.push_back(MemberTrainLog{0, 0, std::move(trained.log)});
    out.drafts = make_konly_family(trained.model, config.konly_k, config.konly_noise(),
                                   derive_seed(run_seed, kKOnlyStream));
    return out;
  }

  DraftStrategy strategy = config.strategy;
  strategy.init_noise = config.draft_init_noise();
  strategy.teacher_noise = config.target_noise();
  DraftTrainResult result = train_draft_family(strategy, models.draft_template, models.target,
                                               models.corpus, setup.data, cfg);
  return RunDrafts{std::move(result.family), std::move(result.logs)};
}

AutoregressiveModel build_run_pmix(const ExperimentConfig& config, const TaskSetup& setup,
                                   const RunModels& models, int run_index) {
  const std::uint64_t run_seed = run_seed_of(config, run_index);
  TrainConfig cfg = config.osd_cfg;
  cfg.seed = derive_seed(run_seed, kPmixTrainStream);
  // The proxy distills a teacher re-perturbed at every step, so it converges to
  // the model average over the full perturbation distribution — the same
  // estimand the held-out ground-truth family samples.
  const StochasticTeacher teacher =
      StochasticTeacher::perturbed(models.target, config.target_noise());
  return osd_train(AutoregressiveModel::random_init(Backend::LinearSoftmax, config.vocab(),
                                                    config.context_window, config.target_hidden,
                                                    kInitScale, derive_seed(run_seed, kPmixInitStream)),
                   teacher, models.corpus, setup.data, cfg)
      .model;
}

RunArtifacts execute_run(const ExperimentConfig& config, const TaskSetup& setup, int run_index) {
  RunArtifacts out;
  out.metrics.run_id = run_index;
  const std::uint64_t run_seed = run_seed_of(config, run_index);
  try {
    if (run_index == config.inject_failure_at_run) {
      throw TrainingFailure("injected failure for run-isolation testing", 0);
    }
    const RunModels models = build_run_models(config, setup, run_index);
    RunDrafts drafts = build_run_drafts(config, setup, models, run_index);
    out.draft_logs = std::move(drafts.logs);
    const ProxyTarget proxy =
        config.proxy == "distilled"
            ? ProxyTarget::distilled_mix(build_run_pmix(config, setup, models, run_index))
            : ProxyTarget::raw_family_average(models.gen_family);

    // The target's own generations, scored token by token.
    const Aggregation agg = aggregation_from_string(config.aggregation);
    const std::uint64_t eval_seed = derive_seed(run_seed, kEvalStream);
    for (int qi = 0; qi < setup.data.size(); ++qi) {
      const auto& query = setup.data.items[static_cast<std::size_t>(qi)].query;
      for (int e = 0; e < config.eval_samples_per_query; ++e) {
        const std::vector<int> seq = sample_sequence(
            models.target, query, config.response_max_len, config.eval_temperature,
            derive_seed(eval_seed,
                        static_cast<std::uint64_t>(qi) * config.eval_samples_per_query + e));
        out.traces.push_back(token_eu_trace(drafts.drafts, proxy, &models.gt_family, seq, query));
      }
    }

    std::vector<double> est;
    std::vector<double> gt;
    int flagged = 0;
    if (config.fidelity_population == "token") {
      for (const auto& trace : out.traces) {
        for (const auto& t : trace) {
          if (t.support_violation) {
            ++flagged;
            continue;
          }
          est.push_back(t.estimated_total);
          gt.push_back(*t.ground_truth);
        }
      }
    } else {
      for (const auto& trace : out.traces) {
        const bool bad = std::any_of(trace.begin(), trace.end(),
                                     [](const TokenEU& t) { return t.support_violation; });
        if (bad) {
          ++flagged;
          continue;
        }
        est.push_back(sequence_eu(trace, agg));
        std::vector<TokenEU> gt_as_totals = trace;
        for (auto& t : gt_as_totals) t.estimated_total = *t.ground_truth;
        gt.push_back(sequence_eu(gt_as_totals, agg));
      }
    }
    out.metrics.flagged_infinite = flagged;
    out.metrics.rmse = rmse(est, gt);
    out.metrics.spearman = spearman(est, gt);
    out.metrics.ccc = ccc(est, gt);

    // Hallucination detection on fresh labeled generations.
    out.labels = label_correctness(models.target, setup.data, config.detection_samples_per_query,
                                   config.detection_temperature, derive_seed(run_seed, kDetectStream),
                                   config.response_max_len);
    std::vector<double> train_scores;
    std::vector<int> train_labels;
    std::vector<double> test_scores;
    std::vector<int> test_labels;
    for (const auto& sample : out.labels) {
      const auto& query = setup.data.items[static_cast<std::size_t>(sample.query_index)].query;
      const auto trace = token_eu_trace(drafts.drafts, proxy, nullptr, sample.response, query);
      const double score = sequence_eu(trace, agg);
      const int incorrect = 1 - sample.label;
      const bool train_side =
          (derive_seed(kCalibSplitSeed, static_cast<std::uint64_t>(sample.query_index)) & 1ULL) == 0;
      if (train_side) {
        train_scores.push_back(score);
        train_labels.push_back(incorrect);
      } else {
        test_scores.push_back(score);
        test_labels.push_back(incorrect);
      }
    }
    if (train_scores.empty() || test_scores.empty()) {
      throw InvalidInput("degenerate calibration split: one side is empty");
    }
    const bool train_has_both =
        std::count(train_labels.begin(), train_labels.end(), 1) > 0 &&
        std::count(train_labels.begin(), train_labels.end(), 0) > 0;
    std::vector<double> test_probs;
    test_probs.reserve(test_scores.size());
    if (train_has_both) {
      const CalibrationModel calib = fit_logistic(train_scores, train_labels,
                                                  config.calibration_regularization);
      for (double s : test_scores) test_probs.push_back(calib.predict(s));
    } else {
      // Single-class calibrator input: fall back to the constant predictor.
      double mean_label = 0.0;
      for (int y : train_labels) mean_label += y;
      mean_label /= static_cast<double>(train_labels.size());
      test_probs.assign(test_scores.size(), mean_label);
    }
    const DetectionMetrics det = detection_metrics(test_probs, test_labels, config.ece_bins);
    out.metrics.auroc = det.auroc;
    out.metrics.ece = det.ece;
    out.metrics.brier = det.brier;

    // Relative cost in units of parameter count per forward pass.
    const auto target_units = static_cast<double>(AutoregressiveModel::param_count(
        Backend::LinearSoftmax, config.vocab_size, config.context_window, config.target_hidden));
    const auto draft_units = static_cast<double>(AutoregressiveModel::param_count(
        Backend::LinearSoftmax, config.vocab_size, config.context_window, config.draft_hidden));
    const CostEntry baseline{"target-family", {{target_units, config.target_family_size}}};
    CostEntry method{"draft-ensemble", {}};
    const int n_drafts = config.ensemble_mode == "konly" ? config.konly_k
                                                         : config.strategy.member_count();
    method.passes.push_back({draft_units, n_drafts});
    if (config.cost_mode == "drafts-plus-target") method.passes.push_back({target_units, 1});
    out.metrics.rel_flops = relative_flops(method, baseline);
  } catch (const TrainingFailure& e) {
    out.metrics.failed = true;
    out.metrics.diagnostic = e.what();
  } catch (const UndefinedCorrelation& e) {
    out.metrics.failed = true;
    out.metrics.diagnostic = e.what();
  } catch (const InvalidInput& e) {
    out.metrics.failed = true;
    out.metrics.diagnostic = e.what();
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  const TaskSetup setup = build_task_setup(config);
  std::filesystem::create_directories(out_dir);
  save_text_file(dataset_to_jsonl(setup.data),
                 (std::filesystem::path(out_dir) / "dataset.jsonl").string());

  std::vector<RunArtifacts> results(static_cast<std::size_t>(config.runs));
  parallel_for(config.runs, worker_count_from_env(),
               [&](int r) { results[static_cast<std::size_t>(r)] = execute_run(config, setup, r); });

  ExperimentReport report;
  report.config_fingerprint = config_fingerprint(config);
  report.settings.fidelity_population = config.fidelity_population;
  report.settings.aggregation = config.aggregation;
  report.settings.ece_bins = config.ece_bins;
  report.settings.cost_mode = config.cost_mode;
  report.settings.runs = config.runs;

  for (int r = 0; r < config.runs; ++r) {
    const auto& result = results[static_cast<std::size_t>(r)];
    report.per_run.push_back(result.metrics);
    const auto run_dir = std::filesystem::path(out_dir) / ("run" + std::to_string(r));
    std::filesystem::create_directories(run_dir);
    if (!result.metrics.failed) {
      save_text_file(traces_to_jsonl(result.traces), (run_dir / "eu_traces.jsonl").string());
      save_text_file(labels_to_jsonl(result.labels), (run_dir / "labels.jsonl").string());
      for (const auto& log : result.draft_logs) {
        save_text_file(train_log_to_jsonl(log),
                       (run_dir / ("train_log_member" + std::to_string(log.member_index) + ".jsonl"))
                           .string());
      }
    } else {
      save_text_file("injected or recorded failure: " + result.metrics.diagnostic + "\n",
                     (run_dir / "failure.txt").string());
    }
  }
  finalize_report(report);
  emit_report(report, ReportFormat::Document, out_dir);
  emit_report(report, ReportFormat::Table, out_dir);
  emit_report(report, ReportFormat::ScatterSvg, out_dir);
  return report;
}

}  // namespace draftuq
