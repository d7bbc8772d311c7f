#pragma once

// Gradient-based distillation trainers.
//
// All trainers are plain SGD with a constant learning rate, training on
// response token positions only: a corpus record with query x and response y
// contributes the contexts x + y[0..t) for t in [0, len(y)). Everything is
// deterministic given (inputs, config.seed); a non-finite loss raises
// TrainingFailure with the step index.
//
// Loss conventions at a single context with student distribution s and
// teacher distribution t (both softmax outputs, strictly positive):
//   forward KL  kl(t, s)  — mode-covering; gradient wrt student logits = s - t
//   reverse KL  kl(s, t)  — mode-seeking; gradient = s * ((ln s - ln t) - kl(s, t))
//   cross-entropy to a target token — forward KL with a point-mass teacher.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "draftuq/datagen.hpp"
#include "draftuq/models.hpp"
#include "draftuq/simplex.hpp"

namespace draftuq {

struct TrainConfig {
  double learning_rate = 0.5;
  int steps = 400;
  int batch_size = 8;
  int teacher_samples_per_step = 2;  // perturbed-teacher realizations per step
  std::uint64_t seed = 0;
  int rollout_len = kDefaultResponseLen;  // on-policy rollout length (reverse KL)

  void validate() const;
};

// A stochastic teacher is either a base model with fresh low-rank
// perturbations sampled every step, or an explicitly enumerated family whose
// exact average is used every step (the degenerate sigma = 0 perturbed teacher
// is the single deterministic teacher).
class StochasticTeacher {
 public:
  static StochasticTeacher perturbed(AutoregressiveModel base, LowRankNoiseSpec noise);
  static StochasticTeacher enumerated(ModelFamily family);

  bool is_enumerated() const { return enumerated_.has_value(); }
  const AutoregressiveModel& base() const;
  const LowRankNoiseSpec& noise() const { return noise_; }
  const ModelFamily& family() const;

  // The teacher realizations for one training step. Perturbed mode draws
  // n_samples fresh models seeded by derive_seed(step_seed, i); enumerated
  // mode returns the family members.
  std::vector<AutoregressiveModel> realize(int n_samples, std::uint64_t step_seed) const;

 private:
  StochasticTeacher() = default;
  std::optional<AutoregressiveModel> base_;
  LowRankNoiseSpec noise_;
  std::optional<ModelFamily> enumerated_;
};

enum class StrategyKind { Untrained, DDD, IDD, FDD, ReverseKL };

std::string to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(const std::string& s);

struct DraftStrategy {
  StrategyKind kind = StrategyKind::DDD;
  int s = 2;  // partitions (DDD/FDD); other kinds train every member on the full corpus
  int m = 3;  // members per partition
  LowRankNoiseSpec init_noise;     // initialization diversity (IDD/FDD)
  // Forward-KL members distill a teacher re-perturbed with this noise at every
  // step (sigma = 0 keeps the teacher fixed). Members with distinct training
  // seeds see distinct perturbation sequences, which is a diversity source of
  // its own.
  LowRankNoiseSpec teacher_noise;

  int member_count() const { return s * m; }
  void validate() const;
};

struct TrainStepLog {
  int step = 0;
  double loss = 0.0;
  std::vector<int> record_ids;  // corpus records consumed this step
};

struct TrainLog {
  std::vector<TrainStepLog> steps;

  double initial_loss() const;
  double final_loss() const;
  std::vector<int> consumed_records() const;  // sorted unique record ids
};

struct TrainedModel {
  AutoregressiveModel model;
  TrainLog log;
};

struct MemberTrainLog {
  int member_index = 0;
  int chunk = 0;
  TrainLog log;
};

struct DraftTrainResult {
  ModelFamily family;
  std::vector<MemberTrainLog> logs;
  PartitionPlan partition;  // single chunk for non-partitioned strategies
};

// Loss/gradient primitives at one context (gradient accumulates += into grad).
double forward_kl_loss(const AutoregressiveModel& model, const Categorical& teacher,
                       std::span<const int> context);
double reverse_kl_loss(const AutoregressiveModel& model, const Categorical& teacher,
                       std::span<const int> context);
void forward_kl_grad(const AutoregressiveModel& model, const Categorical& teacher,
                     std::span<const int> context, std::span<double> grad);
void reverse_kl_grad(const AutoregressiveModel& model, const Categorical& teacher,
                     std::span<const int> context, std::span<double> grad);

// Online stochastic distillation: each step realizes the teacher and descends
// the mean over realizations and batch contexts of kl(teacher, student).
// allowed_records restricts batch sampling to a corpus subset (empty = all).
TrainedModel osd_train(const AutoregressiveModel& student, const StochasticTeacher& teacher,
                       const GeneratedCorpus& corpus, const QADataset& data,
                       const TrainConfig& config, std::span<const int> allowed_records = {});

// Reverse-KL distillation with on-policy contexts: every step draws fresh
// rollouts from the current student (prompted by corpus queries) and descends
// kl(student, teacher) at the rollout contexts.
TrainedModel reverse_kl_train(const AutoregressiveModel& student,
                              const AutoregressiveModel& teacher, const GeneratedCorpus& corpus,
                              const QADataset& data, const TrainConfig& config);

// Cross-entropy training on canonical task responses, restricted to
// item_indices (empty = all items). Used for target construction and the
// task-pretrained draft template.
TrainedModel task_train(const AutoregressiveModel& student, const QADataset& data,
                        std::span<const int> item_indices, const TrainConfig& config);

// Draft-family construction per strategy; logs record which corpus records
// each member consumed (the DDD disjointness evidence).
DraftTrainResult train_draft_family(const DraftStrategy& strategy,
                                    const AutoregressiveModel& draft_template,
                                    const AutoregressiveModel& teacher,
                                    const GeneratedCorpus& corpus, const QADataset& data,
                                    const TrainConfig& config);

// Max relative error between analytic and central-finite-difference gradients
// (step 1e-5) of both KL losses over all parameters, measured against
// max(|analytic|, |numeric|, 1).
double check_gradients(const AutoregressiveModel& model, const Categorical& teacher_dist,
                       std::span<const int> context);

// Training-log file: meta line then one line per step, fixed field order.
std::string train_log_to_jsonl(const MemberTrainLog& log);

}  // namespace draftuq
