#include "draftuq/distill.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "draftuq/errors.hpp"
#include "draftuq/rng.hpp"
#include "json.hpp"

namespace draftuq {

namespace {

// Seed streams inside one trainer / family build, kept disjoint by constant.
constexpr std::uint64_t kBatchStream = 0;
constexpr std::uint64_t kTeacherStream = 1;
constexpr std::uint64_t kRolloutStream = 2;
constexpr std::uint64_t kPartitionStream = 7001;
constexpr std::uint64_t kMemberTrainStream = 7100;
constexpr std::uint64_t kMemberInitStream = 7200;

std::vector<int> context_of(std::span<const int> query, std::span<const int> response, int t) {
  std::vector<int> ctx(query.begin(), query.end());
  ctx.insert(ctx.end(), response.begin(), response.begin() + t);
  return ctx;
}

void check_compatible(const AutoregressiveModel& a, const AutoregressiveModel& b,
                      const char* what) {
  if (a.vocab().size != b.vocab().size || a.context_window() != b.context_window()) {
    throw InvalidInput(std::string(what) + ": vocabulary size and context window must match");
  }
}

std::vector<int> resolve_allowed(const GeneratedCorpus& corpus, std::span<const int> allowed) {
  const int n = static_cast<int>(corpus.records.size());
  std::vector<int> out;
  if (allowed.empty()) {
    for (int i = 0; i < n; ++i) out.push_back(i);
  } else {
    for (int i : allowed) {
      if (i < 0 || i >= n) throw InvalidInput("allowed record index out of range");
      out.push_back(i);
    }
  }
  std::erase_if(out, [&](int i) { return corpus.records[static_cast<std::size_t>(i)].response.empty(); });
  if (out.empty()) throw InvalidInput("no nonempty corpus records to train on");
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (steps < 1) throw InvalidInput("steps must be >= 1");
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  if (teacher_samples_per_step < 1) throw InvalidInput("teacher samples per step must be >= 1");
  if (rollout_len < 1) throw InvalidInput("rollout length must be >= 1");
}

StochasticTeacher StochasticTeacher::perturbed(AutoregressiveModel base, LowRankNoiseSpec noise) {
  noise.validate_for(base);
  StochasticTeacher t;
  t.base_ = std::move(base);
  t.noise_ = std::move(noise);
  return t;
}

StochasticTeacher StochasticTeacher::enumerated(ModelFamily family) {
  if (family.members.empty()) throw InvalidInput("enumerated teacher needs a nonempty family");
  StochasticTeacher t;
  t.enumerated_ = std::move(family);
  return t;
}

const AutoregressiveModel& StochasticTeacher::base() const {
  if (enumerated_.has_value()) return enumerated_->members.front();
  return *base_;
}

const ModelFamily& StochasticTeacher::family() const {
  if (!enumerated_.has_value()) throw InvalidInput("teacher is not enumerated");
  return *enumerated_;
}

std::vector<AutoregressiveModel> StochasticTeacher::realize(int n_samples,
                                                            std::uint64_t step_seed) const {
  if (enumerated_.has_value()) return enumerated_->members;
  if (n_samples < 1) throw InvalidInput("teacher realization count must be >= 1");
  std::vector<AutoregressiveModel> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    out.push_back(perturb_low_rank(*base_, noise_, derive_seed(step_seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Untrained: return "untrained";
    case StrategyKind::DDD: return "ddd";
    case StrategyKind::IDD: return "idd";
    case StrategyKind::FDD: return "fdd";
    case StrategyKind::ReverseKL: return "reverse_kl";
  }
  throw InvalidInput("unknown strategy kind");
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "untrained") return StrategyKind::Untrained;
  if (s == "ddd") return StrategyKind::DDD;
  if (s == "idd") return StrategyKind::IDD;
  if (s == "fdd") return StrategyKind::FDD;
  if (s == "reverse_kl") return StrategyKind::ReverseKL;
  throw InvalidInput("unknown strategy kind: " + s);
}

void DraftStrategy::validate() const {
  if (s < 1) throw InvalidInput("strategy partition count must be >= 1");
  if (m < 1) throw InvalidInput("strategy models per partition must be >= 1");
}

double TrainLog::initial_loss() const {
  if (steps.empty()) throw InvalidInput("empty training log");
  return steps.front().loss;
}

double TrainLog::final_loss() const {
  if (steps.empty()) throw InvalidInput("empty training log");
  return steps.back().loss;
}

std::vector<int> TrainLog::consumed_records() const {
  std::set<int> ids;
  for (const auto& s : steps) ids.insert(s.record_ids.begin(), s.record_ids.end());
  return {ids.begin(), ids.end()};
}

double forward_kl_loss(const AutoregressiveModel& model, const Categorical& teacher,
                       std::span<const int> context) {
  return kl(teacher, model.next_token_dist(context));
}

double reverse_kl_loss(const AutoregressiveModel& model, const Categorical& teacher,
                       std::span<const int> context) {
  return kl(model.next_token_dist(context), teacher);
}

void forward_kl_grad(const AutoregressiveModel& model, const Categorical& teacher,
                     std::span<const int> context, std::span<double> grad) {
  const Categorical s = model.next_token_dist(context);
  if (s.size() != teacher.size()) throw InvalidInput("teacher distribution size mismatch");
  std::vector<double> dlogits(static_cast<std::size_t>(s.size()));
  for (int i = 0; i < s.size(); ++i) dlogits[static_cast<std::size_t>(i)] = s[i] - teacher[i];
  accumulate_logit_gradient(model, context, dlogits, grad);
}

void reverse_kl_grad(const AutoregressiveModel& model, const Categorical& teacher,
                     std::span<const int> context, std::span<double> grad) {
  const Categorical s = model.next_token_dist(context);
  if (s.size() != teacher.size()) throw InvalidInput("teacher distribution size mismatch");
  const double loss = kl(s, teacher);
  std::vector<double> dlogits(static_cast<std::size_t>(s.size()));
  for (int i = 0; i < s.size(); ++i) {
    dlogits[static_cast<std::size_t>(i)] =
        s[i] * ((std::log(s[i]) - std::log(teacher[i])) - loss);
  }
  accumulate_logit_gradient(model, context, dlogits, grad);
}

TrainedModel osd_train(const AutoregressiveModel& student, const StochasticTeacher& teacher,
                       const GeneratedCorpus& corpus, const QADataset& data,
                       const TrainConfig& config, std::span<const int> allowed_records) {
  config.validate();
  check_compatible(student, teacher.base(), "osd_train");
  const std::vector<int> allowed = resolve_allowed(corpus, allowed_records);

  TrainedModel result{student, {}};
  auto& params = result.model.mutable_params();
  std::vector<double> grad(params.size());
  SplitRng batch_rng(derive_seed(config.seed, kBatchStream));
  const std::uint64_t teacher_seed = derive_seed(config.seed, kTeacherStream);

  for (int step = 0; step < config.steps; ++step) {
    const auto teachers = teacher.realize(config.teacher_samples_per_step,
                                          derive_seed(teacher_seed, static_cast<std::uint64_t>(step)));
    std::fill(grad.begin(), grad.end(), 0.0);
    TrainStepLog log;
    log.step = step;
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const int rec_id = allowed[static_cast<std::size_t>(batch_rng.next_below(allowed.size()))];
      const auto& rec = corpus.records[static_cast<std::size_t>(rec_id)];
      const auto& query = data.items[static_cast<std::size_t>(rec.query_index)].query;
      const int t = static_cast<int>(batch_rng.next_below(rec.response.size()));
      const std::vector<int> ctx = context_of(query, rec.response, t);
      log.record_ids.push_back(rec_id);

      const Categorical s = result.model.next_token_dist(ctx);
      std::vector<double> mean_teacher(static_cast<std::size_t>(s.size()), 0.0);
      double item_loss = 0.0;
      for (const auto& tm : teachers) {
        const Categorical td = tm.next_token_dist(ctx);
        item_loss += kl(td, s);
        for (int i = 0; i < s.size(); ++i) {
          mean_teacher[static_cast<std::size_t>(i)] += td[i] / static_cast<double>(teachers.size());
        }
      }
      item_loss /= static_cast<double>(teachers.size());
      loss += item_loss / config.batch_size;

      std::vector<double> dlogits(static_cast<std::size_t>(s.size()));
      for (int i = 0; i < s.size(); ++i) {
        dlogits[static_cast<std::size_t>(i)] = (s[i] - mean_teacher[static_cast<std::size_t>(i)]) / config.batch_size;
      }
      accumulate_logit_gradient(result.model, ctx, dlogits, grad);
    }
    if (!std::isfinite(loss)) throw TrainingFailure("non-finite distillation loss", step);
    log.loss = loss;
    result.log.steps.push_back(std::move(log));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
  }
  return result;
}

TrainedModel reverse_kl_train(const AutoregressiveModel& student,
                              const AutoregressiveModel& teacher, const GeneratedCorpus& corpus,
                              const QADataset& data, const TrainConfig& config) {
  config.validate();
  check_compatible(student, teacher, "reverse_kl_train");
  const std::vector<int> allowed = resolve_allowed(corpus, {});

  TrainedModel result{student, {}};
  auto& params = result.model.mutable_params();
  std::vector<double> grad(params.size());
  SplitRng batch_rng(derive_seed(config.seed, kBatchStream));
  const std::uint64_t rollout_seed = derive_seed(config.seed, kRolloutStream);

  for (int step = 0; step < config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    TrainStepLog log;
    log.step = step;

    // Collect on-policy contexts from fresh student rollouts.
    std::vector<std::vector<int>> contexts;
    for (int b = 0; b < config.batch_size; ++b) {
      const int rec_id = allowed[static_cast<std::size_t>(batch_rng.next_below(allowed.size()))];
      const auto& rec = corpus.records[static_cast<std::size_t>(rec_id)];
      const auto& query = data.items[static_cast<std::size_t>(rec.query_index)].query;
      log.record_ids.push_back(rec_id);
      const std::vector<int> rollout = sample_sequence(
          result.model, query, config.rollout_len, 1.0,
          derive_seed(rollout_seed, static_cast<std::uint64_t>(step) * config.batch_size + b));
      for (int t = 0; t < static_cast<int>(rollout.size()); ++t) {
        contexts.push_back(context_of(query, rollout, t));
      }
    }

    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(contexts.size());
    for (const auto& ctx : contexts) {
      const Categorical s = result.model.next_token_dist(ctx);
      const Categorical td = teacher.next_token_dist(ctx);
      const double item = kl(s, td);
      loss += item * scale;
      std::vector<double> dlogits(static_cast<std::size_t>(s.size()));
      for (int i = 0; i < s.size(); ++i) {
        dlogits[static_cast<std::size_t>(i)] =
            scale * s[i] * ((std::log(s[i]) - std::log(td[i])) - item);
      }
      accumulate_logit_gradient(result.model, ctx, dlogits, grad);
    }
    if (!std::isfinite(loss)) throw TrainingFailure("non-finite reverse-KL loss", step);
    log.loss = loss;
    result.log.steps.push_back(std::move(log));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
  }
  return result;
}

TrainedModel task_train(const AutoregressiveModel& student, const QADataset& data,
                        std::span<const int> item_indices, const TrainConfig& config) {
  config.validate();
  std::vector<int> items;
  if (item_indices.empty()) {
    for (int i = 0; i < data.size(); ++i) items.push_back(i);
  } else {
    for (int i : item_indices) {
      if (i < 0 || i >= data.size()) throw InvalidInput("task item index out of range");
      items.push_back(i);
    }
  }
  if (items.empty()) throw InvalidInput("no task items to train on");

  TrainedModel result{student, {}};
  auto& params = result.model.mutable_params();
  std::vector<double> grad(params.size());
  SplitRng batch_rng(derive_seed(config.seed, kBatchStream));

  for (int step = 0; step < config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    TrainStepLog log;
    log.step = step;
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const int item_id = items[static_cast<std::size_t>(batch_rng.next_below(items.size()))];
      const std::vector<int> response = canonical_response(data, item_id);
      const int t = static_cast<int>(batch_rng.next_below(response.size()));
      const auto& query = data.items[static_cast<std::size_t>(item_id)].query;
      const std::vector<int> ctx = context_of(query, response, t);
      const int target = response[static_cast<std::size_t>(t)];
      log.record_ids.push_back(item_id);

      const Categorical s = result.model.next_token_dist(ctx);
      loss += -std::log(s[target]) / config.batch_size;
      std::vector<double> dlogits(static_cast<std::size_t>(s.size()));
      for (int i = 0; i < s.size(); ++i) {
        dlogits[static_cast<std::size_t>(i)] = (s[i] - (i == target ? 1.0 : 0.0)) / config.batch_size;
      }
      accumulate_logit_gradient(result.model, ctx, dlogits, grad);
    }
    if (!std::isfinite(loss)) throw TrainingFailure("non-finite task loss", step);
    log.loss = loss;
    result.log.steps.push_back(std::move(log));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= config.learning_rate * grad[i];
  }
  return result;
}

DraftTrainResult train_draft_family(const DraftStrategy& strategy,
                                    const AutoregressiveModel& draft_template,
                                    const AutoregressiveModel& teacher,
                                    const GeneratedCorpus& corpus, const QADataset& data,
                                    const TrainConfig& config) {
  strategy.validate();
  config.validate();
  check_compatible(draft_template, teacher, "train_draft_family");

  const bool partitioned = strategy.kind == StrategyKind::DDD || strategy.kind == StrategyKind::FDD;
  const bool init_noisy = strategy.kind == StrategyKind::IDD || strategy.kind == StrategyKind::FDD;

  DraftTrainResult result;
  result.family.provenance = Provenance::DraftFamily;
  if (partitioned) {
    result.partition = partition_corpus(corpus, strategy.s, derive_seed(config.seed, kPartitionStream));
  } else {
    result.partition.chunks = 1;
    result.partition.assignment.assign(corpus.records.size(), 0);
  }
  if (init_noisy) strategy.init_noise.validate_for(draft_template);

  const StochasticTeacher distill_teacher =
      strategy.teacher_noise.sigma > 0.0
          ? StochasticTeacher::perturbed(teacher, strategy.teacher_noise)
          : StochasticTeacher::enumerated(ModelFamily{{teacher}, Provenance::TargetFamily});

  for (int member = 0; member < strategy.member_count(); ++member) {
    const int chunk = partitioned ? member / strategy.m : 0;
    AutoregressiveModel init = draft_template;
    if (init_noisy) {
      init = perturb_low_rank(draft_template, strategy.init_noise,
                              derive_seed(config.seed, kMemberInitStream + member));
    }
    // IDD members share one training-order seed so initialization is the only
    // diversity axis; every other trained strategy gets a per-member order.
    TrainConfig member_config = config;
    member_config.seed =
        derive_seed(config.seed, kMemberTrainStream + (strategy.kind == StrategyKind::IDD ? 0 : member));

    MemberTrainLog mlog;
    mlog.member_index = member;
    mlog.chunk = chunk;
    switch (strategy.kind) {
      case StrategyKind::Untrained: {
        result.family.members.push_back(std::move(init));
        break;
      }
      case StrategyKind::ReverseKL: {
        TrainedModel trained = reverse_kl_train(init, teacher, corpus, data, member_config);
        mlog.log = std::move(trained.log);
        result.family.members.push_back(std::move(trained.model));
        break;
      }
      default: {
        std::vector<int> allowed;
        if (partitioned) allowed = result.partition.chunk_records(chunk);
        TrainedModel trained = osd_train(init, distill_teacher, corpus, data, member_config, allowed);
        mlog.log = std::move(trained.log);
        result.family.members.push_back(std::move(trained.model));
        break;
      }
    }
    result.logs.push_back(std::move(mlog));
  }
  return result;
}

double check_gradients(const AutoregressiveModel& model, const Categorical& teacher_dist,
                       std::span<const int> context) {
  const double h = 1e-5;
  const std::size_t n = model.params().size();
  double max_rel = 0.0;

  const auto check_loss = [&](auto loss_fn, auto grad_fn) {
    std::vector<double> analytic(n, 0.0);
    grad_fn(model, teacher_dist, context, std::span<double>(analytic));
    AutoregressiveModel probe = model;
    auto& params = probe.mutable_params();
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = loss_fn(probe, teacher_dist, context);
      params[i] = saved - h;
      const double down = loss_fn(probe, teacher_dist, context);
      params[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1.0});
      max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
  };
  check_loss([](const auto& m, const auto& t, auto c) { return forward_kl_loss(m, t, c); },
             [](const auto& m, const auto& t, auto c, auto g) { forward_kl_grad(m, t, c, g); });
  check_loss([](const auto& m, const auto& t, auto c) { return reverse_kl_loss(m, t, c); },
             [](const auto& m, const auto& t, auto c, auto g) { reverse_kl_grad(m, t, c, g); });
  return max_rel;
}

std::string train_log_to_jsonl(const MemberTrainLog& log) {
  using ordered_json = nlohmann::ordered_json;
  std::ostringstream out;
  ordered_json meta;
  meta["format_version"] = 1;
  meta["member_index"] = log.member_index;
  meta["chunk"] = log.chunk;
  meta["n_steps"] = log.log.steps.size();
  out << meta.dump() << "\n";
  for (const auto& s : log.log.steps) {
    ordered_json j;
    j["step"] = s.step;
    j["loss"] = s.loss;
    j["record_ids"] = s.record_ids;
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace draftuq
