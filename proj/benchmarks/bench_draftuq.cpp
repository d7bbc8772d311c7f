// Microbenchmarks for the hot paths: simplex math, next-token evaluation,
// the per-token estimator, and a distillation training step.

#include <benchmark/benchmark.h>

#include <vector>

#include "draftuq/datagen.hpp"
#include "draftuq/distill.hpp"
#include "draftuq/estimators.hpp"
#include "draftuq/models.hpp"
#include "draftuq/rng.hpp"
#include "draftuq/simplex.hpp"
#include "draftuq/verify.hpp"

using namespace draftuq;

namespace {

std::vector<double> random_logits(int v, std::uint64_t seed) {
  SplitRng rng(seed);
  std::vector<double> logits(static_cast<std::size_t>(v));
  for (auto& x : logits) x = 2.0 * rng.next_gaussian();
  return logits;
}

std::vector<Categorical> random_members(int v, int k, std::uint64_t seed) {
  std::vector<Categorical> members;
  members.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    members.push_back(softmax_normalize(random_logits(v, derive_seed(seed, i))));
  }
  return members;
}

void BM_Softmax(benchmark::State& state) {
  const auto logits = random_logits(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_normalize(logits));
  }
}
BENCHMARK(BM_Softmax)->Arg(16)->Arg(64)->Arg(256);

void BM_KlDivergence(benchmark::State& state) {
  const int v = static_cast<int>(state.range(0));
  const Categorical p = softmax_normalize(random_logits(v, 2));
  const Categorical q = softmax_normalize(random_logits(v, 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kl(p, q));
  }
}
BENCHMARK(BM_KlDivergence)->Arg(16)->Arg(64)->Arg(256);

void BM_Jsd(benchmark::State& state) {
  const auto members = random_members(32, static_cast<int>(state.range(0)), 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(jsd(members));
  }
}
BENCHMARK(BM_Jsd)->Arg(3)->Arg(6)->Arg(10);

void BM_NextTokenTabular(benchmark::State& state) {
  const auto model = AutoregressiveModel::random_init(Backend::Tabular, VocabSpec{12, 0, -1}, 2,
                                                      0, 1.0, 5);
  const std::vector<int> context{3, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.next_token_dist(context));
  }
}
BENCHMARK(BM_NextTokenTabular);

void BM_NextTokenLinearSoftmax(benchmark::State& state) {
  const auto model = AutoregressiveModel::random_init(Backend::LinearSoftmax, VocabSpec{12, 0, -1},
                                                      2, static_cast<int>(state.range(0)), 1.0, 6);
  const std::vector<int> context{3, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.next_token_dist(context));
  }
}
BENCHMARK(BM_NextTokenLinearSoftmax)->Arg(4)->Arg(16);

void BM_ProxyEu(benchmark::State& state) {
  const auto drafts = random_members(32, static_cast<int>(state.range(0)), 7);
  const Categorical proxy = softmax_normalize(random_logits(32, 8));
  for (auto _ : state) {
    benchmark::DoNotOptimize(proxy_eu(drafts, proxy));
  }
}
BENCHMARK(BM_ProxyEu)->Arg(3)->Arg(6)->Arg(10);

void BM_OsdTrainSteps(benchmark::State& state) {
  const VocabSpec vocab = make_task_vocab(10);
  const QADataset data = make_synthetic_qa(vocab, 6, 1, 9);
  const auto teacher = AutoregressiveModel::random_init(Backend::LinearSoftmax, vocab, 2, 8, 1.0,
                                                        10);
  const GeneratedCorpus corpus = generate_corpus(teacher, data, 2, 1.0, 11);
  const auto student = AutoregressiveModel::zeros(Backend::LinearSoftmax, vocab, 2, 4);
  const StochasticTeacher stochastic =
      StochasticTeacher::perturbed(teacher, LowRankNoiseSpec{2, 0.3, {}});
  TrainConfig cfg{0.5, 32, 8, 1, 0, 8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(osd_train(student, stochastic, corpus, data, cfg));
  }
  state.SetItemsProcessed(state.iterations() * cfg.steps);
}
BENCHMARK(BM_OsdTrainSteps)->Unit(benchmark::kMillisecond);

void BM_VerifyTheory(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_theory(static_cast<int>(state.range(0)), 12));
  }
}
BENCHMARK(BM_VerifyTheory)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
