#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "draftuq/datagen.hpp"
#include "draftuq/errors.hpp"
#include "draftuq/models.hpp"

using namespace draftuq;

namespace {

// Tabular model that deterministically produces the canonical response
// [sep, gold, eos] after any query: content context -> sep, (key, sep) ->
// gold answer for that key, (sep, answer) -> eos.
AutoregressiveModel make_gold_oracle(const VocabSpec& vocab, std::uint64_t task_seed) {
  const int v = vocab.size;
  auto model = AutoregressiveModel::zeros(Backend::Tabular, vocab, 2, 0);
  auto& params = model.mutable_params();
  for (int c1 = 0; c1 < v; ++c1) {
    for (int c2 = 0; c2 < v; ++c2) {
      const std::size_t base = (static_cast<std::size_t>(c1) * v + c2) * v;
      int emit;
      if (c2 == kSepId) {
        const std::vector<int> key{c1};
        emit = gold_answer_for_key(vocab, task_seed, key);
      } else if (c1 == kSepId) {
        emit = kEosId;
      } else {
        emit = kSepId;
      }
      params[base + static_cast<std::size_t>(emit)] = 40.0;
    }
  }
  return model;
}

}  // namespace

TEST_CASE("task vocabulary follows the token convention") {
  const VocabSpec vocab = make_task_vocab(6);
  CHECK(vocab.size == 6);
  CHECK(vocab.bos_id == kBosId);
  CHECK(vocab.eos_id == kEosId);
  CHECK_THROWS_AS(make_task_vocab(4), InvalidInput);  // fewer than two content tokens
}

TEST_CASE("synthetic datasets are deterministic with distinct queries") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset a = make_synthetic_qa(vocab, 5, 1, 42);
  const QADataset b = make_synthetic_qa(vocab, 5, 1, 42);
  REQUIRE(a.size() == 5);
  CHECK(a.task_seed == b.task_seed);
  std::set<std::vector<int>> queries;
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.items[i].query == b.items[i].query);
    CHECK(a.items[i].gold_answer == b.items[i].gold_answer);
    CHECK(queries.insert(a.items[i].query).second);  // pairwise distinct
    CHECK(a.items[i].gold_answer >= kFirstContentId);
    CHECK(a.items[i].gold_answer < vocab.size);
    for (int t : a.items[i].query) {
      CHECK(t >= kFirstContentId);
      CHECK(t < vocab.size);
    }
  }
  const QADataset c = make_synthetic_qa(vocab, 5, 1, 43);
  bool any_differ = false;
  for (int i = 0; i < 5; ++i) any_differ |= (a.items[i].query != c.items[i].query);
  CHECK(any_differ);
}

TEST_CASE("infeasible query counts are rejected") {
  const VocabSpec vocab = make_task_vocab(6);  // three content tokens
  CHECK_THROWS_AS(make_synthetic_qa(vocab, 4, 1, 1), InvalidInput);
  CHECK_NOTHROW(make_synthetic_qa(vocab, 3, 1, 1));
  CHECK_NOTHROW(make_synthetic_qa(vocab, 9, 2, 1));  // 3^2 keys available
}

TEST_CASE("canonical responses and answer extraction agree") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 4, 1, 9);
  for (int i = 0; i < data.size(); ++i) {
    const std::vector<int> resp = canonical_response(data, i);
    REQUIRE(resp.size() == 3);
    CHECK(resp[0] == kSepId);
    CHECK(resp[1] == data.items[i].gold_answer);
    CHECK(resp[2] == kEosId);
    CHECK(extract_answer(resp, kSepId) == data.items[i].gold_answer);
    CHECK(resp[1] == gold_answer_for_key(vocab, data.task_seed, data.items[i].query));
  }
  CHECK(!extract_answer(std::vector<int>{4, kEosId}, kSepId).has_value());
  CHECK(!extract_answer(std::vector<int>{kSepId}, kSepId).has_value());
  // The answer slot is the token after the first separator.
  CHECK(extract_answer(std::vector<int>{5, kSepId, 6, kSepId, 7}, kSepId) == 6);
}

TEST_CASE("corpus shape, ordering, and determinism") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 4, 1, 9);
  const auto teacher = AutoregressiveModel::random_init(Backend::Tabular, vocab, 2, 0, 1.0, 3);
  const GeneratedCorpus a = generate_corpus(teacher, data, 3, 1.0, 50);
  const GeneratedCorpus b = generate_corpus(teacher, data, 3, 1.0, 50);
  REQUIRE(a.records.size() == 12);
  CHECK(a.responses_per_query == 3);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].query_index == static_cast<int>(i / 3));
    CHECK(a.records[i].response == b.records[i].response);
    CHECK(a.records[i].teacher_tag == "base");
  }
}

TEST_CASE("zero-temperature corpora repeat the greedy response") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 4, 1, 9);
  const auto teacher = AutoregressiveModel::random_init(Backend::Tabular, vocab, 2, 0, 1.0, 3);
  const GeneratedCorpus corpus = generate_corpus(teacher, data, 4, 0.0, 50);
  for (std::size_t i = 0; i < corpus.records.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) {
      CHECK(corpus.records[i].response == corpus.records[i + j].response);
    }
  }
}

TEST_CASE("family corpora tag members and draw them uniformly") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 5, 1, 9);
  const auto base = AutoregressiveModel::random_init(Backend::Tabular, vocab, 2, 0, 1.0, 3);
  LowRankNoiseSpec noise;
  noise.rank = 2;
  noise.sigma = 0.2;
  const ModelFamily family = make_target_family(base, 3, noise, 4);
  const GeneratedCorpus corpus = generate_corpus(family, data, 2000, 1.0, 60);
  REQUIRE(corpus.records.size() == 10000);
  std::vector<int> usage(3, 0);
  for (const auto& rec : corpus.records) {
    REQUIRE(rec.teacher_tag.rfind("member:", 0) == 0);
    const int member = std::stoi(rec.teacher_tag.substr(7));
    REQUIRE(member >= 0);
    REQUIRE(member < 3);
    ++usage[static_cast<std::size_t>(member)];
  }
  // Binomial(10^4, 1/3): three standard deviations is ~141.
  const double expected = 10000.0 / 3.0;
  const double limit = 3.0 * std::sqrt(10000.0 * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : usage) CHECK(std::abs(c - expected) <= limit);
}

TEST_CASE("partitions are disjoint, exhaustive, and balanced") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 5, 1, 9);
  const auto teacher = AutoregressiveModel::random_init(Backend::Tabular, vocab, 2, 0, 1.0, 3);
  const GeneratedCorpus corpus = generate_corpus(teacher, data, 2, 1.0, 50);

  const PartitionPlan whole = partition_corpus(corpus, 1, 7);
  CHECK(whole.chunks == 1);
  std::vector<int> all_records(corpus.records.size());
  for (std::size_t i = 0; i < all_records.size(); ++i) all_records[i] = static_cast<int>(i);
  CHECK(whole.chunk_records(0) == all_records);

  for (int s : {2, 3, 4}) {
    const PartitionPlan plan = partition_corpus(corpus, s, 7);
    CHECK(plan.chunks == s);
    std::set<int> seen;
    int min_size = static_cast<int>(corpus.records.size());
    int max_size = 0;
    for (int chunk = 0; chunk < s; ++chunk) {
      const std::vector<int> records = plan.chunk_records(chunk);
      CHECK(std::is_sorted(records.begin(), records.end()));
      min_size = std::min(min_size, static_cast<int>(records.size()));
      max_size = std::max(max_size, static_cast<int>(records.size()));
      for (int r : records) CHECK(seen.insert(r).second);
    }
    CHECK(seen.size() == corpus.records.size());
    CHECK(max_size - min_size <= 1);
    // Deterministic given the seed.
    CHECK(partition_corpus(corpus, s, 7).assignment == plan.assignment);
  }
}

TEST_CASE("a gold-emitting oracle model gets every label right") {
  const VocabSpec vocab = make_task_vocab(7);
  const QADataset data = make_synthetic_qa(vocab, 4, 1, 33);
  const auto oracle = make_gold_oracle(vocab, data.task_seed);
  const auto labels = label_correctness(oracle, data, 3, 1.0, 91);
  REQUIRE(labels.size() == 12);
  for (const auto& s : labels) {
    CHECK(s.label == 1);
    CHECK(extract_answer(s.response, kSepId) == data.items[s.query_index].gold_answer);
  }
  // And the labeling itself is reproducible.
  const auto again = label_correctness(oracle, data, 3, 1.0, 91);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i].response == again[i].response);
    CHECK(labels[i].label == again[i].label);
  }
}

TEST_CASE("line-delimited files round-trip byte for byte") {
  const VocabSpec vocab = make_task_vocab(8);
  const QADataset data = make_synthetic_qa(vocab, 4, 2, 9);
  const std::string dataset_text = dataset_to_jsonl(data);
  const QADataset data_back = dataset_from_jsonl(dataset_text);
  CHECK(dataset_to_jsonl(data_back) == dataset_text);
  CHECK(data_back.size() == data.size());
  CHECK(data_back.task_seed == data.task_seed);
  for (int i = 0; i < data.size(); ++i) {
    CHECK(data_back.items[i].query == data.items[i].query);
    CHECK(data_back.items[i].gold_answer == data.items[i].gold_answer);
  }

  const auto teacher = AutoregressiveModel::random_init(Backend::Tabular, vocab, 2, 0, 1.0, 3);
  const GeneratedCorpus corpus = generate_corpus(teacher, data, 2, 1.0, 50);
  const std::string corpus_text = corpus_to_jsonl(corpus);
  const GeneratedCorpus corpus_back = corpus_from_jsonl(corpus_text);
  CHECK(corpus_to_jsonl(corpus_back) == corpus_text);
  REQUIRE(corpus_back.records.size() == corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    CHECK(corpus_back.records[i].response == corpus.records[i].response);
    CHECK(corpus_back.records[i].teacher_tag == corpus.records[i].teacher_tag);
  }

  const auto labels = label_correctness(teacher, data, 2, 1.0, 91);
  const std::string labels_text = labels_to_jsonl(labels);
  const auto labels_back = labels_from_jsonl(labels_text);
  CHECK(labels_to_jsonl(labels_back) == labels_text);

  const auto path = (std::filesystem::temp_directory_path() / "draftuq_text_test.jsonl").string();
  save_text_file(dataset_text, path);
  CHECK(load_text_file(path) == dataset_text);
  std::filesystem::remove(path);
}
