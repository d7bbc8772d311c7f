#pragma once

// Synthetic task construction and teacher-generated corpora.
//
// The task is a fixed key -> answer lookup: a query is a sequence of content
// tokens (the key), the canonical response is [sep, answer, eos], and the
// answer is a deterministic hash of (task_seed, key). Correctness of any
// response is exactly checkable: the token immediately after the first sep
// must equal the gold answer. Token id convention: bos = 0, eos = 1, sep = 2,
// content tokens 3..V-1.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "draftuq/models.hpp"

namespace draftuq {

inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kFirstContentId = 3;
inline constexpr int kDefaultResponseLen = 8;

// VocabSpec following the task token convention; requires v >= 5 so at least
// two content tokens exist.
VocabSpec make_task_vocab(int v);

struct QAItem {
  std::vector<int> query;  // the key: key_len content tokens
  int gold_answer = 0;     // a content token
};

struct QADataset {
  VocabSpec vocab;
  int sep_id = kSepId;
  int key_len = 1;
  std::uint64_t task_seed = 0;
  std::vector<QAItem> items;

  int size() const { return static_cast<int>(items.size()); }
};

struct CorpusRecord {
  int query_index = 0;
  std::vector<int> response;
  std::string teacher_tag;  // "base" or "member:<k>"
};

struct GeneratedCorpus {
  std::vector<CorpusRecord> records;
  int responses_per_query = 0;
};

struct PartitionPlan {
  std::vector<int> assignment;  // record index -> chunk id in [0, chunks)
  int chunks = 1;

  std::vector<int> chunk_records(int chunk) const;  // record indices, ascending
};

struct LabeledSample {
  int query_index = 0;
  std::vector<int> response;
  int label = 0;  // 1 iff the answer-position token equals gold_answer
  int run_id = 0;
};

// n_queries distinct random keys with hash-derived gold answers; deterministic
// given seed. Throws InvalidInput when n_queries exceeds the key space.
QADataset make_synthetic_qa(const VocabSpec& vocab, int n_queries, int key_len, std::uint64_t seed);

// The answer the task assigns to an arbitrary key (exposed for oracle tests).
int gold_answer_for_key(const VocabSpec& vocab, std::uint64_t task_seed, std::span<const int> key);

// [sep, gold_answer, eos] for a dataset item.
std::vector<int> canonical_response(const QADataset& data, int item_index);

// The token immediately after the first sep, if any.
std::optional<int> extract_answer(std::span<const int> response, int sep_id);

// r sampled responses per query. The family overload draws a teacher member
// uniformly per response (stochastic-teacher corpus). Records are ordered by
// (query_index, replica); record i uses the rng stream derive_seed(seed, i).
GeneratedCorpus generate_corpus(const AutoregressiveModel& teacher, const QADataset& data, int r,
                                double temperature, std::uint64_t seed,
                                int max_len = kDefaultResponseLen);
GeneratedCorpus generate_corpus(const ModelFamily& teacher, const QADataset& data, int r,
                                double temperature, std::uint64_t seed,
                                int max_len = kDefaultResponseLen);

// Balanced random disjoint split into s chunks (sizes differ by <= 1).
PartitionPlan partition_corpus(const GeneratedCorpus& corpus, int s, std::uint64_t seed);

// samples_per_query independent generation runs per query, each labeled by
// exact answer comparison.
std::vector<LabeledSample> label_correctness(const AutoregressiveModel& model,
                                             const QADataset& data, int samples_per_query,
                                             double temperature, std::uint64_t seed,
                                             int max_len = kDefaultResponseLen);

// Line-delimited serialization: a meta line followed by one record per line,
// fixed field order, integer token arrays.
std::string dataset_to_jsonl(const QADataset& data);
QADataset dataset_from_jsonl(const std::string& text);
std::string corpus_to_jsonl(const GeneratedCorpus& corpus);
GeneratedCorpus corpus_from_jsonl(const std::string& text);
std::string labels_to_jsonl(std::span<const LabeledSample> labels);
std::vector<LabeledSample> labels_from_jsonl(const std::string& text);

void save_text_file(const std::string& text, const std::string& path);
std::string load_text_file(const std::string& path);

}  // namespace draftuq
