#include "draftuq/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "draftuq/errors.hpp"
#include "draftuq/rng.hpp"
#include "json.hpp"

namespace draftuq {

namespace {

using ordered_json = nlohmann::ordered_json;

int content_count(const VocabSpec& vocab) { return vocab.size - kFirstContentId; }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

ordered_json parse_line(const std::string& line, const char* what) {
  try {
    return ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed ") + what + " line: " + e.what());
  }
}

std::vector<int> token_array(const ordered_json& j) {
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& t : j) out.push_back(t.get<int>());
  return out;
}

}  // namespace

VocabSpec make_task_vocab(int v) {
  if (v < 5) throw InvalidInput("task vocabulary needs size >= 5 (bos, eos, sep, 2+ content tokens)");
  VocabSpec vocab;
  vocab.size = v;
  vocab.bos_id = kBosId;
  vocab.eos_id = kEosId;
  vocab.validate();
  return vocab;
}

int gold_answer_for_key(const VocabSpec& vocab, std::uint64_t task_seed, std::span<const int> key) {
  const int c = content_count(vocab);
  if (c < 1) throw InvalidInput("vocabulary has no content tokens");
  std::uint64_t h = mix64(task_seed);
  for (int t : key) h = derive_seed(h, static_cast<std::uint64_t>(t));
  return kFirstContentId + static_cast<int>(h % static_cast<std::uint64_t>(c));
}

QADataset make_synthetic_qa(const VocabSpec& vocab, int n_queries, int key_len,
                            std::uint64_t seed) {
  if (n_queries < 1) throw InvalidInput("n_queries must be >= 1");
  if (key_len < 1) throw InvalidInput("key_len must be >= 1");
  const int c = content_count(vocab);
  if (c < 2) throw InvalidInput("task vocabulary needs at least 2 content tokens");

  double key_space = 1.0;
  for (int i = 0; i < key_len; ++i) key_space *= c;
  if (static_cast<double>(n_queries) > key_space) {
    throw InvalidInput("n_queries exceeds the number of distinct keys");
  }

  QADataset data;
  data.vocab = vocab;
  data.sep_id = kSepId;
  data.key_len = key_len;
  data.task_seed = seed;

  SplitRng rng(derive_seed(seed, 0));
  std::set<std::vector<int>> seen;
  while (static_cast<int>(data.items.size()) < n_queries) {
    std::vector<int> key(static_cast<std::size_t>(key_len));
    for (int& t : key) t = kFirstContentId + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(c)));
    if (!seen.insert(key).second) continue;
    QAItem item;
    item.gold_answer = gold_answer_for_key(vocab, seed, key);
    item.query = std::move(key);
    data.items.push_back(std::move(item));
  }
  return data;
}

std::vector<int> canonical_response(const QADataset& data, int item_index) {
  if (item_index < 0 || item_index >= data.size()) throw InvalidInput("item index out of range");
  return {data.sep_id, data.items[static_cast<std::size_t>(item_index)].gold_answer,
          data.vocab.eos_id};
}

std::optional<int> extract_answer(std::span<const int> response, int sep_id) {
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] == sep_id) {
      if (i + 1 < response.size()) return response[i + 1];
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

template <typename SampleFn>
GeneratedCorpus generate_corpus_impl(const QADataset& data, int r, SampleFn&& sample) {
  if (r < 1) throw InvalidInput("responses per query must be >= 1");
  GeneratedCorpus corpus;
  corpus.responses_per_query = r;
  corpus.records.reserve(static_cast<std::size_t>(data.size()) * r);
  for (int qi = 0; qi < data.size(); ++qi) {
    for (int j = 0; j < r; ++j) {
      const int record_index = qi * r + j;
      corpus.records.push_back(sample(qi, record_index));
    }
  }
  return corpus;
}

}  // namespace

GeneratedCorpus generate_corpus(const AutoregressiveModel& teacher, const QADataset& data, int r,
                                double temperature, std::uint64_t seed, int max_len) {
  return generate_corpus_impl(data, r, [&](int qi, int record_index) {
    CorpusRecord rec;
    rec.query_index = qi;
    rec.teacher_tag = "base";
    rec.response = sample_sequence(teacher, data.items[static_cast<std::size_t>(qi)].query, max_len,
                                   temperature, derive_seed(seed, static_cast<std::uint64_t>(record_index)));
    return rec;
  });
}

GeneratedCorpus generate_corpus(const ModelFamily& teacher, const QADataset& data, int r,
                                double temperature, std::uint64_t seed, int max_len) {
  if (teacher.members.empty()) throw InvalidInput("teacher family is empty");
  return generate_corpus_impl(data, r, [&](int qi, int record_index) {
    const std::uint64_t record_seed = derive_seed(seed, static_cast<std::uint64_t>(record_index));
    SplitRng rng(record_seed);
    const auto member = static_cast<std::size_t>(rng.next_below(teacher.members.size()));
    CorpusRecord rec;
    rec.query_index = qi;
    rec.teacher_tag = "member:" + std::to_string(member);
    rec.response = sample_sequence(teacher.members[member], data.items[static_cast<std::size_t>(qi)].query,
                                   max_len, temperature, derive_seed(record_seed, 1));
    return rec;
  });
}

std::vector<int> PartitionPlan::chunk_records(int chunk) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    if (assignment[static_cast<std::size_t>(i)] == chunk) out.push_back(i);
  }
  return out;
}

PartitionPlan partition_corpus(const GeneratedCorpus& corpus, int s, std::uint64_t seed) {
  const int n = static_cast<int>(corpus.records.size());
  if (s < 1 || s > n) throw InvalidInput("partition count must be in [1, record count]");
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  SplitRng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  PartitionPlan plan;
  plan.chunks = s;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) plan.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i % s;
  return plan;
}

std::vector<LabeledSample> label_correctness(const AutoregressiveModel& model,
                                             const QADataset& data, int samples_per_query,
                                             double temperature, std::uint64_t seed, int max_len) {
  if (samples_per_query < 1) throw InvalidInput("samples_per_query must be >= 1");
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(data.size()) * samples_per_query);
  for (int qi = 0; qi < data.size(); ++qi) {
    const auto& item = data.items[static_cast<std::size_t>(qi)];
    for (int run = 0; run < samples_per_query; ++run) {
      LabeledSample sample;
      sample.query_index = qi;
      sample.run_id = run;
      sample.response = sample_sequence(
          model, item.query, max_len, temperature,
          derive_seed(seed, static_cast<std::uint64_t>(qi) * samples_per_query + run));
      const auto answer = extract_answer(sample.response, data.sep_id);
      sample.label = (answer.has_value() && *answer == item.gold_answer) ? 1 : 0;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

std::string dataset_to_jsonl(const QADataset& data) {
  std::ostringstream out;
  ordered_json meta;
  meta["format_version"] = 1;
  meta["V"] = data.vocab.size;
  meta["bos_id"] = data.vocab.bos_id;
  meta["eos_id"] = data.vocab.eos_id;
  meta["sep_id"] = data.sep_id;
  meta["key_len"] = data.key_len;
  meta["task_seed"] = data.task_seed;
  meta["n_items"] = data.size();
  out << meta.dump() << "\n";
  for (const auto& item : data.items) {
    ordered_json j;
    j["query"] = item.query;
    j["gold_answer"] = item.gold_answer;
    out << j.dump() << "\n";
  }
  return out.str();
}

QADataset dataset_from_jsonl(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InvalidInput("empty dataset file");
  const auto meta = parse_line(lines[0], "dataset meta");
  QADataset data;
  try {
    data.vocab.size = meta.at("V").get<int>();
    data.vocab.bos_id = meta.at("bos_id").get<int>();
    data.vocab.eos_id = meta.at("eos_id").get<int>();
    data.sep_id = meta.at("sep_id").get<int>();
    data.key_len = meta.at("key_len").get<int>();
    data.task_seed = meta.at("task_seed").get<std::uint64_t>();
    const auto n = meta.at("n_items").get<int>();
    if (static_cast<int>(lines.size()) != n + 1) throw InvalidInput("dataset line count mismatch");
    for (int i = 0; i < n; ++i) {
      const auto j = parse_line(lines[static_cast<std::size_t>(i) + 1], "dataset record");
      QAItem item;
      item.query = token_array(j.at("query"));
      item.gold_answer = j.at("gold_answer").get<int>();
      data.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed dataset: ") + e.what());
  }
  data.vocab.validate();
  return data;
}

std::string corpus_to_jsonl(const GeneratedCorpus& corpus) {
  std::ostringstream out;
  ordered_json meta;
  meta["format_version"] = 1;
  meta["responses_per_query"] = corpus.responses_per_query;
  meta["n_records"] = corpus.records.size();
  out << meta.dump() << "\n";
  for (const auto& rec : corpus.records) {
    ordered_json j;
    j["query_index"] = rec.query_index;
    j["response"] = rec.response;
    j["teacher_tag"] = rec.teacher_tag;
    out << j.dump() << "\n";
  }
  return out.str();
}

GeneratedCorpus corpus_from_jsonl(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InvalidInput("empty corpus file");
  const auto meta = parse_line(lines[0], "corpus meta");
  GeneratedCorpus corpus;
  try {
    corpus.responses_per_query = meta.at("responses_per_query").get<int>();
    const auto n = meta.at("n_records").get<int>();
    if (static_cast<int>(lines.size()) != n + 1) throw InvalidInput("corpus line count mismatch");
    for (int i = 0; i < n; ++i) {
      const auto j = parse_line(lines[static_cast<std::size_t>(i) + 1], "corpus record");
      CorpusRecord rec;
      rec.query_index = j.at("query_index").get<int>();
      rec.response = token_array(j.at("response"));
      rec.teacher_tag = j.at("teacher_tag").get<std::string>();
      corpus.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed corpus: ") + e.what());
  }
  return corpus;
}

std::string labels_to_jsonl(std::span<const LabeledSample> labels) {
  std::ostringstream out;
  ordered_json meta;
  meta["format_version"] = 1;
  meta["n_records"] = labels.size();
  out << meta.dump() << "\n";
  for (const auto& s : labels) {
    ordered_json j;
    j["query_index"] = s.query_index;
    j["response"] = s.response;
    j["label"] = s.label;
    j["run_id"] = s.run_id;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<LabeledSample> labels_from_jsonl(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InvalidInput("empty labels file");
  const auto meta = parse_line(lines[0], "labels meta");
  std::vector<LabeledSample> out;
  try {
    const auto n = meta.at("n_records").get<int>();
    if (static_cast<int>(lines.size()) != n + 1) throw InvalidInput("labels line count mismatch");
    for (int i = 0; i < n; ++i) {
      const auto j = parse_line(lines[static_cast<std::size_t>(i) + 1], "labels record");
      LabeledSample s;
      s.query_index = j.at("query_index").get<int>();
      s.response = token_array(j.at("response"));
      s.label = j.at("label").get<int>();
      s.run_id = j.at("run_id").get<int>();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed labels: ") + e.what());
  }
  return out;
}

void save_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open file for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InvalidInput("failed writing file: " + path);
}

std::string load_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace draftuq
