#include "draftuq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "draftuq/errors.hpp"
#include "draftuq/rng.hpp"
#include "json.hpp"

namespace draftuq {

ProxyTarget ProxyTarget::raw_family_average(ModelFamily family) {
  if (family.members.empty()) throw InvalidInput("proxy family must be nonempty");
  ProxyTarget p;
  p.family_ = std::move(family);
  return p;
}

ProxyTarget ProxyTarget::distilled_mix(AutoregressiveModel model) {
  ProxyTarget p;
  p.model_ = std::move(model);
  return p;
}

Categorical ProxyTarget::dist(std::span<const int> context) const {
  if (model_.has_value()) return model_->next_token_dist(context);
  return predictive_average(*family_, context);
}

const ModelFamily& ProxyTarget::family() const {
  if (!family_.has_value()) throw InvalidInput("proxy is not a raw family average");
  return *family_;
}

const AutoregressiveModel& ProxyTarget::model() const {
  if (!model_.has_value()) throw InvalidInput("proxy is not a distilled model");
  return *model_;
}

EuForms ground_truth_eu_forms(const ModelFamily& family, std::span<const int> context) {
  if (family.members.empty()) throw InvalidInput("ground_truth_eu needs a nonempty family");
  std::vector<Categorical> dists;
  dists.reserve(family.members.size());
  for (const auto& m : family.members) dists.push_back(m.next_token_dist(context));
  const Categorical bar = mixture(std::span<const Categorical>(dists));

  EuForms forms;
  std::vector<double> kl_terms;
  std::vector<double> entropy_terms;
  kl_terms.reserve(dists.size());
  entropy_terms.reserve(dists.size());
  for (const auto& d : dists) {
    kl_terms.push_back(kl(d, bar));
    entropy_terms.push_back(entropy(d));
  }
  forms.kl_form = order_invariant_sum(std::move(kl_terms)) / static_cast<double>(dists.size());
  forms.entropy_form =
      entropy(bar) - order_invariant_sum(std::move(entropy_terms)) / static_cast<double>(dists.size());
  return forms;
}

double ground_truth_eu(const ModelFamily& family, std::span<const int> context) {
  return ground_truth_eu_forms(family, context).kl_form;
}

TokenEU proxy_eu(std::span<const Categorical> draft_dists, const Categorical& proxy) {
  if (draft_dists.size() < 2) throw InvalidInput("proxy_eu needs at least 2 draft distributions");
  TokenEU eu;
  eu.variance_proxy = jsd(draft_dists);
  const Categorical mix = mixture(draft_dists);
  eu.bias_proxy = kl(mix, proxy);
  std::vector<double> kl_terms;
  kl_terms.reserve(draft_dists.size());
  for (const auto& q : draft_dists) kl_terms.push_back(kl(q, proxy));
  eu.estimated_total =
      order_invariant_sum(std::move(kl_terms)) / static_cast<double>(draft_dists.size());
  eu.support_violation = std::isinf(eu.bias_proxy) || std::isinf(eu.estimated_total);
  return eu;
}

UpperBoundResult upper_bound_identity(const ModelFamily& target_family,
                                      std::span<const Categorical> draft_dists,
                                      std::span<const int> context) {
  if (target_family.members.empty()) throw InvalidInput("target family must be nonempty");
  if (draft_dists.empty()) throw InvalidInput("draft distributions must be nonempty");
  const Categorical q_mix = mixture(draft_dists);

  std::vector<Categorical> dists;
  dists.reserve(target_family.members.size());
  for (const auto& m : target_family.members) dists.push_back(m.next_token_dist(context));
  const Categorical p_bar = mixture(std::span<const Categorical>(dists));

  UpperBoundResult r;
  std::vector<double> kl_terms;
  kl_terms.reserve(dists.size());
  for (const auto& p : dists) kl_terms.push_back(kl(p, q_mix));
  r.lhs = order_invariant_sum(std::move(kl_terms)) / static_cast<double>(dists.size());
  r.eu = ground_truth_eu(target_family, context);
  r.gap = kl(p_bar, q_mix);
  return r;
}

std::vector<TokenEU> token_eu_trace(const ModelFamily& drafts, const ProxyTarget& proxy,
                                    const ModelFamily* target_family,
                                    std::span<const int> sequence, std::span<const int> prompt) {
  if (sequence.empty()) throw InvalidInput("token_eu_trace needs a nonempty sequence");
  if (drafts.members.size() < 2) throw InvalidInput("token_eu_trace needs at least 2 drafts");
  std::vector<TokenEU> trace;
  trace.reserve(sequence.size());
  std::vector<int> prefix(prompt.begin(), prompt.end());
  for (int t = 0; t < static_cast<int>(sequence.size()); ++t) {
    std::vector<Categorical> dists;
    dists.reserve(drafts.members.size());
    for (const auto& m : drafts.members) dists.push_back(m.next_token_dist(prefix));
    TokenEU eu = proxy_eu(std::span<const Categorical>(dists), proxy.dist(prefix));
    eu.position = t;
    if (target_family != nullptr) eu.ground_truth = ground_truth_eu(*target_family, prefix);
    trace.push_back(eu);
    prefix.push_back(sequence[static_cast<std::size_t>(t)]);
  }
  return trace;
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Sum: return "sum";
    case Aggregation::Max: return "max";
  }
  throw InvalidInput("unknown aggregation");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  if (s == "max") return Aggregation::Max;
  throw InvalidInput("unknown aggregation: " + s);
}

double sequence_eu(std::span<const TokenEU> trace, Aggregation aggregation) {
  if (trace.empty()) throw InvalidInput("sequence_eu needs a nonempty trace");
  double sum = 0.0;
  double best = trace[0].estimated_total;
  for (const auto& t : trace) {
    sum += t.estimated_total;
    best = std::max(best, t.estimated_total);
  }
  switch (aggregation) {
    case Aggregation::Mean: return sum / static_cast<double>(trace.size());
    case Aggregation::Sum: return sum;
    case Aggregation::Max: return best;
  }
  throw InvalidInput("unknown aggregation");
}

ModelFamily make_konly_family(const AutoregressiveModel& draft, int k,
                              const LowRankNoiseSpec& noise, std::uint64_t seed) {
  if (k < 2) throw InvalidInput("K-only ensemble needs k >= 2");
  ModelFamily family;
  family.provenance = Provenance::KOnly;
  family.members.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    family.members.push_back(perturb_low_rank(draft, noise, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return family;
}

std::vector<Categorical> konly_draft_dists(const AutoregressiveModel& draft, int k,
                                           const LowRankNoiseSpec& noise, std::uint64_t seed,
                                           std::span<const int> context) {
  const ModelFamily family = make_konly_family(draft, k, noise, seed);
  std::vector<Categorical> dists;
  dists.reserve(family.members.size());
  for (const auto& m : family.members) dists.push_back(m.next_token_dist(context));
  return dists;
}

std::string traces_to_jsonl(std::span<const std::vector<TokenEU>> traces) {
  using ordered_json = nlohmann::ordered_json;
  std::ostringstream out;
  std::size_t total = 0;
  for (const auto& t : traces) total += t.size();
  ordered_json meta;
  meta["format_version"] = 1;
  meta["n_sequences"] = traces.size();
  meta["n_tokens"] = total;
  out << meta.dump() << "\n";
  for (std::size_t s = 0; s < traces.size(); ++s) {
    for (const auto& t : traces[s]) {
      ordered_json j;
      j["sequence_id"] = s;
      j["position"] = t.position;
      j["variance_proxy"] = t.variance_proxy;
      j["bias_proxy"] = t.bias_proxy;
      j["estimated_total"] = t.estimated_total;
      if (t.ground_truth.has_value()) {
        j["ground_truth"] = *t.ground_truth;
      } else {
        j["ground_truth"] = nullptr;
      }
      j["support_violation"] = t.support_violation;
      out << j.dump() << "\n";
    }
  }
  return out.str();
}

std::vector<std::vector<TokenEU>> traces_from_jsonl(const std::string& text) {
  using ordered_json = nlohmann::ordered_json;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty trace file");
  std::size_t n_sequences = 0;
  try {
    const auto meta = ordered_json::parse(line);
    n_sequences = meta.at("n_sequences").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed trace meta: ") + e.what());
  }
  std::vector<std::vector<TokenEU>> traces(n_sequences);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      const auto s = j.at("sequence_id").get<std::size_t>();
      if (s >= n_sequences) throw InvalidInput("trace sequence id out of range");
      TokenEU t;
      t.position = j.at("position").get<int>();
      t.variance_proxy = j.at("variance_proxy").get<double>();
      t.bias_proxy = j.at("bias_proxy").get<double>();
      t.estimated_total = j.at("estimated_total").get<double>();
      if (!j.at("ground_truth").is_null()) t.ground_truth = j.at("ground_truth").get<double>();
      t.support_violation = j.at("support_violation").get<bool>();
      traces[s].push_back(t);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(std::string("malformed trace line: ") + e.what());
    }
  }
  return traces;
}

}  // namespace draftuq
