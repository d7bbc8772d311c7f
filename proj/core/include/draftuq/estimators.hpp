#pragma once

// Epistemic-uncertainty estimators.
//
// Ground truth over a finite target family {p_k} with average p_bar:
//   EU = mean_k kl(p_k, p_bar) = entropy(p_bar) - mean_k entropy(p_k),
// both forms computed and returned so their agreement is checkable.
//
// The draft-based estimator at one context, for drafts {q_k} and a proxy p:
//   estimated_total = mean_k kl(q_k, p)
//                   = jsd(q_k)                (variance proxy)
//                   + kl(mixture(q_k), p)     (bias proxy)
// an exact decomposition; all three terms are computed independently so the
// identity is a genuine numerical check, not an assignment.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "draftuq/models.hpp"
#include "draftuq/simplex.hpp"

namespace draftuq {

struct TokenEU {
  int position = 0;
  double variance_proxy = 0.0;
  double bias_proxy = 0.0;
  double estimated_total = 0.0;
  std::optional<double> ground_truth;
  bool support_violation = false;  // bias term hit +infinity; excluded from aggregates
};

struct SxMSpec {
  int s = 2;
  int m = 3;
};

struct KOnlySpec {
  int k = 3;
  LowRankNoiseSpec noise;
};

using EnsembleConfig = std::variant<SxMSpec, KOnlySpec>;

// The reference distribution for the bias term: either the pointwise average
// of an explicit family (raw target samples) or a single distilled model.
class ProxyTarget {
 public:
  static ProxyTarget raw_family_average(ModelFamily family);
  static ProxyTarget distilled_mix(AutoregressiveModel model);

  bool is_distilled() const { return model_.has_value(); }
  Categorical dist(std::span<const int> context) const;
  const ModelFamily& family() const;
  const AutoregressiveModel& model() const;

 private:
  ProxyTarget() = default;
  std::optional<ModelFamily> family_;
  std::optional<AutoregressiveModel> model_;
};

struct EuForms {
  double kl_form = 0.0;
  double entropy_form = 0.0;
};

EuForms ground_truth_eu_forms(const ModelFamily& family, std::span<const int> context);
double ground_truth_eu(const ModelFamily& family, std::span<const int> context);

TokenEU proxy_eu(std::span<const Categorical> draft_dists, const Categorical& proxy);

struct UpperBoundResult {
  double lhs = 0.0;  // mean_k kl(p_k, q_mix)
  double eu = 0.0;
  double gap = 0.0;  // kl(p_bar, q_mix)
};

UpperBoundResult upper_bound_identity(const ModelFamily& target_family,
                                      std::span<const Categorical> draft_dists,
                                      std::span<const int> context);

// One TokenEU per position t of `sequence`, every model conditioned on
// prompt + sequence[0..t); ground_truth filled when target_family is given.
std::vector<TokenEU> token_eu_trace(const ModelFamily& drafts, const ProxyTarget& proxy,
                                    const ModelFamily* target_family,
                                    std::span<const int> sequence, std::span<const int> prompt);

enum class Aggregation { Mean, Sum, Max };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

double sequence_eu(std::span<const TokenEU> trace, Aggregation aggregation = Aggregation::Mean);

// K independently perturbed copies of a single draft (inference-time
// ensemble); copy i is seeded by derive_seed(seed, i).
ModelFamily make_konly_family(const AutoregressiveModel& draft, int k,
                              const LowRankNoiseSpec& noise, std::uint64_t seed);
std::vector<Categorical> konly_draft_dists(const AutoregressiveModel& draft, int k,
                                           const LowRankNoiseSpec& noise, std::uint64_t seed,
                                           std::span<const int> context);

// EU trace file: meta line then one TokenEU per line with its sequence id.
std::string traces_to_jsonl(std::span<const std::vector<TokenEU>> traces);
std::vector<std::vector<TokenEU>> traces_from_jsonl(const std::string& text);

}  // namespace draftuq
