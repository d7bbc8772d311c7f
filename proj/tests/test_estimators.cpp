#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "draftuq/errors.hpp"
#include "draftuq/estimators.hpp"
#include "draftuq/models.hpp"
#include "draftuq/rng.hpp"
#include "draftuq/simplex.hpp"
#include "draftuq/verify.hpp"

using namespace draftuq;

namespace {

VocabSpec plain_vocab(int v) { return VocabSpec{v, 0, -1}; }

ModelFamily random_family(int v, int members, double sigma, std::uint64_t seed) {
  const auto base = AutoregressiveModel::random_init(Backend::Tabular, plain_vocab(v), 1, 0,
                                                     1.0, derive_seed(seed, 900));
  LowRankNoiseSpec noise;
  noise.rank = 2;
  noise.sigma = sigma;
  return make_target_family(base, members, noise, seed);
}

}  // namespace

TEST_CASE("ground-truth uncertainty: identical members give exactly zero") {
  const ModelFamily family = random_family(5, 1, 0.0, 3);
  const ModelFamily same{{family.members[0], family.members[0], family.members[0]},
                         Provenance::TargetFamily};
  const std::vector<int> context{2};
  const EuForms forms = ground_truth_eu_forms(same, context);
  CHECK(forms.kl_form == 0.0);
  CHECK(std::abs(forms.entropy_form) <= 1e-15);
}

TEST_CASE("both ground-truth forms agree within floating-point noise") {
  SplitRng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_below(15));
    const ModelFamily family = random_family(v, 3, 0.7, derive_seed(50, trial));
    const std::vector<int> context{static_cast<int>(rng.next_below(v))};
    const EuForms forms = ground_truth_eu_forms(family, context);
    CHECK(std::abs(forms.kl_form - forms.entropy_form) <= 1e-12);
    CHECK(forms.kl_form >= 0.0);
    CHECK(forms.kl_form <= std::log(static_cast<double>(v)) + 1e-12);
  }
}

TEST_CASE("estimator outputs are invariant to member reordering") {
  const ModelFamily family = random_family(6, 4, 0.8, 9);
  const std::vector<int> context{1};
  ModelFamily reversed = family;
  std::reverse(reversed.members.begin(), reversed.members.end());
  CHECK(ground_truth_eu(family, context) == ground_truth_eu(reversed, context));

  std::vector<Categorical> drafts;
  for (const auto& m : family.members) drafts.push_back(m.next_token_dist(context));
  const Categorical proxy = Categorical::uniform(6);
  const TokenEU forward = proxy_eu(drafts, proxy);
  std::vector<Categorical> drafts_reversed(drafts.rbegin(), drafts.rend());
  const TokenEU backward = proxy_eu(drafts_reversed, proxy);
  CHECK(forward.variance_proxy == backward.variance_proxy);
  CHECK(forward.bias_proxy == backward.bias_proxy);
  CHECK(forward.estimated_total == backward.estimated_total);
}

TEST_CASE("proxy estimator: all drafts equal to the proxy gives all zeros") {
  const Categorical p({0.3, 0.2, 0.5});
  const std::vector<Categorical> drafts{p, p, p};
  const TokenEU eu = proxy_eu(drafts, p);
  CHECK(eu.variance_proxy == 0.0);
  CHECK(eu.bias_proxy <= 1e-15);
  CHECK(eu.estimated_total <= 1e-15);
  CHECK(!eu.support_violation);
}

TEST_CASE("proxy estimator decomposes exactly") {
  SplitRng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_below(31));
    const int k = 2 + static_cast<int>(rng.next_below(7));
    std::vector<Categorical> drafts;
    for (int j = 0; j < k; ++j) {
      std::vector<double> logits(static_cast<std::size_t>(v));
      for (auto& x : logits) x = 2.0 * rng.next_gaussian();
      drafts.push_back(softmax_normalize(logits));
    }
    std::vector<double> proxy_logits(static_cast<std::size_t>(v));
    for (auto& x : proxy_logits) x = 2.0 * rng.next_gaussian();
    const Categorical proxy = softmax_normalize(proxy_logits);
    const TokenEU eu = proxy_eu(drafts, proxy);
    CHECK(eu.variance_proxy >= 0.0);
    CHECK(eu.bias_proxy >= 0.0);
    CHECK(std::abs(eu.estimated_total - (eu.variance_proxy + eu.bias_proxy)) <= 1e-12);
  }
}

TEST_CASE("support violations are flagged rather than clamped") {
  const std::vector<Categorical> drafts{Categorical({0.5, 0.5}), Categorical({0.4, 0.6})};
  const TokenEU eu = proxy_eu(drafts, Categorical::point_mass(2, 0));
  CHECK(eu.support_violation);
  CHECK(std::isinf(eu.bias_proxy));
}

TEST_CASE("upper-bound identity: drafts at the family average close the gap") {
  const ModelFamily family = random_family(5, 3, 0.6, 17);
  const std::vector<int> context{4};
  const Categorical p_bar = predictive_average(family, context);
  const std::vector<Categorical> drafts{p_bar, p_bar, p_bar};
  const UpperBoundResult r = upper_bound_identity(family, drafts, context);
  CHECK(r.gap <= 1e-12);
  CHECK(std::abs(r.lhs - r.eu) <= 1e-12);
}

TEST_CASE("upper bound always dominates the ground truth") {
  SplitRng rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelFamily family = random_family(6, 3, 0.7, derive_seed(60, trial));
    const std::vector<int> context{static_cast<int>(rng.next_below(6))};
    std::vector<Categorical> drafts;
    for (int j = 0; j < 4; ++j) {
      std::vector<double> logits(6);
      for (auto& x : logits) x = rng.next_gaussian();
      drafts.push_back(softmax_normalize(logits));
    }
    const UpperBoundResult r = upper_bound_identity(family, drafts, context);
    CHECK(r.lhs >= r.eu - 1e-12);
    CHECK(std::abs(r.lhs - (r.eu + r.gap)) <= 1e-12);
  }
}

TEST_CASE("raw-family proxies match independently computed bias terms") {
  const ModelFamily family = random_family(6, 3, 0.6, 23);
  const ProxyTarget proxy = ProxyTarget::raw_family_average(family);
  CHECK(!proxy.is_distilled());
  const std::vector<int> context{3};

  std::vector<Categorical> drafts;
  SplitRng rng(24);
  for (int j = 0; j < 3; ++j) {
    std::vector<double> logits(6);
    for (auto& x : logits) x = rng.next_gaussian();
    drafts.push_back(softmax_normalize(logits));
  }
  const TokenEU eu = proxy_eu(drafts, proxy.dist(context));
  const double expected = kl(mixture(drafts), predictive_average(family, context));
  CHECK(std::abs(eu.bias_proxy - expected) <= 1e-12);
}

TEST_CASE("token traces: single-token sequences and degenerate families") {
  const ModelFamily family = random_family(5, 2, 0.5, 29);
  const ProxyTarget proxy = ProxyTarget::raw_family_average(family);
  const std::vector<int> prompt{1};
  const std::vector<int> sequence{2};
  const auto trace = token_eu_trace(family, proxy, &family, sequence, prompt);
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].position == 0);
  CHECK(trace[0].ground_truth.has_value());

  // Drafts == proxy == one identical model everywhere: the whole trace is zero.
  const AutoregressiveModel single = family.members[0];
  const ModelFamily clones{{single, single}, Provenance::DraftFamily};
  const ProxyTarget same = ProxyTarget::distilled_mix(single);
  CHECK(same.is_distilled());
  const std::vector<int> longer{2, 4, 0};
  const auto zero_trace = token_eu_trace(clones, same, nullptr, longer, prompt);
  REQUIRE(zero_trace.size() == 3);
  for (const auto& eu : zero_trace) {
    CHECK(eu.variance_proxy == 0.0);
    CHECK(eu.bias_proxy <= 1e-15);
    CHECK(eu.estimated_total <= 1e-15);
    CHECK(!eu.ground_truth.has_value());
  }
}

TEST_CASE("sequence aggregation modes") {
  std::vector<TokenEU> trace(2);
  trace[0].estimated_total = 0.1;
  trace[1].estimated_total = 0.3;
  CHECK(sequence_eu(std::vector<TokenEU>{trace[0]}) == 0.1);
  CHECK(sequence_eu(trace, Aggregation::Mean) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(sequence_eu(trace, Aggregation::Sum) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(sequence_eu(trace, Aggregation::Max) == 0.3);
  CHECK(aggregation_from_string("mean") == Aggregation::Mean);
  CHECK(aggregation_from_string(to_string(Aggregation::Max)) == Aggregation::Max);
  CHECK_THROWS_AS(aggregation_from_string("median"), InvalidInput);
}

TEST_CASE("inference-time perturbation ensembles") {
  const auto draft = AutoregressiveModel::random_init(Backend::LinearSoftmax, plain_vocab(6), 2,
                                                      3, 1.0, 31);
  const std::vector<int> context{2, 5};
  LowRankNoiseSpec zero_noise{1, 0.0, {}};
  const auto same_dists = konly_draft_dists(draft, 4, zero_noise, 77, context);
  REQUIRE(same_dists.size() == 4);
  const TokenEU eu = proxy_eu(same_dists, draft.next_token_dist(context));
  CHECK(eu.variance_proxy == 0.0);

  LowRankNoiseSpec noise{2, 0.4, {}};
  const auto a = konly_draft_dists(draft, 4, noise, 77, context);
  const auto b = konly_draft_dists(draft, 4, noise, 77, context);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  const ModelFamily konly = make_konly_family(draft, 4, noise, 77);
  CHECK(konly.provenance == Provenance::KOnly);
  REQUIRE(konly.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(konly.members[static_cast<std::size_t>(i)].next_token_dist(context) ==
          a[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("trace files round-trip byte for byte") {
  const ModelFamily family = random_family(5, 3, 0.6, 37);
  const ProxyTarget proxy = ProxyTarget::raw_family_average(family);
  const std::vector<int> prompt{1};
  std::vector<std::vector<TokenEU>> traces;
  traces.push_back(token_eu_trace(family, proxy, &family, std::vector<int>{2, 3}, prompt));
  traces.push_back(token_eu_trace(family, proxy, nullptr, std::vector<int>{4}, prompt));
  const std::string text = traces_to_jsonl(traces);
  const auto back = traces_from_jsonl(text);
  CHECK(traces_to_jsonl(back) == text);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].size() == 2);
  CHECK(back[0][1].estimated_total == traces[0][1].estimated_total);
  CHECK(back[0][0].ground_truth == traces[0][0].ground_truth);
  CHECK(!back[1][0].ground_truth.has_value());
}

TEST_CASE("the identity checker passes clean and fails when corrupted") {
  const TheoryCheckResult clean = verify_theory(200, 7);
  CHECK(clean.trials == 200);
  REQUIRE(clean.identities.size() == 4);
  CHECK(clean.passed(1e-10));
  CHECK(clean.max_residual() <= 1e-10);

  const TheoryCheckResult corrupted = verify_theory(200, 7, /*corrupt_for_self_test=*/true);
  CHECK(!corrupted.passed(1e-10));

  const std::string report = theory_report_text(clean, 1e-10);
  CHECK(report.find("PASS") != std::string::npos);
}
