#include "draftuq/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "draftuq/errors.hpp"
#include "draftuq/rng.hpp"
#include "draftuq/simplex.hpp"

namespace draftuq {

namespace {

Categorical random_positive_dist(SplitRng& rng, int v) {
  std::vector<double> logits(static_cast<std::size_t>(v));
  // Spread 2 keeps every entry comfortably above the underflow threshold.
  for (auto& x : logits) x = 2.0 * rng.next_gaussian();
  return softmax_normalize(logits);
}

std::vector<Categorical> random_family(SplitRng& rng, int k, int v) {
  std::vector<Categorical> members;
  members.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) members.push_back(random_positive_dist(rng, v));
  return members;
}

double mean_kl_to(std::span<const Categorical> members, const Categorical& q) {
  double acc = 0.0;
  for (const auto& p : members) acc += kl(p, q);
  return acc / static_cast<double>(members.size());
}

}  // namespace

double TheoryCheckResult::max_residual() const {
  double worst = 0.0;
  for (const auto& row : identities) worst = std::max(worst, row.max_residual);
  return worst;
}

bool TheoryCheckResult::passed(double tolerance) const {
  return !identities.empty() && max_residual() <= tolerance;
}

TheoryCheckResult verify_theory(int trials, std::uint64_t seed, bool corrupt_for_self_test) {
  if (trials < 1) throw InvalidInput("trials must be >= 1");

  double r_two_form = 0.0;
  double r_upper_bound = 0.0;
  double r_jsd_gap = 0.0;
  double r_argmin = 0.0;

  for (int t = 0; t < trials; ++t) {
    SplitRng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const int v = 2 + static_cast<int>(rng.next_below(63));
    const int k = 2 + static_cast<int>(rng.next_below(9));

    const std::vector<Categorical> family = random_family(rng, k, v);
    const Categorical p_bar = mixture(family);
    const Categorical q = random_positive_dist(rng, v);

    // (a) the two EU forms agree.
    double eu = mean_kl_to(family, p_bar);
    double mean_entropy = 0.0;
    for (const auto& p : family) mean_entropy += entropy(p);
    mean_entropy /= static_cast<double>(family.size());
    const double eu_entropy_form = entropy(p_bar) - mean_entropy;
    double corrupted_eu = eu;
    if (corrupt_for_self_test) corrupted_eu += 1e-6;
    r_two_form = std::max(r_two_form, std::abs(corrupted_eu - eu_entropy_form));

    // (b) mean KL to an arbitrary q splits into EU plus the mean's gap to q.
    const double at_q = mean_kl_to(family, q);
    r_upper_bound = std::max(r_upper_bound, std::abs(at_q - (eu + kl(p_bar, q))));

    // (c) the same split for a draft family against a proxy: the disagreement
    // term is exactly the family JSD.
    const int k_drafts = 2 + static_cast<int>(rng.next_below(9));
    const std::vector<Categorical> drafts = random_family(rng, k_drafts, v);
    const Categorical proxy = random_positive_dist(rng, v);
    const Categorical draft_mix = mixture(drafts);
    const double lhs = mean_kl_to(drafts, proxy);
    const double rhs = jsd(drafts) + kl(draft_mix, proxy);
    r_jsd_gap = std::max(r_jsd_gap, std::abs(lhs - rhs));

    // (d) argmin: by (b) the objective at any q exceeds its value at the
    // family mean by KL(p_bar || q) >= 0; check both the exact gap and the
    // raw ordering.
    r_argmin = std::max(r_argmin, std::abs((at_q - eu) - kl(p_bar, q)));
    r_argmin = std::max(r_argmin, std::max(0.0, eu - at_q));
  }

  TheoryCheckResult result;
  result.trials = trials;
  result.identities = {
      {"eu-two-form", r_two_form},
      {"upper-bound-split", r_upper_bound},
      {"jsd-plus-gap-split", r_jsd_gap},
      {"mean-argmin", r_argmin},
  };
  return result;
}

std::string theory_report_text(const TheoryCheckResult& result, double tolerance) {
  std::string out;
  char line[160];
  for (const auto& row : result.identities) {
    std::snprintf(line, sizeof(line), "%-20s max residual %.3e over %d trials  [%s]\n",
                  row.name.c_str(), row.max_residual, result.trials,
                  row.max_residual <= tolerance ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof(line), "verdict: %s (tolerance %.1e)\n",
                result.passed(tolerance) ? "PASS" : "FAIL", tolerance);
  out += line;
  return out;
}

}  // namespace draftuq
