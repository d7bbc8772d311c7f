#pragma once

// Randomized residual checks of the algebraic identities the estimator rests
// on. All four hold exactly in exact arithmetic, so the max residual over
// many random instances measures nothing but floating-point noise; a residual
// above ~1e-10 means an implementation bug, not an unlucky draw.

#include <cstdint>
#include <string>
#include <vector>

namespace draftuq {

struct IdentityResidual {
  std::string name;
  double max_residual = 0.0;
};

struct TheoryCheckResult {
  int trials = 0;
  std::vector<IdentityResidual> identities;  // fixed order, one row each

  double max_residual() const;
  bool passed(double tolerance) const;
};

// Over randomized strictly positive families (V in 2..64, K in 2..10):
//  (a) eu-two-form          mean_k KL(p_k || p_bar) == H(p_bar) - mean_k H(p_k)
//  (b) upper-bound-split    mean_k KL(p_k || q) == EU + KL(p_bar || q)
//  (c) jsd-plus-gap-split   mean_k KL(q_k || p) == JSD(q_1..q_K) + KL(q_mix || p)
//  (d) mean-argmin          the family mean minimizes q -> mean_k KL(p_k || q)
// corrupt_for_self_test injects a deliberate error into (a) so callers can
// prove the harness is able to fail.
TheoryCheckResult verify_theory(int trials, std::uint64_t seed,
                                bool corrupt_for_self_test = false);

// One line per identity plus a PASS/FAIL verdict at the tolerance.
std::string theory_report_text(const TheoryCheckResult& result, double tolerance);

}  // namespace draftuq
