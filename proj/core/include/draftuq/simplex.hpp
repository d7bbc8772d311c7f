#pragma once

/**
 * Probability-simplex math over a finite vocabulary: normalization, entropy,
 * KL divergence, mixtures, and Jensen-Shannon divergence.
 *
 * Conventions, used by everything downstream:
 * - All divergences are in nats.
 * - 0 * ln 0 == 0.
 * - KL returns +infinity when the support condition fails (p_i > 0, q_i == 0)
 *   unless an epsilon floor is requested.
 * - Accumulation is always index-ascending, so identical inputs produce
 *   bit-identical sums.
 */

#include <optional>
#include <span>
#include <vector>

namespace draftuq {

/// Unnormalized log-odds scores. All entries must be finite.
struct LogitVector {
  std::vector<double> scores;

  explicit LogitVector(std::vector<double> s);
};

/// A distribution over a finite vocabulary (V >= 2). Entries are nonnegative
/// and sum to 1 within 1e-9 absolute.
class Categorical {
public:
  explicit Categorical(std::vector<double> probs);

  static Categorical uniform(int v);
  static Categorical point_mass(int v, int index);

  int size() const noexcept { return static_cast<int>(probs_.size()); }
  double operator[](int i) const noexcept { return probs_[static_cast<std::size_t>(i)]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const Categorical& other) const noexcept { return probs_ == other.probs_; }

private:
  std::vector<double> probs_;
};

inline constexpr double kSimplexSumTolerance = 1e-9;

/// Sum of the terms accumulated in value-sorted order, so the result is
/// exactly invariant to any permutation of the input. Used wherever a sum
/// ranges over family members, whose order is not meaningful.
double order_invariant_sum(std::vector<double> terms);

/// Max-subtracted softmax. Never overflows for finite input; entries are
/// strictly positive except that the far tail can underflow to zero when the
/// logit gap exceeds roughly 745 nats.
Categorical softmax_normalize(const LogitVector& logits);
Categorical softmax_normalize(std::span<const double> scores);

/// Shannon entropy H(p) in nats, in [0, ln V].
double entropy(const Categorical& p);

/// KL(p || q) in nats. epsilon_floor == 0 gives the exact value with a
/// distinguished +infinity on support violation; epsilon_floor > 0 clamps q
/// from below instead (consumers that must avoid infinities).
double kl(const Categorical& p, const Categorical& q, double epsilon_floor = 0.0);

/// Elementwise convex combination. Weights default to uniform 1/K and must
/// sum to 1; members with weight 0 are ignored.
Categorical mixture(std::span<const Categorical> members,
                    std::span<const double> weights = {});

/// Jensen-Shannon divergence: weighted mean of KL(member || mixture).
/// Bounded by ln K; zero iff all members are equal.
double jsd(std::span<const Categorical> members,
           std::span<const double> weights = {});

}  // namespace draftuq
