#include "draftuq/mode_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "draftuq/errors.hpp"

namespace draftuq {

namespace {

double direction_loss(const Categorical& teacher, const Categorical& q, FitDirection direction) {
  return direction == FitDirection::ForwardKL ? kl(teacher, q) : kl(q, teacher);
}

// d(loss)/d(logit_i) of the student for either direction; zero-mass student
// entries contribute nothing (their teacher term is skipped by 0 * ln 0 = 0).
void direction_dlogits(const Categorical& teacher, const Categorical& q, FitDirection direction,
                       double loss, std::vector<double>& dlogits) {
  const int v = q.size();
  dlogits.assign(static_cast<std::size_t>(v), 0.0);
  if (direction == FitDirection::ForwardKL) {
    for (int i = 0; i < v; ++i) dlogits[static_cast<std::size_t>(i)] = q[i] - teacher[i];
    return;
  }
  for (int i = 0; i < v; ++i) {
    if (q[i] <= 0.0) continue;
    dlogits[static_cast<std::size_t>(i)] = q[i] * ((std::log(q[i]) - std::log(teacher[i])) - loss);
  }
}

}  // namespace

Categorical DiscretizedGaussian::dist(int v) const {
  if (v < 2) throw InvalidInput("discretized gaussian needs vocabulary size >= 2");
  if (!(spread > 0.0) || !std::isfinite(spread) || !std::isfinite(location)) {
    throw InvalidInput("discretized gaussian needs finite location and positive spread");
  }
  std::vector<double> z(static_cast<std::size_t>(v));
  for (int i = 0; i < v; ++i) {
    const double d = static_cast<double>(i) - location;
    z[static_cast<std::size_t>(i)] = -d * d / (2.0 * spread * spread);
  }
  return softmax_normalize(std::span<const double>(z));
}

Categorical make_bimodal_teacher(int v, double center1, double center2, double width,
                                 double weight1) {
  if (!(weight1 > 0.0 && weight1 < 1.0)) throw InvalidInput("bump weight must be in (0, 1)");
  const Categorical bump1 = DiscretizedGaussian{center1, width}.dist(v);
  const Categorical bump2 = DiscretizedGaussian{center2, width}.dist(v);
  const Categorical members[] = {bump1, bump2};
  const double weights[] = {weight1, 1.0 - weight1};
  return mixture(std::span<const Categorical>(members), std::span<const double>(weights));
}

ModeFit grid_search_oracle(const Categorical& teacher, FitDirection direction) {
  const int v = teacher.size();
  ModeFit best;
  best.kl_value = std::numeric_limits<double>::infinity();
  const int mu_steps = 50 * (v - 1);  // location resolution 0.02 tokens
  const int s_steps = 240;
  const double s_min = 0.25;
  const double s_max = static_cast<double>(v);
  for (int si = 0; si <= s_steps; ++si) {
    const double s = s_min * std::pow(s_max / s_min, static_cast<double>(si) / s_steps);
    for (int mi = 0; mi <= mu_steps; ++mi) {
      const double mu = static_cast<double>(v - 1) * mi / mu_steps;
      const DiscretizedGaussian g{mu, s};
      const double loss = direction_loss(teacher, g.dist(v), direction);
      if (loss < best.kl_value) {
        best.kl_value = loss;
        best.params = g;
      }
    }
  }
  return best;
}

ModeFit fit_capacity_limited(const Categorical& teacher, FitDirection direction) {
  const int v = teacher.size();
  ModeFit best;
  best.kl_value = std::numeric_limits<double>::infinity();
  std::vector<double> dlogits;

  const int mu_starts = 9;
  const double spread_starts[] = {1.0, static_cast<double>(v) / 8.0};
  for (int ms = 0; ms < mu_starts; ++ms) {
    for (const double s0 : spread_starts) {
      double mu = static_cast<double>(v - 1) * ms / (mu_starts - 1);
      double lam = std::log(s0);  // optimize ln spread so positivity is free
      double loss = direction_loss(teacher, DiscretizedGaussian{mu, std::exp(lam)}.dist(v), direction);
      for (int iter = 0; iter < 2000; ++iter) {
        const double s = std::exp(lam);
        const Categorical q = DiscretizedGaussian{mu, s}.dist(v);
        direction_dlogits(teacher, q, direction, loss, dlogits);
        double gmu = 0.0;
        double glam = 0.0;
        for (int i = 0; i < v; ++i) {
          const double d = static_cast<double>(i) - mu;
          gmu += dlogits[static_cast<std::size_t>(i)] * d / (s * s);
          glam += dlogits[static_cast<std::size_t>(i)] * d * d / (s * s);
        }
        const double gnorm = std::sqrt(gmu * gmu + glam * glam);
        if (gnorm < 1e-12) break;

        // Backtracking line search along the negative gradient.
        double step = 1.0;
        bool moved = false;
        for (int half = 0; half < 50; ++half) {
          const double try_mu = mu - step * gmu;
          const double try_lam = lam - step * glam;
          if (std::isfinite(try_mu) && std::abs(try_lam) < 50.0) {
            const double try_loss =
                direction_loss(teacher, DiscretizedGaussian{try_mu, std::exp(try_lam)}.dist(v), direction);
            if (try_loss < loss) {
              mu = try_mu;
              lam = try_lam;
              loss = try_loss;
              moved = true;
              break;
            }
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
      if (loss < best.kl_value) {
        best.kl_value = loss;
        best.params = DiscretizedGaussian{mu, std::exp(lam)};
      }
    }
  }
  return best;
}

double mass_in_range(const Categorical& p, int lo, int hi) {
  lo = std::max(lo, 0);
  hi = std::min(hi, p.size() - 1);
  double mass = 0.0;
  for (int i = lo; i <= hi; ++i) mass += p[i];
  return mass;
}

}  // namespace draftuq
