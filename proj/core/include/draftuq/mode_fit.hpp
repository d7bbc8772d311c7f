#pragma once

// The mode-seeking vs mode-covering demonstration needs a student family that
// cannot represent a bimodal teacher: a discretized Gaussian over the ordered
// vocabulary, q(i) proportional to exp(-(i - location)^2 / (2 spread^2)),
// with exactly two free parameters. Fitting it by forward KL spreads mass
// across both teacher bumps; fitting by reverse KL locks onto one bump.
//
// fit_capacity_limited runs multi-start gradient descent on (location,
// ln spread); grid_search_oracle exhaustively scans a fine parameter grid and
// serves as the independent optimum reference.

#include "draftuq/simplex.hpp"

namespace draftuq {

struct DiscretizedGaussian {
  double location = 0.0;  // token-index units
  double spread = 1.0;    // > 0

  Categorical dist(int v) const;
};

enum class FitDirection { ForwardKL, ReverseKL };

struct ModeFit {
  DiscretizedGaussian params;
  double kl_value = 0.0;  // achieved divergence in the fitted direction
};

// Teacher helper: mixture of two discretized-Gaussian bumps centered at
// center1 and center2 with common width; weight1 on the first bump.
Categorical make_bimodal_teacher(int v, double center1, double center2, double width,
                                 double weight1 = 0.5);

ModeFit fit_capacity_limited(const Categorical& teacher, FitDirection direction);
ModeFit grid_search_oracle(const Categorical& teacher, FitDirection direction);

// Total mass on tokens lo..hi inclusive (clamped to the vocabulary).
double mass_in_range(const Categorical& p, int lo, int hi);

}  // namespace draftuq
