#include "draftuq/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace draftuq {

namespace {

void check_same_size(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("distributions have mismatched vocabulary sizes: " +
                                std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  }
}

}  // namespace

double order_invariant_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double x : terms) sum += x;
  return sum;
}

LogitVector::LogitVector(std::vector<double> s) : scores(std::move(s)) {
  for (double x : scores) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("logit vector contains a non-finite entry");
    }
  }
}

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw std::invalid_argument("categorical needs vocabulary size >= 2");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) {  // catches negatives and NaN
      throw std::invalid_argument("categorical entry negative or NaN");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexSumTolerance) {
    throw std::invalid_argument("categorical entries sum to " + std::to_string(sum) +
                                ", outside tolerance");
  }
}

Categorical Categorical::uniform(int v) {
  if (v < 2) throw std::invalid_argument("uniform: vocabulary size must be >= 2");
  return Categorical(std::vector<double>(static_cast<std::size_t>(v), 1.0 / v));
}

Categorical Categorical::point_mass(int v, int index) {
  if (v < 2) throw std::invalid_argument("point_mass: vocabulary size must be >= 2");
  if (index < 0 || index >= v) throw std::invalid_argument("point_mass: index out of range");
  std::vector<double> p(static_cast<std::size_t>(v), 0.0);
  p[static_cast<std::size_t>(index)] = 1.0;
  return Categorical(std::move(p));
}

Categorical softmax_normalize(std::span<const double> scores) {
  if (scores.size() < 2) {
    throw std::invalid_argument("softmax needs at least 2 scores");
  }
  double max_score = -std::numeric_limits<double>::infinity();
  for (double x : scores) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("softmax input contains a non-finite entry");
    }
    max_score = std::max(max_score, x);
  }
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - max_score);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return Categorical(std::move(out));
}

Categorical softmax_normalize(const LogitVector& logits) {
  return softmax_normalize(std::span<const double>(logits.scores));
}

double entropy(const Categorical& p) {
  double h = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi > 0.0) h -= pi * std::log(pi);
  }
  return h;
}

double kl(const Categorical& p, const Categorical& q, double epsilon_floor) {
  check_same_size(p, q);
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi <= 0.0) continue;
    double qi = q[i];
    if (epsilon_floor > 0.0) qi = std::max(qi, epsilon_floor);
    if (qi <= 0.0) return std::numeric_limits<double>::infinity();
    sum += pi * std::log(pi / qi);
  }
  return sum;
}

Categorical mixture(std::span<const Categorical> members, std::span<const double> weights) {
  if (members.empty()) {
    throw std::invalid_argument("mixture needs at least one member");
  }
  const int v = members[0].size();
  for (const auto& m : members) check_same_size(members[0], m);

  std::vector<double> w;
  if (weights.empty()) {
    w.assign(members.size(), 1.0 / static_cast<double>(members.size()));
  } else {
    if (weights.size() != members.size()) {
      throw std::invalid_argument("mixture: weight count does not match member count");
    }
    double wsum = 0.0;
    for (double x : weights) {
      if (!(x >= 0.0)) throw std::invalid_argument("mixture: negative or NaN weight");
      wsum += x;
    }
    if (std::abs(wsum - 1.0) > kSimplexSumTolerance) {
      throw std::invalid_argument("mixture: weights must sum to 1");
    }
    w.assign(weights.begin(), weights.end());
  }

  std::vector<double> out(static_cast<std::size_t>(v), 0.0);
  std::vector<double> terms;
  terms.reserve(members.size());
  for (int i = 0; i < v; ++i) {
    terms.clear();
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (w[k] == 0.0) continue;
      terms.push_back(w[k] * members[k][i]);
    }
    out[static_cast<std::size_t>(i)] = order_invariant_sum(terms);
  }
  return Categorical(std::move(out));
}

double jsd(std::span<const Categorical> members, std::span<const double> weights) {
  if (members.size() < 2) {
    throw std::invalid_argument("jsd needs at least two members");
  }
  const Categorical mix = mixture(members, weights);
  std::vector<double> terms;
  terms.reserve(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    const double w = weights.empty() ? 1.0 / static_cast<double>(members.size())
                                     : weights[k];
    if (w == 0.0) continue;
    terms.push_back(w * kl(members[k], mix));
  }
  return order_invariant_sum(std::move(terms));
}

}  // namespace draftuq
