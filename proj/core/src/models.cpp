#include "draftuq/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "draftuq/errors.hpp"
#include "draftuq/rng.hpp"

namespace draftuq {

void VocabSpec::validate() const {
  if (size < 2) throw InvalidInput("vocab size must be >= 2");
  if (bos_id < 0 || bos_id >= size) throw InvalidInput("bos_id out of range");
  if (eos_id >= size) throw InvalidInput("eos_id out of range");
  if (has_eos() && eos_id == bos_id) throw InvalidInput("bos and eos must differ");
}

std::string to_string(Backend b) {
  return b == Backend::Tabular ? "tabular" : "linear_softmax";
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::TargetFamily: return "target_family";
    case Provenance::DraftFamily: return "draft_family";
    case Provenance::KOnly: return "k_only";
  }
  throw InvalidInput("unknown provenance");
}

Backend backend_from_string(const std::string& s) {
  if (s == "tabular") return Backend::Tabular;
  if (s == "linear_softmax") return Backend::LinearSoftmax;
  throw InvalidInput("unknown backend: " + s);
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "target_family") return Provenance::TargetFamily;
  if (s == "draft_family") return Provenance::DraftFamily;
  if (s == "k_only") return Provenance::KOnly;
  throw InvalidInput("unknown provenance: " + s);
}

std::size_t AutoregressiveModel::param_count(Backend backend, int v, int context_window,
                                             int hidden_width) {
  const auto uv = static_cast<std::size_t>(v);
  const auto un = static_cast<std::size_t>(context_window);
  if (backend == Backend::Tabular) {
    std::size_t contexts = 1;
    for (std::size_t i = 0; i < un; ++i) {
      if (contexts > std::numeric_limits<std::size_t>::max() / uv) {
        throw InvalidInput("tabular context table too large");
      }
      contexts *= uv;
    }
    return contexts * uv;
  }
  const auto uh = static_cast<std::size_t>(hidden_width);
  if (hidden_width > 0) return un * uv * uh + uh * uv;
  return un * uv * uv;
}

AutoregressiveModel::AutoregressiveModel(Backend backend, VocabSpec vocab, int context_window,
                                         int hidden_width, std::vector<double> params)
    : backend_(backend),
      vocab_(vocab),
      context_window_(context_window),
      hidden_width_(hidden_width),
      params_(std::move(params)) {
  vocab_.validate();
  if (context_window_ < 1) throw InvalidInput("context window must be >= 1");
  if (hidden_width_ < 0) throw InvalidInput("hidden width must be >= 0");
  if (backend_ == Backend::Tabular && hidden_width_ != 0) {
    throw InvalidInput("tabular backend has no hidden layer");
  }
  const std::size_t expected = param_count(backend_, vocab_.size, context_window_, hidden_width_);
  if (params_.size() != expected) {
    throw InvalidInput("param count " + std::to_string(params_.size()) + " does not match layout (" +
                       std::to_string(expected) + " expected)");
  }
  for (double p : params_) {
    if (!std::isfinite(p)) throw InvalidInput("model parameters must be finite");
  }
}

AutoregressiveModel AutoregressiveModel::zeros(Backend backend, VocabSpec vocab, int context_window,
                                               int hidden_width) {
  std::vector<double> params(param_count(backend, vocab.size, context_window, hidden_width), 0.0);
  return AutoregressiveModel(backend, vocab, context_window, hidden_width, std::move(params));
}

AutoregressiveModel AutoregressiveModel::random_init(Backend backend, VocabSpec vocab,
                                                     int context_window, int hidden_width,
                                                     double scale, std::uint64_t seed) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw InvalidInput("random init scale must be a finite nonnegative value");
  }
  AutoregressiveModel model = zeros(backend, vocab, context_window, hidden_width);
  auto& params = model.mutable_params();
  const auto blocks = model.matrix_blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    SplitRng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    const double sd = scale / std::sqrt(static_cast<double>(std::max(blk.rows, 1)));
    const std::size_t count = static_cast<std::size_t>(blk.rows) * static_cast<std::size_t>(blk.cols);
    for (std::size_t i = 0; i < count; ++i) params[blk.offset + i] = sd * rng.next_gaussian();
  }
  return model;
}

std::vector<AutoregressiveModel::Block> AutoregressiveModel::matrix_blocks() const {
  const int v = vocab_.size;
  const int nv = context_window_ * v;
  if (backend_ == Backend::Tabular) {
    const int contexts = static_cast<int>(params_.size()) / v;
    return {Block{0, contexts, v}};
  }
  if (hidden_width_ > 0) {
    const auto in_size = static_cast<std::size_t>(nv) * static_cast<std::size_t>(hidden_width_);
    return {Block{0, nv, hidden_width_}, Block{in_size, hidden_width_, v}};
  }
  return {Block{0, nv, v}};
}

void AutoregressiveModel::effective_context(std::span<const int> context,
                                            std::vector<int>& out) const {
  for (int t : context) {
    if (t < 0 || t >= vocab_.size) {
      throw InvalidInput("context token " + std::to_string(t) + " out of vocabulary range");
    }
  }
  const int n = context_window_;
  out.assign(static_cast<std::size_t>(n), vocab_.bos_id);
  const int take = std::min<int>(n, static_cast<int>(context.size()));
  for (int j = 0; j < take; ++j) {
    out[static_cast<std::size_t>(n - take + j)] = context[context.size() - take + j];
  }
}

LogitVector AutoregressiveModel::logits(std::span<const int> context) const {
  const int v = vocab_.size;
  const int n = context_window_;
  std::vector<int> ctx;
  effective_context(context, ctx);
  std::vector<double> z(static_cast<std::size_t>(v), 0.0);

  if (backend_ == Backend::Tabular) {
    std::size_t code = 0;  // big-endian in context position
    for (int j = 0; j < n; ++j) code = code * static_cast<std::size_t>(v) + ctx[j];
    const std::size_t base = code * static_cast<std::size_t>(v);
    for (int i = 0; i < v; ++i) z[i] = params_[base + i];
    return LogitVector(std::move(z));
  }

  if (hidden_width_ == 0) {
    // z = sum over positions of the one-hot-selected row of W (n*V x V).
    for (int j = 0; j < n; ++j) {
      const std::size_t row = static_cast<std::size_t>(j) * v + ctx[j];
      const std::size_t base = row * static_cast<std::size_t>(v);
      for (int i = 0; i < v; ++i) z[i] += params_[base + i];
    }
    return LogitVector(std::move(z));
  }

  // Linear bottleneck: h = W_in^T x, z = W_out^T h.
  const int h = hidden_width_;
  std::vector<double> hidden(static_cast<std::size_t>(h), 0.0);
  for (int j = 0; j < n; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * v + ctx[j];
    const std::size_t base = row * static_cast<std::size_t>(h);
    for (int k = 0; k < h; ++k) hidden[k] += params_[base + k];
  }
  const std::size_t out_base = static_cast<std::size_t>(n) * v * h;
  for (int k = 0; k < h; ++k) {
    const std::size_t base = out_base + static_cast<std::size_t>(k) * v;
    for (int i = 0; i < v; ++i) z[i] += hidden[k] * params_[base + i];
  }
  return LogitVector(std::move(z));
}

Categorical AutoregressiveModel::next_token_dist(std::span<const int> context) const {
  return softmax_normalize(logits(context));
}

void accumulate_logit_gradient(const AutoregressiveModel& model, std::span<const int> context,
                               std::span<const double> dlogits, std::span<double> grad) {
  const int v = model.vocab().size;
  const int n = model.context_window();
  if (static_cast<int>(dlogits.size()) != v) throw InvalidInput("dlogits size must equal V");
  if (grad.size() != model.params().size()) throw InvalidInput("grad size must match params");

  std::vector<int> ctx;
  {
    // Rebuild the padded window exactly as logits() does.
    std::vector<int> tmp(context.begin(), context.end());
    for (int t : tmp) {
      if (t < 0 || t >= v) throw InvalidInput("context token out of vocabulary range");
    }
    ctx.assign(static_cast<std::size_t>(n), model.vocab().bos_id);
    const int take = std::min<int>(n, static_cast<int>(tmp.size()));
    for (int j = 0; j < take; ++j) ctx[static_cast<std::size_t>(n - take + j)] = tmp[tmp.size() - take + j];
  }

  if (model.backend() == Backend::Tabular) {
    std::size_t code = 0;
    for (int j = 0; j < n; ++j) code = code * static_cast<std::size_t>(v) + ctx[j];
    const std::size_t base = code * static_cast<std::size_t>(v);
    for (int i = 0; i < v; ++i) grad[base + i] += dlogits[i];
    return;
  }

  const auto& params = model.params();
  const int h = model.hidden_width();
  if (h == 0) {
    for (int j = 0; j < n; ++j) {
      const std::size_t row = static_cast<std::size_t>(j) * v + ctx[j];
      const std::size_t base = row * static_cast<std::size_t>(v);
      for (int i = 0; i < v; ++i) grad[base + i] += dlogits[i];
    }
    return;
  }

  std::vector<double> hidden(static_cast<std::size_t>(h), 0.0);
  for (int j = 0; j < n; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * v + ctx[j];
    const std::size_t base = row * static_cast<std::size_t>(h);
    for (int k = 0; k < h; ++k) hidden[k] += params[base + k];
  }
  const std::size_t out_base = static_cast<std::size_t>(n) * v * h;
  // dL/dW_out[k, i] = hidden[k] * dlogits[i]; dL/dh[k] = sum_i W_out[k, i] * dlogits[i].
  std::vector<double> dhidden(static_cast<std::size_t>(h), 0.0);
  for (int k = 0; k < h; ++k) {
    const std::size_t base = out_base + static_cast<std::size_t>(k) * v;
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
      grad[base + i] += hidden[k] * dlogits[i];
      acc += params[base + i] * dlogits[i];
    }
    dhidden[k] = acc;
  }
  for (int j = 0; j < n; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * v + ctx[j];
    const std::size_t base = row * static_cast<std::size_t>(h);
    for (int k = 0; k < h; ++k) grad[base + k] += dhidden[k];
  }
}

void LowRankNoiseSpec::validate_for(const AutoregressiveModel& model) const {
  if (rank < 1) throw InvalidInput("noise rank must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("noise sigma must be finite and >= 0");
  const auto blocks = model.matrix_blocks();
  for (int b : target_blocks) {
    if (b < 0 || b >= static_cast<int>(blocks.size())) {
      throw InvalidInput("noise target block index out of range");
    }
  }
  auto check_block = [&](const AutoregressiveModel::Block& blk) {
    if (rank > std::min(blk.rows, blk.cols)) {
      throw InvalidInput("noise rank exceeds a target block dimension");
    }
  };
  if (target_blocks.empty()) {
    for (const auto& blk : blocks) check_block(blk);
  } else {
    for (int b : target_blocks) check_block(blocks[static_cast<std::size_t>(b)]);
  }
}

AutoregressiveModel perturb_low_rank(const AutoregressiveModel& model,
                                     const LowRankNoiseSpec& noise, std::uint64_t seed) {
  noise.validate_for(model);
  const auto blocks = model.matrix_blocks();
  std::vector<int> targets = noise.target_blocks;
  if (targets.empty()) {
    for (int b = 0; b < static_cast<int>(blocks.size()); ++b) targets.push_back(b);
  }

  std::vector<double> params = model.params();
  const int r = noise.rank;
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));
  for (int b : targets) {
    const auto& blk = blocks[static_cast<std::size_t>(b)];
    SplitRng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::vector<double> a(static_cast<std::size_t>(blk.rows) * r);
    std::vector<double> bt(static_cast<std::size_t>(blk.cols) * r);
    for (double& x : a) x = noise.sigma * rng.next_gaussian();
    for (double& x : bt) x = noise.sigma * rng.next_gaussian();
    for (int i = 0; i < blk.rows; ++i) {
      for (int j = 0; j < blk.cols; ++j) {
        double dot = 0.0;
        for (int l = 0; l < r; ++l) {
          dot += a[static_cast<std::size_t>(i) * r + l] * bt[static_cast<std::size_t>(j) * r + l];
        }
        params[blk.offset + static_cast<std::size_t>(i) * blk.cols + j] += inv_sqrt_r * dot;
      }
    }
  }
  return AutoregressiveModel(model.backend(), model.vocab(), model.context_window(),
                             model.hidden_width(), std::move(params));
}

ModelFamily make_target_family(const AutoregressiveModel& base, int m,
                               const LowRankNoiseSpec& noise, std::uint64_t seed) {
  if (m < 1) throw InvalidInput("family size must be >= 1");
  ModelFamily family;
  family.provenance = Provenance::TargetFamily;
  family.members.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    family.members.push_back(perturb_low_rank(base, noise, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return family;
}

Categorical predictive_average(const ModelFamily& family, std::span<const int> context) {
  if (family.members.empty()) throw InvalidInput("predictive_average needs a nonempty family");
  std::vector<Categorical> dists;
  dists.reserve(family.members.size());
  for (const auto& m : family.members) dists.push_back(m.next_token_dist(context));
  return mixture(std::span<const Categorical>(dists));
}

std::vector<int> sample_sequence(const AutoregressiveModel& model, std::span<const int> prompt,
                                 int max_len, double temperature, std::uint64_t seed) {
  if (max_len < 1) throw InvalidInput("max_len must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("temperature must be finite and >= 0");
  }
  std::vector<int> sequence;
  std::vector<int> context(prompt.begin(), prompt.end());
  SplitRng rng(seed);
  for (int t = 0; t < max_len; ++t) {
    const LogitVector z = model.logits(context);
    int token;
    if (temperature == 0.0) {
      token = 0;
      for (int i = 1; i < static_cast<int>(z.scores.size()); ++i) {
        if (z.scores[static_cast<std::size_t>(i)] > z.scores[static_cast<std::size_t>(token)]) token = i;
      }
    } else {
      std::vector<double> scaled(z.scores);
      for (double& x : scaled) x /= temperature;
      const Categorical dist = softmax_normalize(std::span<const double>(scaled));
      const double u = rng.next_double();
      double cum = 0.0;
      token = dist.size() - 1;  // guards the u ~ 1 rounding edge
      for (int i = 0; i < dist.size(); ++i) {
        cum += dist[i];
        if (u < cum) {
          token = i;
          break;
        }
      }
    }
    sequence.push_back(token);
    context.push_back(token);
    if (model.vocab().has_eos() && token == model.vocab().eos_id) break;
  }
  return sequence;
}

}  // namespace draftuq
