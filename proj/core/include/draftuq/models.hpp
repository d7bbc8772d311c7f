#pragma once

// Small autoregressive next-token models with exact conditional distributions.
//
// Two backends share one parameter-vector representation:
//   Tabular       — one logit row per context tuple; params length V^n * V.
//                   Full capacity: can represent any conditional table.
//   LinearSoftmax — logits are a linear map of the one-hot context encoding.
//                   H = 0: a single (n*V) x V matrix. H > 0: a linear
//                   bottleneck W_in (n*V x H) times W_out (H x V), which caps
//                   the effective logit map at rank H and creates a
//                   target-vs-draft capacity gap.
//
// Contexts shorter than the window are left-padded with bos; longer contexts
// condition on their last n tokens. All operations are pure; models are value
// types and never mutated by the free functions here.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "draftuq/simplex.hpp"

namespace draftuq {

struct VocabSpec {
  int size = 2;     // V >= 2
  int bos_id = 0;   // always present
  int eos_id = -1;  // -1 means no eos token

  bool has_eos() const { return eos_id >= 0; }
  bool operator==(const VocabSpec&) const = default;
  void validate() const;  // throws InvalidInput on violation
};

enum class Backend { Tabular, LinearSoftmax };

enum class Provenance { TargetFamily, DraftFamily, KOnly };

std::string to_string(Backend b);
std::string to_string(Provenance p);
Backend backend_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

class AutoregressiveModel {
 public:
  // A contiguous matrix-shaped slice of the parameter vector.
  struct Block {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
  };

  AutoregressiveModel(Backend backend, VocabSpec vocab, int context_window, int hidden_width,
                      std::vector<double> params);

  // All-zero parameters (uniform next-token distribution everywhere). Note
  // that for the factorized LinearSoftmax backend (hidden_width > 0) the zero
  // point is a gradient saddle: both factors' gradients vanish there, so
  // trainers must start from random_init instead.
  static AutoregressiveModel zeros(Backend backend, VocabSpec vocab, int context_window,
                                   int hidden_width);
  // Entries of block b drawn i.i.d. N(0, (scale / sqrt(rows_b))^2) with the
  // per-block stream derive_seed(seed, b); breaks the zero-point symmetry.
  static AutoregressiveModel random_init(Backend backend, VocabSpec vocab, int context_window,
                                         int hidden_width, double scale, std::uint64_t seed);
  static std::size_t param_count(Backend backend, int v, int context_window, int hidden_width);

  Backend backend() const { return backend_; }
  const VocabSpec& vocab() const { return vocab_; }
  int context_window() const { return context_window_; }
  int hidden_width() const { return hidden_width_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }

  // Matrix-shaped parameter blocks, in a fixed order (Tabular: the full table;
  // LinearSoftmax: W, or W_in then W_out).
  std::vector<Block> matrix_blocks() const;

  LogitVector logits(std::span<const int> context) const;
  Categorical next_token_dist(std::span<const int> context) const;

  bool operator==(const AutoregressiveModel&) const = default;

 private:
  // The window-sized effective context: last n tokens, left-padded with bos.
  void effective_context(std::span<const int> context, std::vector<int>& out) const;

  Backend backend_;
  VocabSpec vocab_;
  int context_window_;
  int hidden_width_;
  std::vector<double> params_;
};

// Accumulates d(loss)/d(params) += J^T * dlogits, where J is the Jacobian of
// the model's logits at `context`. Shared by every trainer and the gradient
// checker. `grad` must have params().size() entries.
void accumulate_logit_gradient(const AutoregressiveModel& model, std::span<const int> context,
                               std::span<const double> dlogits, std::span<double> grad);

struct LowRankNoiseSpec {
  int rank = 1;
  double sigma = 0.0;
  // Indices into matrix_blocks() that receive noise; empty means all blocks.
  std::vector<int> target_blocks;

  void validate_for(const AutoregressiveModel& model) const;  // throws InvalidInput
};

struct ModelFamily {
  std::vector<AutoregressiveModel> members;
  Provenance provenance = Provenance::TargetFamily;

  int size() const { return static_cast<int>(members.size()); }
};

// W -> W + (1/sqrt(r)) * A * B^T per target block, A (d1 x r) and B (d2 x r)
// with i.i.d. N(0, sigma^2) entries; deterministic given (seed, block index).
AutoregressiveModel perturb_low_rank(const AutoregressiveModel& model,
                                     const LowRankNoiseSpec& noise, std::uint64_t seed);

// m perturbed copies of base; member i uses derive_seed(seed, i).
ModelFamily make_target_family(const AutoregressiveModel& base, int m,
                               const LowRankNoiseSpec& noise, std::uint64_t seed);

// Uniform mixture of members' next-token distributions at `context`.
Categorical predictive_average(const ModelFamily& family, std::span<const int> context);

// Autoregressive sampling from temperature-scaled next_token_dist; stops after
// emitting eos (when the vocab has one) or at max_len. temperature == 0 means
// greedy argmax with ties broken by lowest token index. Returns only the
// generated tokens, not the prompt.
std::vector<int> sample_sequence(const AutoregressiveModel& model, std::span<const int> prompt,
                                 int max_len, double temperature, std::uint64_t seed);

}  // namespace draftuq
