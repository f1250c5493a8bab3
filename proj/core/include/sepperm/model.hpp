#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepperm/inference.hpp"
#include "sepperm/matrix.hpp"
#include "sepperm/scorer.hpp"

namespace sepperm {

// Tagger: semantic token embeddings (disjoint from the scorer's) -> a light
// bidirectional gated recurrent encoder over the (possibly reordered)
// embedding rows -> per-position linear projection to the output vocabulary,
// which equals the input vocabulary.
struct TaggerParams {
  int vocab = 0, d_embed = 0, h_enc = 0;

  Mat embed;  // vocab-by-d_embed
  GruParams fwd, bwd;
  Mat out_w;                      // vocab-by-2h
  std::vector<double> out_b;      // vocab

  static TaggerParams init(int vocab, int d_embed, int h_enc, Rng& rng);
  std::vector<TensorRef> tensors();  // names prefixed "tagger."
};

enum class Variant { Soft, Hard, IdentityBaseline };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct TrainConfig {
  Variant variant = Variant::Soft;
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  double grad_clip = 5.0;     // global L2 norm over the updated tensors
  double temperature = 1.0;   // Hard variant's softmax temperature
  int lag_steps = 1000;       // during the first lag_steps optimizer steps...
  double lag_prob = 0.5;      // ...apply only scorer gradients w.p. lag_prob
  std::uint64_t seed = 17;

  // Sizes (scorer / tagger).
  int d_syn = 32, h_syn = 64, mlp_hidden = 64;
  int d_sem = 32, h_sem = 32;

  int marginal_max_len = 64;  // examples longer than this are skipped
  int train_em_subsample = 1000;  // train exact-match on this many examples

  // Stop once dev exact-match >= early_stop_dev_em for early_stop_patience
  // consecutive epochs (and at least min_epochs have run). patience <= 0
  // disables early stopping.
  double early_stop_dev_em = 1.0;
  int early_stop_patience = 2;
  int min_epochs = 4;
};

struct Model {
  Variant variant = Variant::Soft;
  ScorerParams scorer;
  TaggerParams tagger;
};

struct Example {
  std::vector<int> tokens;  // input ids
  std::vector<int> gold;    // output ids, same length
};

struct ForwardResult {
  double loss = 0.0;  // mean per-position cross-entropy
  Mat probs;          // n-by-vocab per-position output distributions
};

// Differentiable forward passes (no parameter update):
//   soft: reorder with the exact marginal of the scored chart,
//   hard: reorder with one Gumbel straight-through sample (the returned loss
//         is the hard-sample loss; gradients flow through the relaxed path).
// gold must have the same length as tokens.
ForwardResult forward_soft(Model& m, std::span<const int> tokens,
                           std::span<const int> gold);
ForwardResult forward_hard(Model& m, std::span<const int> tokens,
                           std::span<const int> gold, Rng& rng,
                           double temperature = 1.0);

// Tagger loss under a fixed reordering matrix (n-by-n). Used directly by the
// identity baseline (reorder = I) and by tests that pin the reordering.
ForwardResult tagger_forward(TaggerParams& tagger, const Mat& reorder,
                             std::span<const int> tokens,
                             std::span<const int> gold);

struct LossWithGrads {
  double loss = 0.0;
  std::vector<std::string> names;           // tensor names touched
  std::vector<std::vector<double>> grads;   // parallel to names
};

// Loss and d(loss)/d(tensor) for one example under `variant` (which may
// differ from m.variant). Hard requires rng for the Gumbel noise; the other
// variants ignore it. Backs both the training step and the numeric gradient
// checks.
LossWithGrads loss_gradients(Model& m, Variant variant,
                             std::span<const int> tokens,
                             std::span<const int> gold, double temperature,
                             Rng* rng);

// The Hard pipeline with the relaxed matrix kept on the forward path too (no
// hard substitution): the smooth surrogate whose gradients the straight-
// through step reuses. This is the function a finite-difference probe can
// check — the straight-through estimator itself is intentionally biased with
// respect to the hard forward.
LossWithGrads loss_gradients_relaxed(Model& m, std::span<const int> tokens,
                                     std::span<const int> gold,
                                     double temperature, Rng& rng);

// Deterministic prediction: MAP derivation's permutation matrix for the
// reordering (identity for the baseline variant), then per-position argmax.
std::vector<int> predict(Model& m, std::span<const int> tokens);

// Fraction of examples whose predicted sequence equals gold exactly.
double evaluate(Model& m, std::span<const Example> data);

struct MetricsRow {
  int epoch;
  std::string split;  // "train" or "dev"
  double loss;
  double exact_match;
};

struct TrainResult {
  Model model;
  std::vector<MetricsRow> history;
};

// Mini-batch training with an adaptive-moment optimizer (lr as configured,
// moment decays 0.9/0.999, eps 1e-8), gradient accumulation over each batch,
// global-norm clipping, and the lag schedule: during the first
// config.lag_steps steps, with probability config.lag_prob the step updates
// only the scorer ("tagger lag", keeps the tagger from solving the task
// before the reordering does). All randomness (init, shuffling, lag coins,
// Gumbel noise) comes from config.seed; identical inputs give identical
// histories and parameters. Examples longer than config.marginal_max_len are
// skipped with a stderr note. progress != nullptr streams per-epoch metric
// rows to stderr as they are produced.
TrainResult train(const TrainConfig& config, std::span<const Example> train_set,
                  std::span<const Example> dev_set, bool progress = true);

}  // namespace sepperm
