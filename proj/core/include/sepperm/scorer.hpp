#pragma once

#include <span>
#include <string>
#include <vector>

#include "sepperm/autodiff.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/matrix.hpp"
#include "sepperm/rng.hpp"

namespace sepperm {

// Named view of one parameter tensor (the storage lives in the owning
// params struct). The order of tensors() is fixed and drives optimizer
// state, checkpoints, and gradient tables.
struct TensorRef {
  std::string name;
  std::vector<double>* data;
  int rows, cols;  // cols == 1 for vectors
};

// One direction of a gated recurrent layer. Gate matrices act on [x; h].
struct GruParams {
  Mat wz, wr, wh;                  // h-by-(d+h)
  std::vector<double> bz, br, bh;  // h

  static GruParams init(int d, int h, Rng& rng);
};

// Span scorer: token embeddings -> single-layer bidirectional gated
// recurrent encoder -> boundary-difference span embeddings -> one-hidden-
// layer MLP with two outputs = (logf(Straight), logf(Inverted)) per anchored
// split. The MLP's first layer acts on the concatenation [s(i,j); s(j,k)];
// its weight matrix is stored as four column blocks (mlp_lf/mlp_lb applied
// to the left span's forward/backward differences, mlp_rf/mlp_rb to the
// right's) so per-position projections can be shared across spans. That is
// an algebraic regrouping, not a different model.
struct ScorerParams {
  int vocab = 0, d_embed = 0, h_enc = 0, mlp_hidden = 0;

  Mat embed;  // vocab-by-d_embed
  GruParams fwd, bwd;
  Mat mlp_lf, mlp_lb, mlp_rf, mlp_rb;  // mlp_hidden-by-h_enc each
  std::vector<double> mlp_bias;        // mlp_hidden
  Mat mlp_out;                         // 2-by-mlp_hidden
  std::vector<double> mlp_out_bias;    // 2

  static ScorerParams init(int vocab, int d_embed, int h_enc, int mlp_hidden,
                           Rng& rng);
  std::vector<TensorRef> tensors();  // names prefixed "scorer."
};

// Bidirectional recurrent sweep over arbitrary input rows (n-by-d): row t of
// the result is [forward state after row t ; backward state covering
// t..n-1], each of width h, so the result is n-by-2h.
Mat bigru_encode(const GruParams& fwd, const GruParams& bwd, const Mat& xs);

// Per-position encodings, n-by-2h: row t is [forward state after token t ;
// backward state covering t..n-1]. Throws on empty input or out-of-vocab id.
Mat encode(const ScorerParams& p, std::span<const int> tokens);

// Boundary-difference embedding of span [i, k), 0 <= i < k <= n, from the
// encodings: [f_{k-1} - f_{i-1} ; b_i - b_k] with f_{-1} = b_n = 0.
// Well-defined for width-1 spans.
std::vector<double> span_embedding(const Mat& enc, int i, int k);

// Log-weights for every anchored rule of the sentence:
// (logf_S, logf_I)(i,j,k) = MLP([s(i,j); s(j,k)]).
RuleWeightChart score_rules(const ScorerParams& p, std::span<const int> tokens);

namespace graph {

// Tape-building blocks shared by score_rules, the model forwards, and the
// gradient checks. A Binding pairs each parameter tensor with its tape node
// so callers can read gradients after backward().
struct Binding {
  std::vector<TensorRef> refs;
  std::vector<ad::NodeId> nodes;

  ad::NodeId node(const std::string& name) const;
  void append(ad::Tape& t, std::vector<TensorRef> more);
};

Binding bind(ad::Tape& t, std::vector<TensorRef> refs);

struct GruNodes {
  ad::NodeId wz = -1, wr = -1, wh = -1, bz = -1, br = -1, bh = -1;
};
// Picks the six gate tensors with the given name prefix out of a binding.
GruNodes gru_nodes(const Binding& b, const std::string& prefix);

// Bidirectional recurrent sweep over the n rows of `xs` (flattened n-by-d).
// Returns per-position state nodes, each of length h; bwd[t] covers t..n-1.
struct BiStates {
  std::vector<ad::NodeId> fwd, bwd;
};
BiStates bigru(ad::Tape& t, const GruNodes& f, const GruNodes& b, ad::NodeId xs,
               int n, int d, int h);

// Full scorer graph: logf is the flat rule chart (ChartLayout order).
struct ScorerGraph {
  Binding binding;
  ad::NodeId logf = -1;
};
ScorerGraph build_scorer(ad::Tape& t, ScorerParams& p,
                         std::span<const int> tokens, const ChartLayout& L);

}  // namespace graph
}  // namespace sepperm
