#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "sepperm/chart.hpp"
#include "sepperm/matrix.hpp"
#include "sepperm/rng.hpp"

namespace sepperm {

struct MarginalOptions {
  // O(n^5) time / O(n^4) memory; refuse longer inputs instead of thrashing.
  int max_len = 64;
};

// Exact expectation of the permutation matrix under the derivation
// distribution of `g`: one bottom-up pass accumulating per-span weighted
// block sums. The result is doubly stochastic; entry (a,b) is the marginal
// probability that output slot a holds input token b.
// Throws std::invalid_argument when g.n() exceeds opts.max_len.
Mat marginal(const PcfgChart& g, const MarginalOptions& opts = {});

// Exact MAP derivation by Viterbi over the same chart:
//   best(i,k) = max_{j,o} G(i,j,k,o) * best(i,j) * best(j,k)
// computed in log space with backpointers. Ties broken by smallest j, then
// Straight before Inverted. Returns the tree and its probability
// (== derivation_prob(g, tree)).
std::pair<PermTreePtr, double> map_derivation(const PcfgChart& g);

// Same maximization over raw rule weights (used to check that the argmax is
// invariant under the per-span normalization). Returns tree and logweight.
std::pair<PermTreePtr, double> map_derivation(const RuleWeightChart& w);

// Exact sampler: walks top-down from (0, n), drawing each span's rule from
// its categorical G(...). One categorical draw per visited span, spans
// visited parent-before-children, left-before-right.
PermTreePtr ancestral_sample(const PcfgChart& g, Rng& rng);

struct SampledPerm {
  PermMatrix hard;     // forward value: the selected derivation's matrix
  Mat relaxed;         // gradient-path value: softmax-weighted accumulation
  PermTreePtr tree;    // the selected derivation
  double temperature;
  std::uint64_t seed;  // seed of the Rng that produced the noise
};

// Gumbel reparameterization over the chart. Every rule's log G is perturbed
// with independent Gumbel(0,1) noise (drawn in ChartLayout rule order); each
// span then takes its argmax rule (hard) and its softmax weights at
// `temperature` (relaxed). Per-span Gumbel-argmax is an exact draw from that
// span's categorical, so the hard tree — read top-down through the argmax
// choices — is distributed exactly like ancestral_sample. The hard matrix
// equals tree_to_matrix(tree); the relaxed matrix is the block accumulation
// run with the softmax weights and converges to the hard one as the
// temperature drops.
SampledPerm gumbel_sample(const PcfgChart& g, Rng& rng,
                          double temperature = 1.0,
                          const MarginalOptions& opts = {});

// Test hook: same computation with caller-supplied per-rule noise (flat, in
// ChartLayout order). gumbel_sample fills the noise from rng and delegates.
SampledPerm gumbel_sample_with_noise(const PcfgChart& g,
                                     std::span<const double> noise,
                                     double temperature,
                                     std::uint64_t seed_tag = 0,
                                     const MarginalOptions& opts = {});

}  // namespace sepperm
