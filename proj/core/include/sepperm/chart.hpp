#pragma once

#include <span>
#include <vector>

#include "sepperm/permutation.hpp"

namespace sepperm {

// Indexing scheme shared by every chart-shaped object. For a sentence of n
// tokens the anchored binary rules are (i, j, k, o) with 0 <= i < j < k <= n
// and o in {Straight, Inverted}; terminal rules are implicit with weight 1.
//
// Rule order: spans (i,k) of width >= 2 sorted by (width ascending, i
// ascending); within a span, split point j ascending, Straight before
// Inverted. Everything that walks a chart (inside pass, marginals, samplers,
// noise draws) uses this one order, which is what makes runs reproducible.
class ChartLayout {
 public:
  explicit ChartLayout(int n);  // throws std::invalid_argument unless 1<=n<=64

  struct Span {
    int i, k;
    int rule_begin;  // rules occupy [rule_begin, rule_begin + 2*(k-i-1))
  };

  int n() const { return n_; }
  // Hard size limit: the marginal pass is O(n^4) memory.
  static constexpr int kMaxN = 64;

  int rule_count() const { return rule_count_; }
  int span_count() const { return static_cast<int>(spans_.size()); }
  int beta_count() const { return static_cast<int>(beta_index_.size()); }

  // Spans of width >= 2, ascending width.
  const std::vector<Span>& spans() const { return spans_; }

  int rule_index(int i, int j, int k, Orientation o) const {
    const Span& s = spans_[span_index(i, k)];
    return s.rule_begin + 2 * (j - i - 1) + (o == Orientation::Inverted);
  }
  int span_index(int i, int k) const { return span_id_[id(i, k)]; }

  // Index into a table over all spans of width >= 1 (inside scores).
  int beta_index(int i, int k) const { return beta_id_[id(i, k)]; }

 private:
  int id(int i, int k) const { return i * (n_ + 1) + k; }

  int n_ = 0;
  int rule_count_ = 0;
  std::vector<Span> spans_;
  std::vector<int> span_id_;   // (i,k) -> span index, -1 if width < 2
  std::vector<int> beta_id_;   // (i,k) -> beta index, -1 if k <= i
  std::vector<int> beta_index_;  // dense list of beta slots (for counting)
};

// Log-weighted grammar over one sentence length: logf per anchored rule.
// A default-constructed chart has logf = 0 (weight 1) everywhere.
class RuleWeightChart {
 public:
  explicit RuleWeightChart(int n);

  int n() const { return layout_.n(); }
  const ChartLayout& layout() const { return layout_; }

  double logf(int i, int j, int k, Orientation o) const {
    return logf_[layout_.rule_index(i, j, k, o)];
  }
  void set_logf(int i, int j, int k, Orientation o, double v) {
    logf_[layout_.rule_index(i, j, k, o)] = v;
  }

  std::span<const double> flat() const { return logf_; }
  std::vector<double>& flat_mutable() { return logf_; }

 private:
  ChartLayout layout_;
  std::vector<double> logf_;
};

// Inside scores in log space: logbeta(i,k) = log of the total weight of all
// trees over span (i,k); width-1 spans score 0 (terminal weight fixed to 1).
class InsideChart {
 public:
  InsideChart(ChartLayout layout, std::vector<double> logbeta)
      : layout_(std::move(layout)), logbeta_(std::move(logbeta)) {}

  int n() const { return layout_.n(); }
  double logbeta(int i, int k) const {
    return logbeta_[layout_.beta_index(i, k)];
  }
  double log_partition() const { return logbeta(0, n()); }
  std::span<const double> flat() const { return logbeta_; }

 private:
  ChartLayout layout_;
  std::vector<double> logbeta_;
};

// Locally normalized grammar: G(i,j,k,o) is the probability of expanding
// span (i,k) with split j and orientation o; each span's 2(k-i-1) rules sum
// to 1. Stored in linear space.
class PcfgChart {
 public:
  PcfgChart(ChartLayout layout, std::vector<double> probs)
      : layout_(std::move(layout)), probs_(std::move(probs)) {}

  int n() const { return layout_.n(); }
  const ChartLayout& layout() const { return layout_; }
  double prob(int i, int j, int k, Orientation o) const {
    return probs_[layout_.rule_index(i, j, k, o)];
  }
  std::span<const double> flat() const { return probs_; }

 private:
  ChartLayout layout_;
  std::vector<double> probs_;
};

// Bottom-up inside pass, log-sum-exp per span.
InsideChart inside(const RuleWeightChart& w);

// Per-span normalization G = f * beta_l * beta_r / beta_parent (computed in
// log space). The induced derivation distribution is identical to the
// globally normalized one: prod G over a tree == prod f / Z.
PcfgChart wcfg_to_pcfg(const RuleWeightChart& w, const InsideChart& b);
PcfgChart wcfg_to_pcfg(const RuleWeightChart& w);  // runs inside() itself

// Sum of logf over the anchored rules of `tree` (terminals contribute 0).
// Throws std::invalid_argument unless tree covers [0, n).
double derivation_logweight(const RuleWeightChart& w, const PermTree& tree);

// Product of G over the anchored rules of `tree`.
double derivation_prob(const PcfgChart& g, const PermTree& tree);

namespace kernel {

// Shared numeric kernels. `logf`, `weights`, `adjoints` are flat per-rule
// arrays in ChartLayout order; `logbeta` is a flat per-span array indexed by
// beta_index.

double logsumexp(std::span<const double> xs);

std::vector<double> inside_logbeta(const ChartLayout& L,
                                   std::span<const double> logf);

// Reverse sweep of inside_logbeta: takes d(loss)/d(logbeta) seeds, adds
// d(loss)/d(logf) into logf_adj. `logbeta_adj` is consumed (mutated).
void inside_backward(const ChartLayout& L, std::span<const double> logf,
                     std::span<const double> logbeta,
                     std::span<double> logbeta_adj, std::span<double> logf_adj);

// Weighted block accumulation over the chart. For every span (i,k) of width
// w >= 2, fills a w-by-w matrix
//   E(i,k) = sum_j  w_S(i,j,k) * direct_blocks(E(i,j), E(j,k))
//          + sum_j  w_I(i,j,k) * skew_blocks(E(i,j), E(j,k))
// with width-1 spans acting as [[1]]. Matrices are appended to `stash` in
// span order; `offsets[s]` is the start of span s's matrix. When `weights`
// is a PcfgChart the root matrix is the marginal (doubly stochastic); with
// one-hot weights it is the selected derivation's permutation matrix.
void accumulate_expected(const ChartLayout& L, std::span<const double> weights,
                         std::vector<double>& stash,
                         std::vector<int>& offsets);

// Reverse sweep of accumulate_expected. `root_adj` is d(loss)/d(root matrix)
// (n*n, row-major); adds d(loss)/d(weights) into weight_adj.
void accumulate_expected_backward(const ChartLayout& L,
                                  std::span<const double> weights,
                                  std::span<const double> stash,
                                  std::span<const int> offsets,
                                  std::span<const double> root_adj,
                                  std::span<double> weight_adj);

}  // namespace kernel
}  // namespace sepperm
