#pragma once

// Shared oracles for the test suites. Everything here is deliberately slow
// and simple: full enumeration over all derivations, closed-form counting
// formulas, and canonical tree fingerprints. The fast library code is judged
// against these, never the other way round.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sepperm/chart.hpp"
#include "sepperm/matrix.hpp"
#include "sepperm/permutation.hpp"
#include "sepperm/rng.hpp"

namespace sepperm::testing {

// Catalan numbers by the recurrence; exact for the small n used in tests.
inline long long catalan(int n) {
  if (n < 0) throw std::invalid_argument("catalan: n < 0");
  std::vector<long long> c(static_cast<std::size_t>(n) + 1, 0);
  c[0] = 1;
  for (int m = 1; m <= n; ++m)
    for (int i = 0; i < m; ++i) c[m] += c[i] * c[m - 1 - i];
  return c[n];
}

// Number of binary trees with every internal node labeled one of two ways:
// Catalan(n-1) shapes times 2^(n-1) labelings.
inline long long labeled_tree_count(int n) {
  return catalan(n - 1) * (1LL << (n - 1));
}

// Canonical fingerprint of a tree, usable as a map key.
inline std::string tree_key(const PermTree& t) {
  if (t.is_leaf()) return std::to_string(t.pos());
  const char o = t.orientation() == Orientation::Straight ? 'S' : 'I';
  return std::string(1, '(') + tree_key(*t.left()) + o + tree_key(*t.right()) +
         ')';
}

// Random log-weights, one per anchored rule, uniform on [lo, hi).
inline RuleWeightChart random_chart(int n, Rng& rng, double lo = -2.0,
                                    double hi = 2.0) {
  RuleWeightChart w(n);
  for (double& v : w.flat_mutable()) v = rng.uniform(lo, hi);
  return w;
}

// Oracle: expected permutation matrix by summing p(D) * M(D) over every
// derivation. Exponential in n; fine for n <= 6.
inline Mat brute_marginal(const PcfgChart& g) {
  const int n = g.n();
  Mat acc(n, n);
  for (const PermTreePtr& t : enumerate_trees(n)) {
    const double p = derivation_prob(g, *t);
    const Mat m = tree_to_matrix(*t).dense();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) acc(a, b) += p * m(a, b);
  }
  return acc;
}

// Oracle: highest-probability derivation by enumeration. Returns the tree
// and its probability; with continuous random weights the argmax is unique.
inline std::pair<PermTreePtr, double> brute_map(const PcfgChart& g) {
  PermTreePtr best;
  double best_p = -1.0;
  for (const PermTreePtr& t : enumerate_trees(g.n())) {
    const double p = derivation_prob(g, *t);
    if (p > best_p) {
      best_p = p;
      best = t;
    }
  }
  return {best, best_p};
}

// Oracle: the full derivation distribution as key -> probability.
inline std::map<std::string, double> exact_distribution(const PcfgChart& g) {
  std::map<std::string, double> dist;
  for (const PermTreePtr& t : enumerate_trees(g.n()))
    dist[tree_key(*t)] = derivation_prob(g, *t);
  return dist;
}

// Total-variation distance between an empirical histogram (counts keyed like
// exact_distribution) and exact probabilities.
inline double total_variation(const std::map<std::string, long long>& counts,
                              const std::map<std::string, double>& exact,
                              long long total) {
  double tv = 0.0;
  for (const auto& [key, p] : exact) {
    const auto it = counts.find(key);
    const double emp =
        it == counts.end() ? 0.0
                           : static_cast<double>(it->second) /
                                 static_cast<double>(total);
    tv += std::abs(emp - p);
  }
  // Any sampled key outside the exact support would be a hard bug; count it.
  for (const auto& [key, c] : counts)
    if (!exact.count(key))
      tv += static_cast<double>(c) / static_cast<double>(total);
  return 0.5 * tv;
}

}  // namespace sepperm::testing
