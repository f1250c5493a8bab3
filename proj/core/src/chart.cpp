#include "sepperm/chart.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sepperm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

ChartLayout::ChartLayout(int n) : n_(n) {
  if (n < 1 || n > kMaxN)
    throw std::invalid_argument("ChartLayout: n must be in [1, 64]");
  span_id_.assign((n + 1) * (n + 1), -1);
  beta_id_.assign((n + 1) * (n + 1), -1);
  int beta = 0;
  for (int w = 1; w <= n; ++w)
    for (int i = 0; i + w <= n; ++i) {
      beta_id_[id(i, i + w)] = beta++;
      if (w >= 2) {
        span_id_[id(i, i + w)] = static_cast<int>(spans_.size());
        spans_.push_back(Span{i, i + w, rule_count_});
        rule_count_ += 2 * (w - 1);
      }
    }
  beta_index_.resize(beta);
}

RuleWeightChart::RuleWeightChart(int n)
    : layout_(n), logf_(layout_.rule_count(), 0.0) {}

namespace kernel {

double logsumexp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> inside_logbeta(const ChartLayout& L,
                                   std::span<const double> logf) {
  std::vector<double> lb(L.beta_count(), 0.0);
  std::vector<double> terms;
  terms.reserve(2 * L.n());
  for (const auto& s : L.spans()) {
    terms.clear();
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const double child =
          lb[L.beta_index(s.i, j)] + lb[L.beta_index(j, s.k)];
      terms.push_back(logf[r++] + child);  // Straight
      terms.push_back(logf[r++] + child);  // Inverted
    }
    lb[L.beta_index(s.i, s.k)] = logsumexp(terms);
  }
  return lb;
}

void inside_backward(const ChartLayout& L, std::span<const double> logf,
                     std::span<const double> logbeta,
                     std::span<double> logbeta_adj,
                     std::span<double> logf_adj) {
  // Parents have strictly larger width, so sweeping widths downward sees a
  // span's full adjoint before propagating through it.
  const auto& spans = L.spans();
  for (int si = static_cast<int>(spans.size()) - 1; si >= 0; --si) {
    const auto& s = spans[si];
    const double a = logbeta_adj[L.beta_index(s.i, s.k)];
    if (a == 0.0) continue;
    const double parent = logbeta[L.beta_index(s.i, s.k)];
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const int bl = L.beta_index(s.i, j), br = L.beta_index(j, s.k);
      const double child = logbeta[bl] + logbeta[br];
      for (int o = 0; o < 2; ++o, ++r) {
        const double w = std::exp(logf[r] + child - parent);
        if (w == 0.0) continue;
        const double g = a * w;
        logf_adj[r] += g;
        logbeta_adj[bl] += g;
        logbeta_adj[br] += g;
      }
    }
  }
}

void accumulate_expected(const ChartLayout& L, std::span<const double> weights,
                         std::vector<double>& stash,
                         std::vector<int>& offsets) {
  const auto& spans = L.spans();
  offsets.resize(spans.size());
  std::size_t total = 0;
  for (std::size_t si = 0; si < spans.size(); ++si) {
    offsets[si] = static_cast<int>(total);
    const int w = spans[si].k - spans[si].i;
    total += static_cast<std::size_t>(w) * w;
  }
  stash.assign(total, 0.0);

  for (std::size_t si = 0; si < spans.size(); ++si) {
    const auto& s = spans[si];
    const int w = s.k - s.i;
    double* E = stash.data() + offsets[si];
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const int p = j - s.i, q = s.k - j;
      const double* EL =
          p >= 2 ? stash.data() + offsets[L.span_index(s.i, j)] : nullptr;
      const double* ER =
          q >= 2 ? stash.data() + offsets[L.span_index(j, s.k)] : nullptr;
      const double gS = weights[r++];
      const double gI = weights[r++];
      if (gS != 0.0) {
        // Straight: left block at (0,0), right block at (p,p).
        if (EL) {
          for (int a = 0; a < p; ++a)
            for (int c = 0; c < p; ++c) E[a * w + c] += gS * EL[a * p + c];
        } else {
          E[0] += gS;
        }
        if (ER) {
          for (int a = 0; a < q; ++a)
            for (int c = 0; c < q; ++c)
              E[(p + a) * w + (p + c)] += gS * ER[a * q + c];
        } else {
          E[p * w + p] += gS;
        }
      }
      if (gI != 0.0) {
        // Inverted: right block top-right (0,p), left block bottom-left (q,0).
        if (ER) {
          for (int a = 0; a < q; ++a)
            for (int c = 0; c < q; ++c) E[a * w + (p + c)] += gI * ER[a * q + c];
        } else {
          E[p] += gI;
        }
        if (EL) {
          for (int a = 0; a < p; ++a)
            for (int c = 0; c < p; ++c) E[(q + a) * w + c] += gI * EL[a * p + c];
        } else {
          E[q * w] += gI;
        }
      }
    }
  }
}

void accumulate_expected_backward(const ChartLayout& L,
                                  std::span<const double> weights,
                                  std::span<const double> stash,
                                  std::span<const int> offsets,
                                  std::span<const double> root_adj,
                                  std::span<double> weight_adj) {
  const auto& spans = L.spans();
  if (spans.empty()) return;
  std::vector<double> adj(stash.size(), 0.0);
  {
    // Root span is the last (widest); seed its block with root_adj.
    const std::size_t root = spans.size() - 1;
    double* A = adj.data() + offsets[root];
    for (std::size_t t = 0; t < root_adj.size(); ++t) A[t] = root_adj[t];
  }
  for (int si = static_cast<int>(spans.size()) - 1; si >= 0; --si) {
    const auto& s = spans[si];
    const int w = s.k - s.i;
    const double* A = adj.data() + offsets[si];
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const int p = j - s.i, q = s.k - j;
      const bool lw = p >= 2, rw = q >= 2;
      const double* EL = lw ? stash.data() + offsets[L.span_index(s.i, j)] : nullptr;
      const double* ER = rw ? stash.data() + offsets[L.span_index(j, s.k)] : nullptr;
      double* AL = lw ? adj.data() + offsets[L.span_index(s.i, j)] : nullptr;
      double* AR = rw ? adj.data() + offsets[L.span_index(j, s.k)] : nullptr;
      const double gS = weights[r], gI = weights[r + 1];

      double dS = 0.0;
      if (lw) {
        for (int a = 0; a < p; ++a)
          for (int c = 0; c < p; ++c) {
            const double pa = A[a * w + c];
            dS += pa * EL[a * p + c];
            AL[a * p + c] += gS * pa;
          }
      } else {
        dS += A[0];
      }
      if (rw) {
        for (int a = 0; a < q; ++a)
          for (int c = 0; c < q; ++c) {
            const double pa = A[(p + a) * w + (p + c)];
            dS += pa * ER[a * q + c];
            AR[a * q + c] += gS * pa;
          }
      } else {
        dS += A[p * w + p];
      }
      weight_adj[r] += dS;

      double dI = 0.0;
      if (rw) {
        for (int a = 0; a < q; ++a)
          for (int c = 0; c < q; ++c) {
            const double pa = A[a * w + (p + c)];
            dI += pa * ER[a * q + c];
            AR[a * q + c] += gI * pa;
          }
      } else {
        dI += A[p];
      }
      if (lw) {
        for (int a = 0; a < p; ++a)
          for (int c = 0; c < p; ++c) {
            const double pa = A[(q + a) * w + c];
            dI += pa * EL[a * p + c];
            AL[a * p + c] += gI * pa;
          }
      } else {
        dI += A[q * w];
      }
      weight_adj[r + 1] += dI;
      r += 2;
    }
  }
}

}  // namespace kernel

InsideChart inside(const RuleWeightChart& w) {
  return InsideChart(w.layout(), kernel::inside_logbeta(w.layout(), w.flat()));
}

PcfgChart wcfg_to_pcfg(const RuleWeightChart& w, const InsideChart& b) {
  if (w.n() != b.n())
    throw std::invalid_argument("wcfg_to_pcfg: chart sizes differ");
  const ChartLayout& L = w.layout();
  std::span<const double> logf = w.flat();
  std::vector<double> probs(L.rule_count());
  for (const auto& s : L.spans()) {
    const double parent = b.logbeta(s.i, s.k);
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const double child = b.logbeta(s.i, j) + b.logbeta(j, s.k);
      probs[r] = std::exp(logf[r] + child - parent);
      ++r;
      probs[r] = std::exp(logf[r] + child - parent);
      ++r;
    }
  }
  return PcfgChart(L, std::move(probs));
}

PcfgChart wcfg_to_pcfg(const RuleWeightChart& w) {
  return wcfg_to_pcfg(w, inside(w));
}

namespace {

template <typename Score>
double walk_tree(const PermTree& t, const Score& score, bool product) {
  if (t.is_leaf()) return product ? 1.0 : 0.0;
  const double here = score(t.begin(), t.left()->end(), t.end(),
                            t.orientation());
  const double l = walk_tree(*t.left(), score, product);
  const double r = walk_tree(*t.right(), score, product);
  return product ? here * l * r : here + l + r;
}

}  // namespace

double derivation_logweight(const RuleWeightChart& w, const PermTree& tree) {
  if (tree.begin() != 0 || tree.end() != w.n())
    throw std::invalid_argument("derivation_logweight: tree span mismatch");
  return walk_tree(
      tree,
      [&](int i, int j, int k, Orientation o) { return w.logf(i, j, k, o); },
      /*product=*/false);
}

double derivation_prob(const PcfgChart& g, const PermTree& tree) {
  if (tree.begin() != 0 || tree.end() != g.n())
    throw std::invalid_argument("derivation_prob: tree span mismatch");
  return walk_tree(
      tree,
      [&](int i, int j, int k, Orientation o) { return g.prob(i, j, k, o); },
      /*product=*/true);
}

}  // namespace sepperm
