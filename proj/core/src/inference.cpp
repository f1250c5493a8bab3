#include "sepperm/inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sepperm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

Mat marginal(const PcfgChart& g, const MarginalOptions& opts) {
  const int n = g.n();
  if (n > opts.max_len)
    throw std::invalid_argument("marginal: length exceeds configured cap");
  if (n == 1) return Mat::identity(1);
  std::vector<double> stash;
  std::vector<int> offsets;
  kernel::accumulate_expected(g.layout(), g.flat(), stash, offsets);
  Mat out(n, n);
  const double* root = stash.data() + offsets.back();
  std::copy(root, root + static_cast<std::size_t>(n) * n, out.data().begin());
  return out;
}

namespace {

// Viterbi over per-rule log scores; ties broken by smallest split point,
// then Straight before Inverted (strict > keeps the first maximum in that
// scan order).
struct ViterbiResult {
  std::vector<double> best;           // per beta index
  std::vector<std::pair<int, Orientation>> back;  // per span index
};

ViterbiResult viterbi(const ChartLayout& L, std::span<const double> log_scores) {
  ViterbiResult v;
  v.best.assign(L.beta_count(), 0.0);
  v.back.assign(L.span_count(), {-1, Orientation::Straight});
  for (const auto& s : L.spans()) {
    double best = kNegInf;
    std::pair<int, Orientation> arg{-1, Orientation::Straight};
    int r = s.rule_begin;
    for (int j = s.i + 1; j < s.k; ++j) {
      const double child =
          v.best[L.beta_index(s.i, j)] + v.best[L.beta_index(j, s.k)];
      for (int o = 0; o < 2; ++o, ++r) {
        const double score = log_scores[r] + child;
        if (score > best) {
          best = score;
          arg = {j, static_cast<Orientation>(o)};
        }
      }
    }
    v.best[L.beta_index(s.i, s.k)] = best;
    v.back[L.span_index(s.i, s.k)] = arg;
  }
  return v;
}

PermTreePtr read_tree(const ChartLayout& L, const ViterbiResult& v, int i,
                      int k) {
  if (k - i == 1) return PermTree::leaf(i);
  const auto [j, o] = v.back[L.span_index(i, k)];
  return PermTree::internal(o, read_tree(L, v, i, j), read_tree(L, v, j, k));
}

}  // namespace

std::pair<PermTreePtr, double> map_derivation(const PcfgChart& g) {
  const ChartLayout& L = g.layout();
  std::vector<double> log_scores(g.flat().size());
  for (std::size_t r = 0; r < log_scores.size(); ++r)
    log_scores[r] = std::log(g.flat()[r]);
  const ViterbiResult v = viterbi(L, log_scores);
  PermTreePtr tree = read_tree(L, v, 0, L.n());
  const double logp = L.n() == 1 ? 0.0 : v.best[L.beta_index(0, L.n())];
  return {std::move(tree), std::exp(logp)};
}

std::pair<PermTreePtr, double> map_derivation(const RuleWeightChart& w) {
  const ChartLayout& L = w.layout();
  const ViterbiResult v = viterbi(L, w.flat());
  PermTreePtr tree = read_tree(L, v, 0, L.n());
  const double logw = L.n() == 1 ? 0.0 : v.best[L.beta_index(0, L.n())];
  return {std::move(tree), logw};
}

namespace {

PermTreePtr sample_span(const PcfgChart& g, Rng& rng, int i, int k) {
  if (k - i == 1) return PermTree::leaf(i);
  const ChartLayout& L = g.layout();
  const auto& s = L.spans()[L.span_index(i, k)];
  const int count = 2 * (k - i - 1);
  const int pick = rng.categorical(
      g.flat().subspan(static_cast<std::size_t>(s.rule_begin), count));
  const int j = i + 1 + pick / 2;
  const Orientation o = static_cast<Orientation>(pick % 2);
  return PermTree::internal(o, sample_span(g, rng, i, j),
                            sample_span(g, rng, j, k));
}

// Reads the per-span argmax table top-down from the root.
PermTreePtr read_argmax(const ChartLayout& L,
                        std::span<const std::pair<int, Orientation>> argmax,
                        int i, int k) {
  if (k - i == 1) return PermTree::leaf(i);
  const auto [j, o] = argmax[L.span_index(i, k)];
  return PermTree::internal(o, read_argmax(L, argmax, i, j),
                            read_argmax(L, argmax, j, k));
}

}  // namespace

PermTreePtr ancestral_sample(const PcfgChart& g, Rng& rng) {
  return sample_span(g, rng, 0, g.n());
}

SampledPerm gumbel_sample_with_noise(const PcfgChart& g,
                                     std::span<const double> noise,
                                     double temperature, std::uint64_t seed_tag,
                                     const MarginalOptions& opts) {
  if (temperature <= 0.0)
    throw std::invalid_argument("gumbel_sample: temperature must be > 0");
  const int n = g.n();
  if (n > opts.max_len)
    throw std::invalid_argument("gumbel_sample: length exceeds configured cap");
  const ChartLayout& L = g.layout();
  if (noise.size() != static_cast<std::size_t>(L.rule_count()))
    throw std::invalid_argument("gumbel_sample: noise size mismatch");

  if (n == 1) {
    return SampledPerm{PermMatrix({0}), Mat::identity(1), PermTree::leaf(0),
                       temperature, seed_tag};
  }

  // Per span: perturbed logits, argmax (hard), softmax at temperature
  // (relaxed). A rule with probability exactly 0 has logit -inf and can
  // never win the argmax.
  std::vector<double> relaxed(L.rule_count(), 0.0);
  std::vector<std::pair<int, Orientation>> argmax(L.span_count(),
                                                  {-1, Orientation::Straight});
  std::vector<double> logits;
  for (const auto& s : L.spans()) {
    const int count = 2 * (s.k - s.i - 1);
    logits.assign(count, 0.0);
    double best = kNegInf;
    int best_r = 0;
    for (int t = 0; t < count; ++t) {
      const int r = s.rule_begin + t;
      logits[t] = std::log(g.flat()[r]) + noise[r];
      if (logits[t] > best) {
        best = logits[t];
        best_r = t;
      }
    }
    argmax[L.span_index(s.i, s.k)] = {s.i + 1 + best_r / 2,
                                      static_cast<Orientation>(best_r % 2)};
    double z = 0.0;
    for (int t = 0; t < count; ++t) {
      logits[t] = std::exp((logits[t] - best) / temperature);
      z += logits[t];
    }
    for (int t = 0; t < count; ++t)
      relaxed[s.rule_begin + t] = logits[t] / z;
  }

  PermTreePtr tree = read_argmax(L, argmax, 0, n);

  std::vector<double> stash;
  std::vector<int> offsets;
  kernel::accumulate_expected(L, relaxed, stash, offsets);
  Mat relaxed_mat(n, n);
  const double* root = stash.data() + offsets.back();
  std::copy(root, root + static_cast<std::size_t>(n) * n,
            relaxed_mat.data().begin());

  return SampledPerm{tree_to_matrix(*tree), std::move(relaxed_mat), tree,
                     temperature, seed_tag};
}

SampledPerm gumbel_sample(const PcfgChart& g, Rng& rng, double temperature,
                          const MarginalOptions& opts) {
  std::vector<double> noise(g.layout().rule_count());
  for (double& x : noise) x = rng.gumbel();
  return gumbel_sample_with_noise(g, noise, temperature, rng.seed(), opts);
}

}  // namespace sepperm
