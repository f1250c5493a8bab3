// Exact inference over the chart: marginal permutation matrices, MAP
// derivations, and the two samplers. Oracles: full enumeration for marginals
// and argmax; empirical-vs-exact total variation for the samplers. The heavy
// statistical versions (100k draws, hundreds of charts) live in the
// acceptance binary; these are the fast structural versions of the same
// checks.

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "sepperm/chart.hpp"
#include "sepperm/inference.hpp"
#include "sepperm/matrix.hpp"
#include "sepperm/rng.hpp"
#include "test_support.hpp"

using namespace sepperm;
using namespace sepperm::testing;

TEST_SUITE("inference") {

TEST_CASE("marginal equals the enumeration oracle") {
  Rng rng(201);
  for (int n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 8; ++rep) {
      PcfgChart g = wcfg_to_pcfg(random_chart(n, rng, -2.5, 2.5));
      Mat fast = marginal(g);
      Mat slow = brute_marginal(g);
      CHECK(max_abs_diff(fast, slow) <= 1e-12);
    }
}

TEST_CASE("single-token marginal is the 1x1 identity") {
  PcfgChart g = wcfg_to_pcfg(RuleWeightChart(1));
  Mat m = marginal(g);
  REQUIRE(m.rows() == 1);
  CHECK(m(0, 0) == 1.0);
}

TEST_CASE("uniform two-token chart splits mass evenly") {
  PcfgChart g = wcfg_to_pcfg(RuleWeightChart(2));
  Mat m = marginal(g);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      CHECK(m(a, b) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("marginals are doubly stochastic at width 20") {
  Rng rng(202);
  for (int rep = 0; rep < 5; ++rep) {
    PcfgChart g = wcfg_to_pcfg(random_chart(20, rng, -2.0, 2.0));
    CHECK(is_doubly_stochastic(marginal(g), 1e-9));
  }
}

TEST_CASE("marginal refuses inputs past the configured cap") {
  PcfgChart g = wcfg_to_pcfg(RuleWeightChart(8));
  MarginalOptions opts;
  opts.max_len = 7;
  CHECK_THROWS_AS(marginal(g, opts), std::invalid_argument);
}

TEST_CASE("map_derivation matches brute-force argmax") {
  Rng rng(203);
  for (int n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      RuleWeightChart w = random_chart(n, rng, -3.0, 3.0);
      PcfgChart g = wcfg_to_pcfg(w);
      auto [fast_tree, fast_p] = map_derivation(g);
      auto [slow_tree, slow_p] = brute_map(g);
      CHECK(fast_tree->equals(*slow_tree));
      CHECK(fast_p == doctest::Approx(slow_p).epsilon(1e-9));
      CHECK(fast_p ==
            doctest::Approx(derivation_prob(g, *fast_tree)).epsilon(1e-9));
    }
}

TEST_CASE("map over raw weights agrees with map over the converted chart") {
  // Per-span normalization is a monotone rescaling of whole derivations, so
  // the best tree must not move; its reported score is the log-weight.
  Rng rng(204);
  for (int n = 2; n <= 6; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      RuleWeightChart w = random_chart(n, rng, -3.0, 3.0);
      auto [raw_tree, raw_lw] = map_derivation(w);
      auto [g_tree, g_p] = map_derivation(wcfg_to_pcfg(w));
      CHECK(raw_tree->equals(*g_tree));
      CHECK(raw_lw ==
            doctest::Approx(derivation_logweight(w, *raw_tree)).epsilon(1e-9));
    }
}

TEST_CASE("map tie-breaking: smallest split, then Straight") {
  // On a fully uniform chart every derivation has equal probability, so the
  // tie rule alone determines the answer: every span picks its leftmost
  // split with a Straight label.
  PcfgChart g = wcfg_to_pcfg(RuleWeightChart(3));
  auto [tree, p] = map_derivation(g);
  CHECK(tree_key(*tree) == "(0S(1S2))");
  CHECK(p == doctest::Approx(1.0 / 8.0).epsilon(1e-12));

  PcfgChart g4 = wcfg_to_pcfg(RuleWeightChart(4));
  auto [tree4, p4] = map_derivation(g4);
  CHECK(tree_key(*tree4) == "(0S(1S(2S3)))");
}

TEST_CASE("ancestral samples stay inside the exact support") {
  Rng rng(205);
  PcfgChart g = wcfg_to_pcfg(random_chart(4, rng));
  auto exact = exact_distribution(g);
  Rng sampler(206);
  for (int rep = 0; rep < 500; ++rep) {
    PermTreePtr t = ancestral_sample(g, sampler);
    CHECK(exact.count(tree_key(*t)) == 1);
  }
}

TEST_CASE("ancestral sampling tracks exact probabilities") {
  Rng rng(207);
  PcfgChart g = wcfg_to_pcfg(random_chart(3, rng));
  auto exact = exact_distribution(g);
  std::map<std::string, long long> counts;
  Rng sampler(208);
  const long long total = 20000;
  for (long long rep = 0; rep < total; ++rep)
    counts[tree_key(*ancestral_sample(g, sampler))]++;
  CHECK(total_variation(counts, exact, total) < 0.03);
}

TEST_CASE("gumbel hard samples track exact probabilities") {
  Rng rng(209);
  PcfgChart g = wcfg_to_pcfg(random_chart(3, rng));
  auto exact = exact_distribution(g);
  std::map<std::string, long long> counts;
  Rng sampler(210);
  const long long total = 20000;
  for (long long rep = 0; rep < total; ++rep) {
    SampledPerm s = gumbel_sample(g, sampler);
    counts[tree_key(*s.tree)]++;
  }
  CHECK(total_variation(counts, exact, total) < 0.03);
}

TEST_CASE("gumbel hard matrix is the sampled tree's matrix") {
  Rng rng(211);
  PcfgChart g = wcfg_to_pcfg(random_chart(5, rng));
  Rng sampler(212);
  for (int rep = 0; rep < 50; ++rep) {
    SampledPerm s = gumbel_sample(g, sampler, 0.7);
    CHECK(s.hard == tree_to_matrix(*s.tree));
    CHECK(s.temperature == 0.7);
    CHECK(is_doubly_stochastic(s.relaxed, 1e-9));
  }
}

TEST_CASE("gumbel draws are reproducible from the seed") {
  Rng rng(213);
  PcfgChart g = wcfg_to_pcfg(random_chart(4, rng));
  Rng s1(99), s2(99);
  for (int rep = 0; rep < 20; ++rep) {
    SampledPerm a = gumbel_sample(g, s1);
    SampledPerm b = gumbel_sample(g, s2);
    CHECK(a.tree->equals(*b.tree));
    CHECK(a.hard == b.hard);
    CHECK(max_abs_diff(a.relaxed, b.relaxed) == 0.0);
  }
}

TEST_CASE("zero noise on a dominant chart recovers the top derivation") {
  // Boost one derivation far above everything else; with the noise silenced
  // the per-span argmax walk must follow exactly that tree, and the relaxed
  // matrix must collapse onto the hard one as the temperature drops.
  RuleWeightChart w(4);
  // Dominant tree: ((0 I 1) S (2 I 3)).
  w.set_logf(0, 1, 2, Orientation::Inverted, 10.0);
  w.set_logf(2, 3, 4, Orientation::Inverted, 10.0);
  w.set_logf(0, 2, 4, Orientation::Straight, 10.0);
  PcfgChart g = wcfg_to_pcfg(w);
  std::vector<double> zero(static_cast<std::size_t>(w.layout().rule_count()),
                           0.0);
  SampledPerm s = gumbel_sample_with_noise(g, zero, 0.05);
  CHECK(tree_key(*s.tree) == "((0I1)S(2I3))");
  CHECK(s.hard.slots() == std::vector<int>{1, 0, 3, 2});
  CHECK(max_abs_diff(s.hard.dense(), s.relaxed) < 1e-3);
  auto [map_tree, map_p] = map_derivation(g);
  CHECK(map_tree->equals(*s.tree));
}

TEST_CASE("relaxed matrix converges to hard as temperature drops") {
  Rng rng(214);
  PcfgChart g = wcfg_to_pcfg(random_chart(4, rng));
  std::vector<double> noise(
      static_cast<std::size_t>(g.layout().rule_count()));
  Rng noise_rng(215);
  for (double& v : noise) v = noise_rng.gumbel();
  SampledPerm hot = gumbel_sample_with_noise(g, noise, 1.0);
  SampledPerm cold = gumbel_sample_with_noise(g, noise, 0.001);
  CHECK(hot.tree->equals(*cold.tree));  // same noise, same argmax
  CHECK(max_abs_diff(cold.hard.dense(), cold.relaxed) <
        max_abs_diff(hot.hard.dense(), hot.relaxed));
  CHECK(max_abs_diff(cold.hard.dense(), cold.relaxed) < 1e-3);
}

}  // TEST_SUITE
