// Reverse-mode tape: every primitive op is checked against central finite
// differences of its own forward evaluation, and the structured chart ops
// are additionally checked against enumeration identities (d logZ / d logf
// equals the expected rule count; the marginal's total mass is constant so
// its gradient must vanish).

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "sepperm/autodiff.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/rng.hpp"
#include "test_support.hpp"

using namespace sepperm;
using namespace sepperm::testing;
namespace ad = sepperm::ad;

namespace {

// Builds a scalar-valued graph from one flat input node and returns the
// loss node. The same builder is used for the analytic gradient and for the
// finite-difference probes, so the two always evaluate the same function.
using Builder =
    std::function<ad::NodeId(ad::Tape&, ad::NodeId, std::span<const double>)>;

ad::FiniteDiffReport fd_report(const Builder& build,
                               std::vector<double> point, double h = 1e-6) {
  ad::Tape t;
  ad::NodeId in = t.input(point);
  ad::NodeId root = build(t, in, point);
  t.backward(root);
  std::vector<double> analytic(t.grad(in).begin(), t.grad(in).end());
  auto fn = [&](std::span<const double> p) {
    ad::Tape t2;
    ad::NodeId in2 = t2.input(p);
    return t2.scalar(build(t2, in2, p));
  };
  return ad::finite_diff_check(fn, point, analytic, h);
}

void check_op(const Builder& build, std::vector<double> point,
              double tol = 1e-6, double h = 1e-6) {
  ad::FiniteDiffReport r = fd_report(build, std::move(point), h);
  CHECK(r.all_finite);
  CHECK(r.max_rel_error <= tol);
}

std::vector<double> random_point(int len, Rng& rng, double lo = -1.5,
                                 double hi = 1.5) {
  std::vector<double> p(static_cast<std::size_t>(len));
  for (double& v : p) v = rng.uniform(lo, hi);
  return p;
}

// Expected number of times each anchored rule fires, by enumeration:
// sum of p(D) over derivations containing the rule.
std::vector<double> expected_rule_counts(const PcfgChart& g) {
  std::vector<double> counts(
      static_cast<std::size_t>(g.layout().rule_count()), 0.0);
  std::function<void(const PermTree&, double)> walk =
      [&](const PermTree& t, double p) {
        if (t.is_leaf()) return;
        const int i = t.left()->begin(), j = t.right()->begin(),
                  k = t.right()->end();
        counts[static_cast<std::size_t>(
            g.layout().rule_index(i, j, k, t.orientation()))] += p;
        walk(*t.left(), p);
        walk(*t.right(), p);
      };
  for (const PermTreePtr& t : enumerate_trees(g.n()))
    walk(*t, derivation_prob(g, *t));
  return counts;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(301);
  check_op([](ad::Tape& t, ad::NodeId in,
              std::span<const double>) {  // add / sub / mul of two halves
    ad::NodeId a = t.slice(in, 0, 4);
    ad::NodeId b = t.slice(in, 4, 4);
    return t.sum(t.mul(t.add(a, b), t.sub(a, b)));
  },
           random_point(8, rng));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.sum(t.scale(t.tanh_(in), 1.7));
  },
           random_point(6, rng));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.sum(t.mul(t.sigmoid_(in), t.exp_(in)));
  },
           random_point(6, rng));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.sum(t.log_(in));
  },
           random_point(6, rng, 0.5, 3.0));
}

TEST_CASE("quadratics are exact to machine-level precision") {
  // Central differences have zero truncation error on a quadratic, so the
  // only residual is roundoff; this pins the adjoints of mul/sum sharply.
  Rng rng(302);
  ad::FiniteDiffReport r = fd_report(
      [](ad::Tape& t, ad::NodeId in, std::span<const double>) {
        return t.sum(t.mul(in, in));
      },
      random_point(10, rng), 1e-4);
  CHECK(r.all_finite);
  CHECK(r.max_rel_error <= 1e-9);
}

TEST_CASE("matvec and matmul match finite differences and hand values") {
  Rng rng(303);
  // w is 2x3 (first 6 entries), x is length 3.
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    ad::NodeId w = t.slice(in, 0, 6);
    ad::NodeId x = t.slice(in, 6, 3);
    return t.sum(t.tanh_(t.matvec(w, x, 2, 3)));
  },
           random_point(9, rng));
  // A is 2x3, B is 3x2.
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    ad::NodeId a = t.slice(in, 0, 6);
    ad::NodeId b = t.slice(in, 6, 6);
    return t.sum(t.mul(t.matmul(a, b, 2, 3, 2), t.matmul(a, b, 2, 3, 2)));
  },
           random_point(12, rng));

  ad::Tape t;
  std::vector<double> wv = {1, 2, 3, 4, 5, 6};
  std::vector<double> xv = {1, 0, -1};
  ad::NodeId y = t.matvec(t.input(wv), t.input(xv), 2, 3);
  CHECK(t.value(y)[0] == doctest::Approx(-2.0));
  CHECK(t.value(y)[1] == doctest::Approx(-2.0));
}

TEST_CASE("concat, slice, gather and pick route values and gradients") {
  Rng rng(304);
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    ad::NodeId a = t.slice(in, 0, 3);
    ad::NodeId b = t.slice(in, 3, 2);
    ad::NodeId c = t.concat(a, b);
    std::vector<ad::NodeId> parts = {c, a};
    ad::NodeId d = t.concat_many(parts);
    return t.add(t.pick(t.tanh_(d), 1), t.pick(t.tanh_(d), 6));
  },
           random_point(5, rng));

  // Rows gathered twice must accumulate twice the gradient.
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    std::vector<int> ids = {2, 0, 2};
    return t.sum(t.tanh_(t.gather_rows(in, ids, 2)));
  },
           random_point(6, rng));

  ad::Tape t;
  std::vector<double> table = {1, 2, 3, 4, 5, 6};
  std::vector<int> ids = {2, 0};
  ad::NodeId g = t.gather_rows(t.input(table), ids, 2);
  CHECK(t.value(g)[0] == 5.0);
  CHECK(t.value(g)[1] == 6.0);
  CHECK(t.value(g)[2] == 1.0);
  CHECK(t.value(g)[3] == 2.0);
}

TEST_CASE("logsumexp, softmax and log_softmax match finite differences") {
  Rng rng(305);
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.logsumexp(in);
  },
           random_point(7, rng, -3.0, 3.0));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.pick(t.softmax(in), 2);
  },
           random_point(5, rng, -2.0, 2.0));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.pick(t.softmax(in, 0.37), 1);
  },
           random_point(5, rng, -2.0, 2.0));
  check_op([](ad::Tape& t, ad::NodeId in, std::span<const double>) {
    return t.pick(t.log_softmax(in), 3);
  },
           random_point(5, rng, -2.0, 2.0));

  // softmax at temperature tau equals softmax of v / tau.
  ad::Tape t;
  std::vector<double> v = {0.4, -1.0, 2.0};
  ad::NodeId s = t.softmax(t.input(v), 0.5);
  double denom = 0.0;
  for (double x : v) denom += std::exp(x / 0.5);
  for (int i = 0; i < 3; ++i)
    CHECK(t.value(s)[i] ==
          doctest::Approx(std::exp(v[static_cast<std::size_t>(i)] / 0.5) /
                          denom)
              .epsilon(1e-12));
  // log_softmax exponentiates to softmax.
  ad::NodeId ls = t.log_softmax(t.input(v));
  ad::NodeId sm = t.softmax(t.input(v));
  for (int i = 0; i < 3; ++i)
    CHECK(std::exp(t.value(ls)[i]) ==
          doctest::Approx(t.value(sm)[i]).epsilon(1e-12));
}

TEST_CASE("straight_through: hard forward, relaxed backward") {
  ad::Tape t;
  std::vector<double> logits = {0.2, -0.4, 1.1};
  ad::NodeId in = t.input(logits);
  ad::NodeId relaxed = t.softmax(in);
  std::vector<double> hard = {0.0, 0.0, 1.0};
  ad::NodeId st = t.straight_through(hard, relaxed);
  CHECK(t.value(st)[0] == 0.0);
  CHECK(t.value(st)[1] == 0.0);
  CHECK(t.value(st)[2] == 1.0);

  ad::NodeId loss = t.pick(st, 0);
  t.backward(loss);
  // The adjoint must be exactly what the relaxed path would have received.
  ad::Tape t2;
  ad::NodeId in2 = t2.input(logits);
  ad::NodeId loss2 = t2.pick(t2.softmax(in2), 0);
  t2.backward(loss2);
  for (int i = 0; i < 3; ++i)
    CHECK(t.grad(in)[i] == doctest::Approx(t2.grad(in2)[i]).epsilon(1e-14));
}

TEST_CASE("gradients accumulate across reuses of a node") {
  ad::Tape t;
  std::vector<double> v = {1.5};
  ad::NodeId x = t.input(v);
  ad::NodeId y = t.sum(t.add(x, x));
  t.backward(y);
  CHECK(t.grad(x)[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("backward on an empty tape throws") {
  ad::Tape t;
  CHECK_THROWS_AS(t.backward(0), std::logic_error);
}

TEST_CASE("reset reuses the arena without changing results") {
  ad::Tape t;
  std::vector<double> v = {0.3, -0.7, 1.2};
  double first = 0.0;
  for (int round = 0; round < 3; ++round) {
    t.reset();
    ad::NodeId in = t.input(v);
    ad::NodeId loss = t.logsumexp(t.tanh_(in));
    if (round == 0)
      first = t.scalar(loss);
    else
      CHECK(t.scalar(loss) == first);
    t.backward(loss);
  }
}

TEST_CASE("layout_cache survives reset and deduplicates by length") {
  ad::Tape t;
  const ChartLayout* a = &t.layout_cache(5);
  const ChartLayout* b = &t.layout_cache(5);
  CHECK(a == b);
  CHECK(a->n() == 5);
  t.reset();
  CHECK(&t.layout_cache(5) == a);
  CHECK(&t.layout_cache(3) != a);
}

TEST_CASE("inside gradient equals expected rule counts") {
  // d logZ / d logf(r) is the marginal probability that rule r fires, a
  // standard identity checked here against full enumeration.
  Rng rng(306);
  for (int n = 2; n <= 5; ++n)
    for (int rep = 0; rep < 4; ++rep) {
      RuleWeightChart w = random_chart(n, rng, -2.0, 2.0);
      PcfgChart g = wcfg_to_pcfg(w);
      std::vector<double> oracle = expected_rule_counts(g);

      ad::Tape t;
      ad::NodeId logf = t.input(w.flat());
      const ChartLayout& L = t.layout_cache(n);
      ad::NodeId beta = t.inside_chart(logf, L);
      ad::NodeId logz = t.pick(beta, L.beta_index(0, n));
      t.backward(logz);
      for (int r = 0; r < L.rule_count(); ++r)
        CHECK(t.grad(logf)[r] ==
              doctest::Approx(oracle[static_cast<std::size_t>(r)])
                  .epsilon(1e-9));
    }
}

TEST_CASE("inside and normalization ops match finite differences") {
  Rng rng(307);
  for (int n : {2, 3, 4}) {
    ChartLayout L(n);
    std::vector<double> probe = random_point(L.rule_count(), rng, -0.5, 0.5);
    check_op(
        [n, probe](ad::Tape& t, ad::NodeId in, std::span<const double>) {
          const ChartLayout& layout = t.layout_cache(n);
          ad::NodeId beta = t.inside_chart(in, layout);
          ad::NodeId g = t.pcfg_chart(in, beta, layout);
          return t.sum(t.mul(g, t.input(probe)));
        },
        random_point(L.rule_count(), rng, -1.5, 1.5), 2e-6);
  }
}

TEST_CASE("expected permutation matches finite differences") {
  Rng rng(308);
  for (int n : {2, 3, 4}) {
    ChartLayout L(n);
    std::vector<double> probe = random_point(n * n, rng, -1.0, 1.0);
    check_op(
        [n, probe](ad::Tape& t, ad::NodeId in, std::span<const double>) {
          const ChartLayout& layout = t.layout_cache(n);
          ad::NodeId beta = t.inside_chart(in, layout);
          ad::NodeId g = t.pcfg_chart(in, beta, layout);
          ad::NodeId e = t.expected_perm(g, layout);
          return t.sum(t.mul(e, t.input(probe)));
        },
        random_point(L.rule_count(), rng, -1.5, 1.5), 2e-6);
  }
}

TEST_CASE("two-token marginal entry has the hand-computed gradient") {
  // With logf = (log 3, 0) the Straight rule gets probability 3/4 and the
  // (0,0) marginal entry equals it, so d E(0,0) / d logf_S must be
  // 0.75 * 0.25 = 3/16 and d E(0,0) / d logf_I its negation.
  ad::Tape t;
  std::vector<double> logf = {std::log(3.0), 0.0};
  ad::NodeId in = t.input(logf);
  const ChartLayout& L = t.layout_cache(2);
  ad::NodeId e =
      t.expected_perm(t.pcfg_chart(in, t.inside_chart(in, L), L), L);
  ad::NodeId loss = t.pick(e, 0);
  CHECK(t.scalar(loss) == doctest::Approx(0.75).epsilon(1e-12));
  t.backward(loss);
  CHECK(t.grad(in)[0] == doctest::Approx(3.0 / 16.0).epsilon(1e-12));
  CHECK(t.grad(in)[1] == doctest::Approx(-3.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("marginal mass is conserved so its gradient vanishes") {
  // The expected permutation matrix is doubly stochastic for every
  // parameter setting: its total mass is identically n. The gradient of
  // that sum must therefore be zero to roundoff — a sharp cancellation test
  // across the whole structured backward path.
  Rng rng(309);
  for (int n : {2, 3, 5, 7}) {
    RuleWeightChart w = random_chart(n, rng, -2.0, 2.0);
    ad::Tape t;
    ad::NodeId in = t.input(w.flat());
    const ChartLayout& L = t.layout_cache(n);
    ad::NodeId e =
        t.expected_perm(t.pcfg_chart(in, t.inside_chart(in, L), L), L);
    ad::NodeId loss = t.sum(e);
    CHECK(t.scalar(loss) == doctest::Approx(static_cast<double>(n))
                                .epsilon(1e-12));
    t.backward(loss);
    for (int r = 0; r < L.rule_count(); ++r)
      CHECK(std::abs(t.grad(in)[r]) <= 1e-12);
  }
}

TEST_CASE("random charts never produce non-finite values or gradients") {
  Rng rng(310);
  ad::Tape t;
  for (int rep = 0; rep < 2000; ++rep) {
    const int n = 2 + rep % 5;
    t.reset();
    RuleWeightChart w = random_chart(n, rng, -6.0, 6.0);
    ad::NodeId in = t.input(w.flat());
    const ChartLayout& L = t.layout_cache(n);
    ad::NodeId e =
        t.expected_perm(t.pcfg_chart(in, t.inside_chart(in, L), L), L);
    ad::NodeId loss = t.logsumexp(e);
    REQUIRE(std::isfinite(t.scalar(loss)));
    t.backward(loss);
    for (double gv : t.grad(in)) REQUIRE(std::isfinite(gv));
  }
}

TEST_CASE("finite_diff_check probes only requested coordinates") {
  // A deliberately wrong analytic entry outside the probed set must not be
  // noticed; inside the probed set it must be.
  auto fn = [](std::span<const double> p) { return p[0] * p[0] + p[1]; };
  std::vector<double> point = {1.0, 2.0};
  std::vector<double> wrong = {2.0, 55.0};  // correct for coord 0 only
  std::vector<std::size_t> only0 = {0};
  ad::FiniteDiffReport ok = ad::finite_diff_check(fn, point, wrong, 1e-5,
                                                  only0);
  CHECK(ok.max_rel_error <= 1e-8);
  ad::FiniteDiffReport bad = ad::finite_diff_check(fn, point, wrong, 1e-5);
  CHECK(bad.max_rel_error > 1.0);
  CHECK(bad.worst_coord == 1);
}

}  // TEST_SUITE
