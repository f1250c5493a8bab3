// Span scorer: recurrent encoder, boundary-difference span embeddings, and
// the per-split two-output head. The plain (tape-free) evaluation and the
// tape graph are required to produce identical numbers, and the tape's
// gradients are checked against finite differences of the plain evaluation
// — which proves both paths compute the same function of the parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "doctest.h"
#include "sepperm/autodiff.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/rng.hpp"
#include "sepperm/scorer.hpp"

using namespace sepperm;
namespace ad = sepperm::ad;

namespace {

ScorerParams small_params(std::uint64_t seed = 41) {
  Rng rng(seed);
  return ScorerParams::init(/*vocab=*/16, /*d_embed=*/6, /*h_enc=*/5,
                            /*mlp_hidden=*/7, rng);
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("encode shape and input validation") {
  ScorerParams p = small_params();
  std::vector<int> tokens = {3, 1, 4, 1, 5};
  Mat enc = encode(p, tokens);
  CHECK(enc.rows() == 5);
  CHECK(enc.cols() == 2 * p.h_enc);
  CHECK_THROWS_AS(encode(p, std::vector<int>{}), std::invalid_argument);
  CHECK_THROWS_AS(encode(p, std::vector<int>{0, 16}), std::invalid_argument);
  CHECK_THROWS_AS(encode(p, std::vector<int>{-1}), std::invalid_argument);
}

TEST_CASE("span embeddings are boundary differences") {
  ScorerParams p = small_params();
  std::vector<int> tokens = {2, 7, 9, 4};
  Mat enc = encode(p, tokens);
  const int h = p.h_enc, n = 4;

  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k <= n; ++k) {
      std::vector<double> s = span_embedding(enc, i, k);
      REQUIRE(static_cast<int>(s.size()) == 2 * h);
      for (int c = 0; c < h; ++c) {
        const double f_hi = enc(k - 1, c);
        const double f_lo = i > 0 ? enc(i - 1, c) : 0.0;
        CHECK(s[static_cast<std::size_t>(c)] == f_hi - f_lo);
        const double b_lo = enc(i, h + c);
        const double b_hi = k < n ? enc(k, h + c) : 0.0;
        CHECK(s[static_cast<std::size_t>(h + c)] == b_lo - b_hi);
      }
    }
}

TEST_CASE("score_rules covers the layout and is deterministic") {
  ScorerParams p = small_params();
  std::vector<int> tokens = {1, 2, 3};
  RuleWeightChart w = score_rules(p, tokens);
  CHECK(w.n() == 3);
  CHECK(w.layout().rule_count() == 8);
  for (double v : w.flat()) CHECK(std::isfinite(v));

  RuleWeightChart w2 = score_rules(p, tokens);
  for (int r = 0; r < 8; ++r) CHECK(w.flat()[r] == w2.flat()[r]);

  // Single token: no anchored rules, empty chart.
  RuleWeightChart w1 = score_rules(p, std::vector<int>{5});
  CHECK(w1.layout().rule_count() == 0);
}

TEST_CASE("scores depend on position and split") {
  ScorerParams p = small_params();
  std::vector<int> fwd_tokens = {3, 1, 4, 1, 5};
  std::vector<int> rev_tokens = {5, 1, 4, 1, 3};
  RuleWeightChart a = score_rules(p, fwd_tokens);
  RuleWeightChart b = score_rules(p, rev_tokens);
  double diff = 0.0;
  for (int r = 0; r < a.layout().rule_count(); ++r)
    diff += std::abs(a.flat()[r] - b.flat()[r]);
  CHECK(diff > 1e-6);

  // Same tokens everywhere: splits still see different span embeddings.
  RuleWeightChart c = score_rules(p, std::vector<int>{2, 2, 2});
  CHECK(std::abs(c.logf(0, 1, 3, Orientation::Straight) -
                 c.logf(0, 2, 3, Orientation::Straight)) > 1e-9);
}

TEST_CASE("plain encoder and tape encoder produce identical numbers") {
  ScorerParams p = small_params(43);
  Rng rng(44);
  const int n = 4, d = 6, h = 5;
  Mat xs(n, d);
  for (double& v : xs.data()) v = rng.uniform(-1.0, 1.0);
  Mat plain = bigru_encode(p.fwd, p.bwd, xs);

  ad::Tape t;
  graph::Binding binding = graph::bind(t, p.tensors());
  graph::GruNodes f = graph::gru_nodes(binding, "scorer.fwd");
  graph::GruNodes b = graph::gru_nodes(binding, "scorer.bwd");
  ad::NodeId xs_node = t.input(xs.data());
  graph::BiStates states = graph::bigru(t, f, b, xs_node, n, d, h);
  REQUIRE(static_cast<int>(states.fwd.size()) == n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < h; ++c) {
      CHECK(t.value(states.fwd[static_cast<std::size_t>(r)])[c] ==
            plain(r, c));
      CHECK(t.value(states.bwd[static_cast<std::size_t>(r)])[c] ==
            plain(r, h + c));
    }
}

TEST_CASE("plain scores and tape scores are identical") {
  ScorerParams p = small_params(45);
  std::vector<int> tokens = {0, 9, 13, 2, 11, 6};
  RuleWeightChart plain = score_rules(p, tokens);

  ad::Tape t;
  const ChartLayout& L = t.layout_cache(6);
  graph::ScorerGraph g = graph::build_scorer(t, p, tokens, L);
  REQUIRE(t.size(g.logf) == L.rule_count());
  for (int r = 0; r < L.rule_count(); ++r)
    CHECK(t.value(g.logf)[r] == plain.flat()[r]);
}

TEST_CASE("tape gradients match finite differences of the plain scores") {
  ScorerParams p = small_params(46);
  std::vector<int> tokens = {7, 3, 12, 5};

  // Loss: sum of tanh of every rule score (bounded, nonlinear).
  ad::Tape t;
  const ChartLayout& L = t.layout_cache(4);
  graph::ScorerGraph g = graph::build_scorer(t, p, tokens, L);
  ad::NodeId loss = t.sum(t.tanh_(g.logf));
  t.backward(loss);

  auto plain_loss = [&](const ScorerParams& q) {
    RuleWeightChart w = score_rules(q, tokens);
    double s = 0.0;
    for (double v : w.flat()) s += std::tanh(v);
    return s;
  };

  for (const char* name :
       {"scorer.embed", "scorer.fwd.wh", "scorer.bwd.wz", "scorer.mlp_lf",
        "scorer.mlp_rb", "scorer.mlp_out", "scorer.mlp_bias"}) {
    ad::NodeId node = g.binding.node(name);
    std::span<const double> analytic = t.grad(node);
    std::vector<double>* data = nullptr;
    for (TensorRef& ref : p.tensors())
      if (ref.name == name) data = ref.data;
    REQUIRE(data != nullptr);
    auto fn = [&](std::span<const double> point) {
      ScorerParams q = p;
      std::vector<double>* qdata = nullptr;
      for (TensorRef& ref : q.tensors())
        if (ref.name == name) qdata = ref.data;
      std::copy(point.begin(), point.end(), qdata->begin());
      return plain_loss(q);
    };
    std::vector<std::size_t> coords;
    for (std::size_t c = 0; c < data->size(); c += 5) coords.push_back(c);
    ad::FiniteDiffReport rep =
        ad::finite_diff_check(fn, *data, analytic, 1e-5, coords);
    CAPTURE(name);
    CHECK(rep.all_finite);
    CHECK(rep.max_rel_error <= 1e-5);
  }
}

TEST_CASE("initialization is seed-deterministic") {
  ScorerParams a = small_params(7);
  ScorerParams b = small_params(7);
  ScorerParams c = small_params(8);
  bool same = true, differ = false;
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    std::vector<TensorRef> ta = a.tensors(), tb = b.tensors(),
                           tc = c.tensors();
    same = same && (*ta[i].data == *tb[i].data);
    differ = differ || (*ta[i].data != *tc[i].data);
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("tensor table: fixed names and documented shapes") {
  ScorerParams p = small_params();
  std::vector<TensorRef> refs = p.tensors();
  const std::vector<std::string> names = {
      "scorer.embed",    "scorer.fwd.wz", "scorer.fwd.wr", "scorer.fwd.wh",
      "scorer.fwd.bz",   "scorer.fwd.br", "scorer.fwd.bh", "scorer.bwd.wz",
      "scorer.bwd.wr",   "scorer.bwd.wh", "scorer.bwd.bz", "scorer.bwd.br",
      "scorer.bwd.bh",   "scorer.mlp_lf", "scorer.mlp_lb", "scorer.mlp_rf",
      "scorer.mlp_rb",   "scorer.mlp_bias", "scorer.mlp_out",
      "scorer.mlp_out_bias"};
  REQUIRE(refs.size() == names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    CHECK(refs[i].name == names[i]);
    CHECK(static_cast<std::size_t>(refs[i].rows) *
              static_cast<std::size_t>(refs[i].cols) ==
          refs[i].data->size());
  }
  CHECK(refs[0].rows == 16);
  CHECK(refs[0].cols == 6);
  CHECK(refs[1].rows == 5);       // gate matrix h x (d + h)
  CHECK(refs[1].cols == 11);
  CHECK(refs[13].rows == 7);      // head block H x h
  CHECK(refs[13].cols == 5);
  CHECK(refs[18].rows == 2);      // output projection 2 x H
  CHECK(refs[18].cols == 7);
}

}  // TEST_SUITE
