// Microbenchmarks for the chart kernels and the end-to-end differentiable
// pipeline, across sentence lengths. All inputs are seeded, so numbers are
// comparable between runs and machines.

#include <benchmark/benchmark.h>

#include <vector>

#include "sepperm/autodiff.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/inference.hpp"
#include "sepperm/model.hpp"
#include "sepperm/rng.hpp"
#include "sepperm/scorer.hpp"

using namespace sepperm;
namespace ad = sepperm::ad;

namespace {

RuleWeightChart seeded_chart(int n) {
  Rng rng(90000 + static_cast<std::uint64_t>(n));
  RuleWeightChart w(n);
  for (double& v : w.flat_mutable()) v = rng.uniform(-2.0, 2.0);
  return w;
}

void BM_inside(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  RuleWeightChart w = seeded_chart(n);
  for (auto _ : state) {
    InsideChart b = inside(w);
    benchmark::DoNotOptimize(b.log_partition());
  }
}
BENCHMARK(BM_inside)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_marginal(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PcfgChart g = wcfg_to_pcfg(seeded_chart(n));
  for (auto _ : state) {
    Mat m = marginal(g);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_marginal)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_map(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PcfgChart g = wcfg_to_pcfg(seeded_chart(n));
  for (auto _ : state) {
    auto [tree, prob] = map_derivation(g);
    benchmark::DoNotOptimize(prob);
  }
}
BENCHMARK(BM_map)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_gumbel_sample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PcfgChart g = wcfg_to_pcfg(seeded_chart(n));
  Rng rng(1234);
  for (auto _ : state) {
    SampledPerm s = gumbel_sample(g, rng);
    benchmark::DoNotOptimize(s.relaxed.data().data());
  }
}
BENCHMARK(BM_gumbel_sample)->Arg(8)->Arg(16)->Arg(32);

void BM_ancestral_sample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PcfgChart g = wcfg_to_pcfg(seeded_chart(n));
  Rng rng(1234);
  for (auto _ : state) {
    PermTreePtr t = ancestral_sample(g, rng);
    benchmark::DoNotOptimize(t.get());
  }
}
BENCHMARK(BM_ancestral_sample)->Arg(8)->Arg(16)->Arg(32);

void BM_chart_backward(benchmark::State& state) {
  // Inside + normalization + expected permutation, forward and backward.
  const int n = static_cast<int>(state.range(0));
  RuleWeightChart w = seeded_chart(n);
  ad::Tape t;
  for (auto _ : state) {
    t.reset();
    ad::NodeId logf = t.input(w.flat());
    const ChartLayout& L = t.layout_cache(n);
    ad::NodeId e =
        t.expected_perm(t.pcfg_chart(logf, t.inside_chart(logf, L), L), L);
    ad::NodeId loss = t.sum(e);
    t.backward(loss);
    benchmark::DoNotOptimize(t.grad(logf).data());
  }
}
BENCHMARK(BM_chart_backward)->Arg(8)->Arg(16)->Arg(32);

void BM_training_step(benchmark::State& state) {
  // One full gradient computation (scores -> reorder -> tagging loss) at
  // the experiment's model sizes, on a fixed input of the given length.
  const int n = static_cast<int>(state.range(0));
  Rng rng(777);
  Model m;
  m.variant = Variant::Soft;
  m.scorer = ScorerParams::init(16, 32, 64, 64, rng);
  m.tagger = TaggerParams::init(16, 32, 32, rng);
  std::vector<int> tokens(static_cast<std::size_t>(n));
  std::vector<int> gold(static_cast<std::size_t>(n));
  for (int& v : tokens) v = rng.below(16);
  for (int& v : gold) v = rng.below(16);
  for (auto _ : state) {
    LossWithGrads lg =
        loss_gradients(m, Variant::Soft, tokens, gold, 1.0, nullptr);
    benchmark::DoNotOptimize(lg.loss);
  }
}
BENCHMARK(BM_training_step)->Arg(8)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
