#include "sepperm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace sepperm {

namespace {

void check_pair(int vocab, std::span<const int> tokens,
                std::span<const int> gold) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty input");
  if (tokens.size() != gold.size())
    throw std::invalid_argument("forward: tokens/gold length mismatch");
  for (int id : tokens)
    if (id < 0 || id >= vocab)
      throw std::invalid_argument("forward: token id out of vocabulary");
  for (int id : gold)
    if (id < 0 || id >= vocab)
      throw std::invalid_argument("forward: gold id out of vocabulary");
}

struct TaggerTail {
  ad::NodeId loss = -1;
  std::vector<ad::NodeId> logp;  // one log-distribution node per position
};

// Reordered embeddings -> bidirectional sweep -> per-position output
// distribution -> mean negative log-likelihood of gold.
TaggerTail tagger_tail(ad::Tape& t, graph::Binding& binding, TaggerParams& tg,
                       ad::NodeId reorder, std::span<const int> tokens,
                       std::span<const int> gold) {
  const int n = static_cast<int>(tokens.size());
  const int d = tg.d_embed, h = tg.h_enc, v = tg.vocab;
  binding.append(t, tg.tensors());
  const ad::NodeId sem =
      t.gather_rows(binding.node("tagger.embed"), tokens, d);
  const ad::NodeId mixed = t.matmul(reorder, sem, n, n, d);
  const graph::BiStates st =
      graph::bigru(t, graph::gru_nodes(binding, "tagger.fwd"),
                   graph::gru_nodes(binding, "tagger.bwd"), mixed, n, d, h);
  const ad::NodeId out_w = binding.node("tagger.out_w");
  const ad::NodeId out_b = binding.node("tagger.out_b");
  TaggerTail tail;
  tail.logp.resize(n);
  std::vector<ad::NodeId> picks(n);
  for (int pos = 0; pos < n; ++pos) {
    const ad::NodeId state = t.concat(st.fwd[pos], st.bwd[pos]);
    const ad::NodeId logits =
        t.add(t.matvec(out_w, state, v, 2 * h), out_b);
    tail.logp[pos] = t.log_softmax(logits);
    picks[pos] = t.pick(tail.logp[pos], gold[pos]);
  }
  tail.loss = t.scale(t.sum(t.concat_many(picks)), -1.0 / n);
  return tail;
}

Mat probs_from(const ad::Tape& t, const std::vector<ad::NodeId>& logp,
               int vocab) {
  Mat probs(static_cast<int>(logp.size()), vocab);
  for (std::size_t pos = 0; pos < logp.size(); ++pos) {
    std::span<const double> row = t.value(logp[pos]);
    for (int v = 0; v < vocab; ++v)
      probs(static_cast<int>(pos), v) = std::exp(row[v]);
  }
  return probs;
}

struct BuiltForward {
  graph::Binding binding;
  ad::NodeId loss = -1;
  std::vector<ad::NodeId> logp;
};

// One full differentiable forward. For Hard, noise_rng supplies the per-rule
// Gumbel draws (required); pure_relaxed keeps the relaxed matrix on the
// forward path instead of substituting the hard sample.
BuiltForward build_variant_forward(ad::Tape& t, Model& m, Variant variant,
                                   std::span<const int> tokens,
                                   std::span<const int> gold,
                                   double temperature, Rng* noise_rng,
                                   bool pure_relaxed = false) {
  check_pair(m.tagger.vocab, tokens, gold);
  const int n = static_cast<int>(tokens.size());
  BuiltForward out;
  if (variant == Variant::IdentityBaseline) {
    const Mat eye = Mat::identity(n);
    const ad::NodeId reorder = t.input(eye.data());
    TaggerTail tail = tagger_tail(t, out.binding, m.tagger, reorder, tokens, gold);
    out.loss = tail.loss;
    out.logp = std::move(tail.logp);
    return out;
  }

  const ChartLayout& L = t.layout_cache(n);
  graph::ScorerGraph sg = graph::build_scorer(t, m.scorer, tokens, L);
  out.binding = std::move(sg.binding);
  const ad::NodeId logbeta = t.inside_chart(sg.logf, L);
  const ad::NodeId g = t.pcfg_chart(sg.logf, logbeta, L);

  ad::NodeId reorder = -1;
  if (variant == Variant::Soft) {
    reorder = t.expected_perm(g, L);
  } else {
    if (noise_rng == nullptr)
      throw std::logic_error("hard forward needs a noise source");
    std::vector<double> noise(L.rule_count());
    for (double& x : noise) x = noise_rng->gumbel();
    // Relaxed path on the tape: per-span softmax of (log G + noise) at the
    // same temperature, composed by the same block accumulation.
    const ad::NodeId noisy = t.add(t.log_(g), t.input(noise));
    std::vector<ad::NodeId> span_w;
    span_w.reserve(L.span_count());
    for (const auto& s : L.spans())
      span_w.push_back(t.softmax(
          t.slice(noisy, s.rule_begin, 2 * (s.k - s.i - 1)), temperature));
    const ad::NodeId relaxed = t.expected_perm(t.concat_many(span_w), L);
    if (pure_relaxed) {
      reorder = relaxed;
    } else {
      std::span<const double> gv = t.value(g);
      const PcfgChart chart(L, std::vector<double>(gv.begin(), gv.end()));
      const SampledPerm sp =
          gumbel_sample_with_noise(chart, noise, temperature);
      reorder = t.straight_through(sp.hard.dense().data(), relaxed);
    }
  }
  TaggerTail tail = tagger_tail(t, out.binding, m.tagger, reorder, tokens, gold);
  out.loss = tail.loss;
  out.logp = std::move(tail.logp);
  return out;
}

// Deterministic reordering used at prediction time: the MAP derivation's
// matrix, identity for the baseline variant and for inputs longer than the
// chart can hold (the tagger itself has no length limit).
Mat predict_reorder(const Model& m, std::span<const int> tokens) {
  const int n = static_cast<int>(tokens.size());
  if (m.variant == Variant::IdentityBaseline || n > ChartLayout::kMaxN)
    return Mat::identity(n);
  const RuleWeightChart scored = score_rules(m.scorer, tokens);
  const auto [tree, logw] = map_derivation(scored);
  return tree_to_matrix(*tree).dense();
}

std::vector<int> tag_argmax(const TaggerParams& tg, const Mat& reorder,
                            std::span<const int> tokens) {
  const int n = static_cast<int>(tokens.size());
  Mat sem(n, tg.d_embed);
  for (int t = 0; t < n; ++t) {
    std::span<const double> row = tg.embed.row(tokens[t]);
    std::copy(row.begin(), row.end(), &sem(t, 0));
  }
  Mat mixed(n, tg.d_embed);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double w = reorder(a, b);
      if (w == 0.0) continue;
      for (int c = 0; c < tg.d_embed; ++c) mixed(a, c) += w * sem(b, c);
    }
  const Mat enc = bigru_encode(tg.fwd, tg.bwd, mixed);
  std::vector<int> out(n);
  for (int pos = 0; pos < n; ++pos) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < tg.vocab; ++v) {
      double s = tg.out_b[v];
      std::span<const double> wrow = tg.out_w.row(v);
      std::span<const double> erow = enc.row(pos);
      for (int c = 0; c < 2 * tg.h_enc; ++c) s += wrow[c] * erow[c];
      if (s > best_score) {  // ties keep the smallest id
        best_score = s;
        best = v;
      }
    }
    out[pos] = best;
  }
  return out;
}

}  // namespace

TaggerParams TaggerParams::init(int vocab, int d_embed, int h_enc, Rng& rng) {
  TaggerParams p;
  p.vocab = vocab;
  p.d_embed = d_embed;
  p.h_enc = h_enc;
  p.embed = Mat(vocab, d_embed);
  for (double& x : p.embed.data()) x = rng.uniform(-1.0, 1.0) * std::sqrt(3.0 / d_embed);
  p.fwd = GruParams::init(d_embed, h_enc, rng);
  p.bwd = GruParams::init(d_embed, h_enc, rng);
  p.out_w = Mat(vocab, 2 * h_enc);
  const double a = std::sqrt(6.0 / (2.0 * h_enc + vocab));
  for (double& x : p.out_w.data()) x = rng.uniform(-a, a);
  p.out_b.assign(vocab, 0.0);
  return p;
}

std::vector<TensorRef> TaggerParams::tensors() {
  std::vector<TensorRef> out;
  auto mat = [&out](const char* name, Mat& m) {
    out.push_back(TensorRef{name, &m.data(), m.rows(), m.cols()});
  };
  auto vec = [&out](const char* name, std::vector<double>& v) {
    out.push_back(TensorRef{name, &v, static_cast<int>(v.size()), 1});
  };
  mat("tagger.embed", embed);
  mat("tagger.fwd.wz", fwd.wz);
  mat("tagger.fwd.wr", fwd.wr);
  mat("tagger.fwd.wh", fwd.wh);
  vec("tagger.fwd.bz", fwd.bz);
  vec("tagger.fwd.br", fwd.br);
  vec("tagger.fwd.bh", fwd.bh);
  mat("tagger.bwd.wz", bwd.wz);
  mat("tagger.bwd.wr", bwd.wr);
  mat("tagger.bwd.wh", bwd.wh);
  vec("tagger.bwd.bz", bwd.bz);
  vec("tagger.bwd.br", bwd.br);
  vec("tagger.bwd.bh", bwd.bh);
  mat("tagger.out_w", out_w);
  vec("tagger.out_b", out_b);
  return out;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Soft: return "soft";
    case Variant::Hard: return "hard";
    case Variant::IdentityBaseline: return "identity";
  }
  throw std::logic_error("variant_name: bad variant");
}

Variant variant_from_name(const std::string& s) {
  if (s == "soft") return Variant::Soft;
  if (s == "hard") return Variant::Hard;
  if (s == "identity") return Variant::IdentityBaseline;
  throw std::invalid_argument("unknown variant: " + s);
}

ForwardResult forward_soft(Model& m, std::span<const int> tokens,
                           std::span<const int> gold) {
  ad::Tape t;
  BuiltForward bf =
      build_variant_forward(t, m, Variant::Soft, tokens, gold, 1.0, nullptr);
  return ForwardResult{t.scalar(bf.loss), probs_from(t, bf.logp, m.tagger.vocab)};
}

ForwardResult forward_hard(Model& m, std::span<const int> tokens,
                           std::span<const int> gold, Rng& rng,
                           double temperature) {
  ad::Tape t;
  BuiltForward bf = build_variant_forward(t, m, Variant::Hard, tokens, gold,
                                          temperature, &rng);
  return ForwardResult{t.scalar(bf.loss), probs_from(t, bf.logp, m.tagger.vocab)};
}

LossWithGrads loss_gradients(Model& m, Variant variant,
                             std::span<const int> tokens,
                             std::span<const int> gold, double temperature,
                             Rng* rng) {
  ad::Tape t;
  BuiltForward bf =
      build_variant_forward(t, m, variant, tokens, gold, temperature, rng);
  t.backward(bf.loss);
  LossWithGrads out;
  out.loss = t.scalar(bf.loss);
  out.names.reserve(bf.binding.refs.size());
  out.grads.reserve(bf.binding.refs.size());
  for (std::size_t r = 0; r < bf.binding.refs.size(); ++r) {
    out.names.push_back(bf.binding.refs[r].name);
    std::span<const double> g = t.grad(bf.binding.nodes[r]);
    out.grads.emplace_back(g.begin(), g.end());
  }
  return out;
}

LossWithGrads loss_gradients_relaxed(Model& m, std::span<const int> tokens,
                                     std::span<const int> gold,
                                     double temperature, Rng& rng) {
  ad::Tape t;
  BuiltForward bf = build_variant_forward(t, m, Variant::Hard, tokens, gold,
                                          temperature, &rng,
                                          /*pure_relaxed=*/true);
  t.backward(bf.loss);
  LossWithGrads out;
  out.loss = t.scalar(bf.loss);
  for (std::size_t r = 0; r < bf.binding.refs.size(); ++r) {
    out.names.push_back(bf.binding.refs[r].name);
    std::span<const double> g = t.grad(bf.binding.nodes[r]);
    out.grads.emplace_back(g.begin(), g.end());
  }
  return out;
}

ForwardResult tagger_forward(TaggerParams& tagger, const Mat& reorder,
                             std::span<const int> tokens,
                             std::span<const int> gold) {
  check_pair(tagger.vocab, tokens, gold);
  const int n = static_cast<int>(tokens.size());
  if (reorder.rows() != n || reorder.cols() != n)
    throw std::invalid_argument("tagger_forward: reorder must be n-by-n");
  ad::Tape t;
  graph::Binding binding;
  const ad::NodeId r = t.input(reorder.data());
  TaggerTail tail = tagger_tail(t, binding, tagger, r, tokens, gold);
  return ForwardResult{t.scalar(tail.loss), probs_from(t, tail.logp, tagger.vocab)};
}

std::vector<int> predict(Model& m, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("predict: empty input");
  for (int id : tokens)
    if (id < 0 || id >= m.tagger.vocab)
      throw std::invalid_argument("predict: token id out of vocabulary");
  return tag_argmax(m.tagger, predict_reorder(m, tokens), tokens);
}

double evaluate(Model& m, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const Example& ex : data)
    if (predict(m, ex.tokens) == ex.gold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(const TrainConfig& config,
                  std::span<const Example> train_set,
                  std::span<const Example> dev_set, bool progress) {
  if (train_set.empty()) throw std::invalid_argument("train: empty train set");
  if (config.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.epochs < 0) throw std::invalid_argument("train: epochs < 0");
  if (config.temperature <= 0.0)
    throw std::invalid_argument("train: temperature must be > 0");
  int vocab = 0;
  for (std::span<const Example> split : {train_set, dev_set})
    for (const Example& ex : split) {
      for (int id : ex.tokens) vocab = std::max(vocab, id + 1);
      for (int id : ex.gold) vocab = std::max(vocab, id + 1);
    }

  Rng root(config.seed);
  Rng init_rng = root.split(1);
  Rng shuffle_rng = root.split(2);
  Rng lag_rng = root.split(3);
  Rng gumbel_rng = root.split(4);

  TrainResult result;
  Model& m = result.model;
  m.variant = config.variant;
  m.scorer = ScorerParams::init(vocab, config.d_syn, config.h_syn,
                                config.mlp_hidden, init_rng);
  m.tagger = TaggerParams::init(vocab, config.d_sem, config.h_sem, init_rng);

  // Canonical tensor order: scorer then tagger. Optimizer state, gradient
  // accumulators and the lag mask all follow this order.
  std::vector<TensorRef> refs = m.scorer.tensors();
  for (TensorRef& r : m.tagger.tensors()) refs.push_back(std::move(r));
  const int nt = static_cast<int>(refs.size());
  std::unordered_map<std::string, int> index_of;
  std::vector<std::vector<double>> accum(nt), m1(nt), m2(nt);
  std::vector<long> steps(nt, 0);
  std::vector<bool> is_scorer(nt);
  for (int i = 0; i < nt; ++i) {
    index_of.emplace(refs[i].name, i);
    accum[i].assign(refs[i].data->size(), 0.0);
    m1[i].assign(refs[i].data->size(), 0.0);
    m2[i].assign(refs[i].data->size(), 0.0);
    is_scorer[i] = refs[i].name.rfind("scorer.", 0) == 0;
  }

  // Usable examples: the chart pass is refused beyond the length cap.
  std::vector<int> usable;
  usable.reserve(train_set.size());
  const int cap = std::min(config.marginal_max_len, ChartLayout::kMaxN);
  for (std::size_t i = 0; i < train_set.size(); ++i)
    if (static_cast<int>(train_set[i].tokens.size()) <= cap)
      usable.push_back(static_cast<int>(i));
  if (usable.size() < train_set.size())
    std::fprintf(stderr, "train: skipping %zu of %zu examples longer than %d\n",
                 train_set.size() - usable.size(), train_set.size(), cap);
  if (usable.empty())
    throw std::invalid_argument("train: every example exceeds the length cap");

  const int em_count = std::min<int>(config.train_em_subsample,
                                     static_cast<int>(train_set.size()));

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ad::Tape tape;
  long global_step = 0;
  int good_streak = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order = usable;
    shuffle(std::span<int>(order), shuffle_rng);
    double loss_sum = 0.0;
    long loss_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      for (auto& g : accum) std::fill(g.begin(), g.end(), 0.0);
      int batch_n = 0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const Example& ex = train_set[order[bi]];
        tape.reset();
        BuiltForward bf =
            build_variant_forward(tape, m, m.variant, ex.tokens, ex.gold,
                                  config.temperature, &gumbel_rng);
        tape.backward(bf.loss);
        for (std::size_t r = 0; r < bf.binding.refs.size(); ++r) {
          std::vector<double>& g = accum[index_of.at(bf.binding.refs[r].name)];
          std::span<const double> node_g = tape.grad(bf.binding.nodes[r]);
          for (std::size_t c = 0; c < g.size(); ++c) g[c] += node_g[c];
        }
        loss_sum += tape.scalar(bf.loss);
        ++loss_count;
        ++batch_n;
      }
      if (batch_n == 0) continue;
      const double inv = 1.0 / batch_n;
      for (auto& g : accum)
        for (double& x : g) x *= inv;

      bool scorer_only = false;
      if (m.variant != Variant::IdentityBaseline &&
          global_step < config.lag_steps)
        scorer_only = lag_rng.uniform() < config.lag_prob;

      double sq = 0.0;
      for (int i = 0; i < nt; ++i) {
        if (scorer_only && !is_scorer[i]) continue;
        for (double x : accum[i]) sq += x * x;
      }
      const double norm = std::sqrt(sq);
      const double scale = (config.grad_clip > 0.0 && norm > config.grad_clip)
                               ? config.grad_clip / norm
                               : 1.0;
      for (int i = 0; i < nt; ++i) {
        if (scorer_only && !is_scorer[i]) continue;
        ++steps[i];
        const double bc1 = 1.0 - std::pow(kBeta1, steps[i]);
        const double bc2 = 1.0 - std::pow(kBeta2, steps[i]);
        std::vector<double>& p = *refs[i].data;
        for (std::size_t c = 0; c < p.size(); ++c) {
          const double g = accum[i][c] * scale;
          m1[i][c] = kBeta1 * m1[i][c] + (1.0 - kBeta1) * g;
          m2[i][c] = kBeta2 * m2[i][c] + (1.0 - kBeta2) * g * g;
          p[c] -= config.lr * (m1[i][c] / bc1) /
                  (std::sqrt(m2[i][c] / bc2) + kEps);
        }
      }
      ++global_step;
    }

    int train_hits = 0;
    for (int i = 0; i < em_count; ++i)
      if (predict(m, train_set[i].tokens) == train_set[i].gold) ++train_hits;
    const double train_em =
        em_count == 0 ? 0.0 : static_cast<double>(train_hits) / em_count;
    const double train_loss = loss_count == 0 ? 0.0 : loss_sum / loss_count;

    double dev_loss = 0.0;
    const double dev_em = evaluate(m, dev_set);
    for (const Example& ex : dev_set)
      dev_loss += tagger_forward(m.tagger, predict_reorder(m, ex.tokens),
                                 ex.tokens, ex.gold)
                      .loss;
    if (!dev_set.empty()) dev_loss /= static_cast<double>(dev_set.size());

    result.history.push_back(MetricsRow{epoch, "train", train_loss, train_em});
    result.history.push_back(MetricsRow{epoch, "dev", dev_loss, dev_em});
    if (progress)
      std::fprintf(stderr,
                   "epoch %3d  train loss %.4f em %.4f | dev loss %.4f em %.4f\n",
                   epoch, train_loss, train_em, dev_loss, dev_em);

    if (config.early_stop_patience > 0) {
      good_streak = dev_em >= config.early_stop_dev_em ? good_streak + 1 : 0;
      if (epoch >= config.min_epochs && good_streak >= config.early_stop_patience)
        break;
    }
  }
  return result;
}

}  // namespace sepperm
