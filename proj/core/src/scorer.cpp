#include "sepperm/scorer.hpp"

#include <cmath>
#include <stdexcept>

namespace sepperm {

namespace {

void fill_uniform(std::vector<double>& v, double a, Rng& rng) {
  for (double& x : v) x = rng.uniform(-a, a);
}

void fill_uniform(Mat& m, double a, Rng& rng) { fill_uniform(m.data(), a, rng); }

// y = W x  (row-major W, rows-by-cols), accumulated in ascending column
// order so the tape op and this plain path sum in the same order.
void matvec_into(const Mat& w, std::span<const double> x, double* y) {
  for (int r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    std::span<const double> row = w.row(r);
    for (int c = 0; c < w.cols(); ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

// One gated-recurrence step: h <- h + z (*) (tanh(Wh [x; r(*)h] + bh) - h).
void gru_step(const GruParams& g, std::span<const double> x,
              std::vector<double>& h, std::vector<double>& scratch) {
  const int d = static_cast<int>(x.size());
  const int hs = static_cast<int>(h.size());
  // scratch layout: [xh (d+h) | z (h) | r (h) | hh (h)]
  scratch.assign(static_cast<std::size_t>(d) + 4 * hs, 0.0);
  double* xh = scratch.data();
  double* z = xh + d + hs;
  double* r = z + hs;
  double* hh = r + hs;
  std::copy(x.begin(), x.end(), xh);
  std::copy(h.begin(), h.end(), xh + d);
  matvec_into(g.wz, {xh, static_cast<std::size_t>(d + hs)}, z);
  matvec_into(g.wr, {xh, static_cast<std::size_t>(d + hs)}, r);
  for (int i = 0; i < hs; ++i) {
    z[i] = 1.0 / (1.0 + std::exp(-(z[i] + g.bz[i])));
    r[i] = 1.0 / (1.0 + std::exp(-(r[i] + g.br[i])));
  }
  for (int i = 0; i < hs; ++i) xh[d + i] = r[i] * h[i];
  matvec_into(g.wh, {xh, static_cast<std::size_t>(d + hs)}, hh);
  for (int i = 0; i < hs; ++i) {
    const double cand = std::tanh(hh[i] + g.bh[i]);
    h[i] = h[i] + z[i] * (cand - h[i]);
  }
}

}  // namespace

GruParams GruParams::init(int d, int h, Rng& rng) {
  GruParams g;
  const double a = std::sqrt(6.0 / ((d + h) + h));
  g.wz = Mat(h, d + h);
  g.wr = Mat(h, d + h);
  g.wh = Mat(h, d + h);
  fill_uniform(g.wz, a, rng);
  fill_uniform(g.wr, a, rng);
  fill_uniform(g.wh, a, rng);
  g.bz.assign(h, 0.0);
  g.br.assign(h, 0.0);
  g.bh.assign(h, 0.0);
  return g;
}

ScorerParams ScorerParams::init(int vocab, int d_embed, int h_enc,
                                int mlp_hidden, Rng& rng) {
  ScorerParams p;
  p.vocab = vocab;
  p.d_embed = d_embed;
  p.h_enc = h_enc;
  p.mlp_hidden = mlp_hidden;
  p.embed = Mat(vocab, d_embed);
  fill_uniform(p.embed, std::sqrt(3.0 / d_embed), rng);
  p.fwd = GruParams::init(d_embed, h_enc, rng);
  p.bwd = GruParams::init(d_embed, h_enc, rng);
  // The four blocks are columns of one mlp_hidden-by-(4 h_enc) matrix.
  const double a_in = std::sqrt(6.0 / (4.0 * h_enc + mlp_hidden));
  p.mlp_lf = Mat(mlp_hidden, h_enc);
  p.mlp_lb = Mat(mlp_hidden, h_enc);
  p.mlp_rf = Mat(mlp_hidden, h_enc);
  p.mlp_rb = Mat(mlp_hidden, h_enc);
  fill_uniform(p.mlp_lf, a_in, rng);
  fill_uniform(p.mlp_lb, a_in, rng);
  fill_uniform(p.mlp_rf, a_in, rng);
  fill_uniform(p.mlp_rb, a_in, rng);
  p.mlp_bias.assign(mlp_hidden, 0.0);
  p.mlp_out = Mat(2, mlp_hidden);
  fill_uniform(p.mlp_out, std::sqrt(6.0 / (mlp_hidden + 2)), rng);
  p.mlp_out_bias.assign(2, 0.0);
  return p;
}

std::vector<TensorRef> ScorerParams::tensors() {
  std::vector<TensorRef> out;
  auto mat = [&out](const char* name, Mat& m) {
    out.push_back(TensorRef{name, &m.data(), m.rows(), m.cols()});
  };
  auto vec = [&out](const char* name, std::vector<double>& v) {
    out.push_back(TensorRef{name, &v, static_cast<int>(v.size()), 1});
  };
  mat("scorer.embed", embed);
  mat("scorer.fwd.wz", fwd.wz);
  mat("scorer.fwd.wr", fwd.wr);
  mat("scorer.fwd.wh", fwd.wh);
  vec("scorer.fwd.bz", fwd.bz);
  vec("scorer.fwd.br", fwd.br);
  vec("scorer.fwd.bh", fwd.bh);
  mat("scorer.bwd.wz", bwd.wz);
  mat("scorer.bwd.wr", bwd.wr);
  mat("scorer.bwd.wh", bwd.wh);
  vec("scorer.bwd.bz", bwd.bz);
  vec("scorer.bwd.br", bwd.br);
  vec("scorer.bwd.bh", bwd.bh);
  mat("scorer.mlp_lf", mlp_lf);
  mat("scorer.mlp_lb", mlp_lb);
  mat("scorer.mlp_rf", mlp_rf);
  mat("scorer.mlp_rb", mlp_rb);
  vec("scorer.mlp_bias", mlp_bias);
  mat("scorer.mlp_out", mlp_out);
  vec("scorer.mlp_out_bias", mlp_out_bias);
  return out;
}

Mat bigru_encode(const GruParams& fwd, const GruParams& bwd, const Mat& xs) {
  const int n = xs.rows();
  const int h = fwd.wz.rows();
  Mat out(n, 2 * h);
  std::vector<double> state(h, 0.0), scratch;
  for (int t = 0; t < n; ++t) {
    gru_step(fwd, xs.row(t), state, scratch);
    for (int i = 0; i < h; ++i) out(t, i) = state[i];
  }
  state.assign(h, 0.0);
  for (int t = n - 1; t >= 0; --t) {
    gru_step(bwd, xs.row(t), state, scratch);
    for (int i = 0; i < h; ++i) out(t, h + i) = state[i];
  }
  return out;
}

Mat encode(const ScorerParams& p, std::span<const int> tokens) {
  const int n = static_cast<int>(tokens.size());
  if (n == 0) throw std::invalid_argument("encode: empty input");
  for (int id : tokens)
    if (id < 0 || id >= p.vocab)
      throw std::invalid_argument("encode: token id out of vocabulary");
  Mat xs(n, p.d_embed);
  for (int t = 0; t < n; ++t) {
    std::span<const double> row = p.embed.row(tokens[t]);
    std::copy(row.begin(), row.end(), &xs(t, 0));
  }
  return bigru_encode(p.fwd, p.bwd, xs);
}

std::vector<double> span_embedding(const Mat& enc, int i, int k) {
  const int n = enc.rows();
  const int h = enc.cols() / 2;
  if (i < 0 || i >= k || k > n)
    throw std::invalid_argument("span_embedding: bad span");
  std::vector<double> s(2 * h, 0.0);
  for (int c = 0; c < h; ++c) {
    const double f_hi = enc(k - 1, c);
    const double f_lo = i == 0 ? 0.0 : enc(i - 1, c);
    s[c] = f_hi - f_lo;
    const double b_lo = enc(i, h + c);
    const double b_hi = k == n ? 0.0 : enc(k, h + c);
    s[h + c] = b_lo - b_hi;
  }
  return s;
}

RuleWeightChart score_rules(const ScorerParams& p,
                            std::span<const int> tokens) {
  const int n = static_cast<int>(tokens.size());
  const Mat enc = encode(p, tokens);
  RuleWeightChart chart(n);
  if (n == 1) return chart;
  const int h = p.h_enc;
  const int H = p.mlp_hidden;

  // Per-position projections of the encoder states through the four first-
  // layer blocks; boundary-difference span sums then become differences of
  // these, shared across every split that touches the position.
  Mat plf(n, H), plb(n, H), prf(n, H), prb(n, H);
  std::vector<double> fw(h), bw(h);
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < h; ++c) {
      fw[c] = enc(t, c);
      bw[c] = enc(t, h + c);
    }
    matvec_into(p.mlp_lf, fw, &plf(t, 0));
    matvec_into(p.mlp_lb, bw, &plb(t, 0));
    matvec_into(p.mlp_rf, fw, &prf(t, 0));
    matvec_into(p.mlp_rb, bw, &prb(t, 0));
  }

  const ChartLayout& L = chart.layout();
  std::vector<double> pre(H), hidden(H), out2(2);
  std::vector<double>& logf = chart.flat_mutable();
  for (const auto& s : L.spans()) {
    const int i = s.i, k = s.k;
    int r = s.rule_begin;
    for (int j = i + 1; j < k; ++j) {
      // [s(i,j); s(j,k)] through the factorized first layer, accumulated in
      // the same term order as the tape graph builds it.
      for (int c = 0; c < H; ++c) {
        double a = p.mlp_bias[c] + plf(j - 1, c);
        if (i > 0) a -= plf(i - 1, c);
        a += plb(i, c);
        a -= plb(j, c);
        a += prf(k - 1, c);
        a -= prf(j - 1, c);
        a += prb(j, c);
        if (k < n) a -= prb(k, c);
        pre[c] = a;
      }
      for (int c = 0; c < H; ++c) hidden[c] = std::tanh(pre[c]);
      matvec_into(p.mlp_out, hidden, out2.data());
      logf[r++] = out2[0] + p.mlp_out_bias[0];
      logf[r++] = out2[1] + p.mlp_out_bias[1];
    }
  }
  return chart;
}

namespace graph {

ad::NodeId Binding::node(const std::string& name) const {
  for (std::size_t i = 0; i < refs.size(); ++i)
    if (refs[i].name == name) return nodes[i];
  throw std::logic_error("Binding: no tensor named " + name);
}

void Binding::append(ad::Tape& t, std::vector<TensorRef> more) {
  for (auto& ref : more) {
    nodes.push_back(t.input(*ref.data));
    refs.push_back(std::move(ref));
  }
}

Binding bind(ad::Tape& t, std::vector<TensorRef> refs) {
  Binding b;
  b.append(t, std::move(refs));
  return b;
}

GruNodes gru_nodes(const Binding& b, const std::string& prefix) {
  GruNodes g;
  g.wz = b.node(prefix + ".wz");
  g.wr = b.node(prefix + ".wr");
  g.wh = b.node(prefix + ".wh");
  g.bz = b.node(prefix + ".bz");
  g.br = b.node(prefix + ".br");
  g.bh = b.node(prefix + ".bh");
  return g;
}

namespace {

ad::NodeId gru_step_nodes(ad::Tape& t, const GruNodes& g, ad::NodeId x,
                          ad::NodeId h_prev, int d, int h) {
  const ad::NodeId xh = t.concat(x, h_prev);
  const ad::NodeId z =
      t.sigmoid_(t.add(t.matvec(g.wz, xh, h, d + h), g.bz));
  const ad::NodeId r =
      t.sigmoid_(t.add(t.matvec(g.wr, xh, h, d + h), g.br));
  const ad::NodeId xrh = t.concat(x, t.mul(r, h_prev));
  const ad::NodeId cand =
      t.tanh_(t.add(t.matvec(g.wh, xrh, h, d + h), g.bh));
  return t.add(h_prev, t.mul(z, t.sub(cand, h_prev)));
}

}  // namespace

BiStates bigru(ad::Tape& t, const GruNodes& f, const GruNodes& b,
               ad::NodeId xs, int n, int d, int h) {
  BiStates st;
  st.fwd.resize(n);
  st.bwd.resize(n);
  ad::NodeId state = t.zeros(h);
  for (int i = 0; i < n; ++i) {
    state = gru_step_nodes(t, f, t.slice(xs, i * d, d), state, d, h);
    st.fwd[i] = state;
  }
  state = t.zeros(h);
  for (int i = n - 1; i >= 0; --i) {
    state = gru_step_nodes(t, b, t.slice(xs, i * d, d), state, d, h);
    st.bwd[i] = state;
  }
  return st;
}

ScorerGraph build_scorer(ad::Tape& t, ScorerParams& p,
                         std::span<const int> tokens, const ChartLayout& L) {
  const int n = static_cast<int>(tokens.size());
  if (n != L.n()) throw std::invalid_argument("build_scorer: length mismatch");
  for (int id : tokens)
    if (id < 0 || id >= p.vocab)
      throw std::invalid_argument("build_scorer: token id out of vocabulary");
  ScorerGraph sg;
  sg.binding = bind(t, p.tensors());
  if (n == 1) {
    sg.logf = t.zeros(0);
    return sg;
  }
  const int d = p.d_embed, h = p.h_enc, H = p.mlp_hidden;
  const ad::NodeId xs =
      t.gather_rows(sg.binding.node("scorer.embed"), tokens, d);
  const BiStates st = bigru(t, gru_nodes(sg.binding, "scorer.fwd"),
                            gru_nodes(sg.binding, "scorer.bwd"), xs, n, d, h);

  const ad::NodeId lf = sg.binding.node("scorer.mlp_lf");
  const ad::NodeId lb = sg.binding.node("scorer.mlp_lb");
  const ad::NodeId rf = sg.binding.node("scorer.mlp_rf");
  const ad::NodeId rb = sg.binding.node("scorer.mlp_rb");
  std::vector<ad::NodeId> plf(n), plb(n), prf(n), prb(n);
  for (int pos = 0; pos < n; ++pos) {
    plf[pos] = t.matvec(lf, st.fwd[pos], H, h);
    plb[pos] = t.matvec(lb, st.bwd[pos], H, h);
    prf[pos] = t.matvec(rf, st.fwd[pos], H, h);
    prb[pos] = t.matvec(rb, st.bwd[pos], H, h);
  }

  const ad::NodeId bias = sg.binding.node("scorer.mlp_bias");
  const ad::NodeId w_out = sg.binding.node("scorer.mlp_out");
  const ad::NodeId b_out = sg.binding.node("scorer.mlp_out_bias");
  std::vector<ad::NodeId> split_outs;
  split_outs.reserve(L.rule_count() / 2);
  for (const auto& s : L.spans()) {
    const int i = s.i, k = s.k;
    for (int j = i + 1; j < k; ++j) {
      ad::NodeId pre = t.add(bias, plf[j - 1]);
      if (i > 0) pre = t.sub(pre, plf[i - 1]);
      pre = t.add(pre, plb[i]);
      pre = t.sub(pre, plb[j]);
      pre = t.add(pre, prf[k - 1]);
      pre = t.sub(pre, prf[j - 1]);
      pre = t.add(pre, prb[j]);
      if (k < n) pre = t.sub(pre, prb[k]);
      const ad::NodeId hidden = t.tanh_(pre);
      split_outs.push_back(t.add(t.matvec(w_out, hidden, 2, H), b_out));
    }
  }
  // Each split's output pair is (Straight, Inverted) and the splits arrive in
  // layout order, so the concatenation is exactly the flat rule vector.
  sg.logf = t.concat_many(split_outs);
  return sg;
}

}  // namespace graph
}  // namespace sepperm
