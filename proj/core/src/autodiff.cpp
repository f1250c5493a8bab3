#include "sepperm/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sepperm::ad {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

Tape::Tape() {
  nodes_.reserve(1 << 12);
  ops_.reserve(1 << 12);
  vals_.reserve(1 << 16);
}

void Tape::reset() {
  nodes_.clear();
  ops_.clear();
  vals_.clear();
  adjs_.clear();
  aux_ints_.clear();
  aux_doubles_.clear();
  aux_layouts_.clear();
}

NodeId Tape::alloc(int len) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{static_cast<int>(vals_.size()), len});
  vals_.resize(vals_.size() + len, 0.0);
  return id;
}

int Tape::size(NodeId id) const { return nodes_[id].len; }

std::span<const double> Tape::value(NodeId id) const {
  return {vals_.data() + nodes_[id].off, static_cast<std::size_t>(nodes_[id].len)};
}

double Tape::scalar(NodeId id) const {
  if (nodes_[id].len != 1) throw std::logic_error("scalar: node is not size 1");
  return vals_[nodes_[id].off];
}

std::span<const double> Tape::grad(NodeId id) const {
  if (adjs_.size() != vals_.size())
    throw std::logic_error("grad: backward() has not run");
  return {adjs_.data() + nodes_[id].off, static_cast<std::size_t>(nodes_[id].len)};
}

NodeId Tape::input(std::span<const double> v) {
  const NodeId id = alloc(static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), out_ptr(id));
  push(Op{OpKind::Input, id, -1, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::input_scalar(double v) { return input({&v, 1}); }

NodeId Tape::zeros(int len) {
  const NodeId id = alloc(len);
  push(Op{OpKind::Input, id, -1, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const int n = size(a);
  if (n != size(b)) throw std::logic_error("add: size mismatch");
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  const double* pb = val_ptr(b);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  push(Op{OpKind::Add, id, a, b, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const int n = size(a);
  if (n != size(b)) throw std::logic_error("sub: size mismatch");
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  const double* pb = val_ptr(b);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  push(Op{OpKind::Sub, id, a, b, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const int n = size(a);
  if (n != size(b)) throw std::logic_error("mul: size mismatch");
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  const double* pb = val_ptr(b);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  push(Op{OpKind::Mul, id, a, b, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::scale(NodeId a, double s) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = pa[i] * s;
  push(Op{OpKind::Scale, id, a, -1, 0, 0, 0, s, -1});
  return id;
}

NodeId Tape::tanh_(NodeId a) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = std::tanh(pa[i]);
  push(Op{OpKind::Tanh, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::sigmoid_(NodeId a) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = 1.0 / (1.0 + std::exp(-pa[i]));
  push(Op{OpKind::Sigmoid, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::exp_(NodeId a) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = std::exp(pa[i]);
  push(Op{OpKind::Exp, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::log_(NodeId a) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  for (int i = 0; i < n; ++i) po[i] = std::log(pa[i]);
  push(Op{OpKind::Log, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::matvec(NodeId w, NodeId x, int rows, int cols) {
  if (size(w) != rows * cols || size(x) != cols)
    throw std::logic_error("matvec: shape mismatch");
  const NodeId id = alloc(rows);
  const double* pw = val_ptr(w);
  const double* px = val_ptr(x);
  double* po = out_ptr(id);
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    const double* row = pw + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) s += row[c] * px[c];
    po[r] = s;
  }
  push(Op{OpKind::MatVec, id, w, x, rows, cols, 0, 0.0, -1});
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b, int n, int m, int p) {
  if (size(a) != n * m || size(b) != m * p)
    throw std::logic_error("matmul: shape mismatch");
  const NodeId id = alloc(n * p);
  const double* pa = val_ptr(a);
  const double* pb = val_ptr(b);
  double* po = out_ptr(id);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < m; ++k) {
      const double arx = pa[static_cast<std::size_t>(r) * m + k];
      if (arx == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(k) * p;
      double* orow = po + static_cast<std::size_t>(r) * p;
      for (int c = 0; c < p; ++c) orow[c] += arx * brow[c];
    }
  push(Op{OpKind::MatMul, id, a, b, n, m, p, 0.0, -1});
  return id;
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const int na = size(a), nb = size(b);
  const NodeId id = alloc(na + nb);
  const double* pa = val_ptr(a);
  const double* pb = val_ptr(b);
  double* po = out_ptr(id);
  std::copy(pa, pa + na, po);
  std::copy(pb, pb + nb, po + na);
  push(Op{OpKind::Concat, id, a, b, na, nb, 0, 0.0, -1});
  return id;
}

NodeId Tape::concat_many(std::span<const NodeId> parts) {
  int total = 0;
  for (NodeId p : parts) total += size(p);
  const NodeId id = alloc(total);
  double* po = out_ptr(id);
  for (NodeId p : parts) {
    const double* pp = val_ptr(p);
    po = std::copy(pp, pp + size(p), po);
  }
  const int aux = static_cast<int>(aux_ints_.size());
  aux_ints_.emplace_back(parts.begin(), parts.end());
  push(Op{OpKind::ConcatMany, id, -1, -1, 0, 0, 0, 0.0, aux});
  return id;
}

NodeId Tape::slice(NodeId a, int offset, int len) {
  if (offset < 0 || offset + len > size(a))
    throw std::logic_error("slice: out of range");
  const NodeId id = alloc(len);
  const double* pa = val_ptr(a) + offset;
  std::copy(pa, pa + len, out_ptr(id));
  push(Op{OpKind::Slice, id, a, -1, offset, len, 0, 0.0, -1});
  return id;
}

NodeId Tape::gather_rows(NodeId table, std::span<const int> ids, int row_len) {
  const int rows = static_cast<int>(ids.size());
  const int table_rows = size(table) / row_len;
  for (int r : ids)
    if (r < 0 || r >= table_rows) throw std::logic_error("gather_rows: bad id");
  const NodeId id = alloc(rows * row_len);
  const double* pt = val_ptr(table);
  double* po = out_ptr(id);
  for (int r = 0; r < rows; ++r)
    std::copy(pt + static_cast<std::size_t>(ids[r]) * row_len,
              pt + static_cast<std::size_t>(ids[r] + 1) * row_len,
              po + static_cast<std::size_t>(r) * row_len);
  const int aux = static_cast<int>(aux_ints_.size());
  aux_ints_.emplace_back(ids.begin(), ids.end());
  push(Op{OpKind::GatherRows, id, table, -1, row_len, 0, 0, 0.0, aux});
  return id;
}

NodeId Tape::sum(NodeId a) {
  const NodeId id = alloc(1);
  const double* pa = val_ptr(a);
  double s = 0.0;
  for (int i = 0; i < size(a); ++i) s += pa[i];
  *out_ptr(id) = s;
  push(Op{OpKind::Sum, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::pick(NodeId a, int idx) {
  if (idx < 0 || idx >= size(a)) throw std::logic_error("pick: out of range");
  const NodeId id = alloc(1);
  *out_ptr(id) = val_ptr(a)[idx];
  push(Op{OpKind::Pick, id, a, -1, idx, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::logsumexp(NodeId a) {
  const NodeId id = alloc(1);
  const double* pa = val_ptr(a);
  double m = kNegInf;
  for (int i = 0; i < size(a); ++i) m = std::max(m, pa[i]);
  double s = 0.0;
  if (m != kNegInf)
    for (int i = 0; i < size(a); ++i) s += std::exp(pa[i] - m);
  *out_ptr(id) = m == kNegInf ? kNegInf : m + std::log(s);
  push(Op{OpKind::LogSumExp, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::softmax(NodeId a, double temperature) {
  if (temperature <= 0.0) throw std::logic_error("softmax: temperature <= 0");
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  double m = kNegInf;
  for (int i = 0; i < n; ++i) m = std::max(m, pa[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    po[i] = std::exp((pa[i] - m) / temperature);
    z += po[i];
  }
  for (int i = 0; i < n; ++i) po[i] /= z;
  push(Op{OpKind::Softmax, id, a, -1, 0, 0, 0, temperature, -1});
  return id;
}

NodeId Tape::log_softmax(NodeId a) {
  const int n = size(a);
  const NodeId id = alloc(n);
  const double* pa = val_ptr(a);
  double* po = out_ptr(id);
  double m = kNegInf;
  for (int i = 0; i < n; ++i) m = std::max(m, pa[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(pa[i] - m);
  const double lz = m + std::log(z);
  for (int i = 0; i < n; ++i) po[i] = pa[i] - lz;
  push(Op{OpKind::LogSoftmax, id, a, -1, 0, 0, 0, 0.0, -1});
  return id;
}

NodeId Tape::straight_through(std::span<const double> hard, NodeId relaxed) {
  if (static_cast<int>(hard.size()) != size(relaxed))
    throw std::logic_error("straight_through: size mismatch");
  const NodeId id = alloc(static_cast<int>(hard.size()));
  std::copy(hard.begin(), hard.end(), out_ptr(id));
  push(Op{OpKind::StraightThrough, id, relaxed, -1, 0, 0, 0, 0.0, -1});
  return id;
}

const ChartLayout& Tape::layout_cache(int n) {
  for (const auto& l : layout_pool_)
    if (l->n() == n) return *l;
  layout_pool_.push_back(std::make_unique<ChartLayout>(n));
  return *layout_pool_.back();
}

NodeId Tape::inside_chart(NodeId logf, const ChartLayout& layout) {
  if (size(logf) != layout.rule_count())
    throw std::logic_error("inside_chart: logf size mismatch");
  std::vector<double> lb = kernel::inside_logbeta(layout, value(logf));
  const NodeId id = alloc(static_cast<int>(lb.size()));
  std::copy(lb.begin(), lb.end(), out_ptr(id));
  const int aux = static_cast<int>(aux_layouts_.size());
  aux_layouts_.push_back(&layout);
  push(Op{OpKind::InsideChart, id, logf, -1, 0, 0, 0, 0.0, aux});
  return id;
}

NodeId Tape::pcfg_chart(NodeId logf, NodeId logbeta, const ChartLayout& layout) {
  if (size(logf) != layout.rule_count() || size(logbeta) != layout.beta_count())
    throw std::logic_error("pcfg_chart: size mismatch");
  const NodeId id = alloc(layout.rule_count());
  {
    const double* pf = val_ptr(logf);
    const double* pb = val_ptr(logbeta);
    double* po = out_ptr(id);
    for (const auto& s : layout.spans()) {
      const double parent = pb[layout.beta_index(s.i, s.k)];
      int r = s.rule_begin;
      for (int j = s.i + 1; j < s.k; ++j) {
        const double child =
            pb[layout.beta_index(s.i, j)] + pb[layout.beta_index(j, s.k)];
        po[r] = std::exp(pf[r] + child - parent);
        ++r;
        po[r] = std::exp(pf[r] + child - parent);
        ++r;
      }
    }
  }
  const int aux = static_cast<int>(aux_layouts_.size());
  aux_layouts_.push_back(&layout);
  push(Op{OpKind::PcfgChart, id, logf, logbeta, 0, 0, 0, 0.0, aux});
  return id;
}

NodeId Tape::expected_perm(NodeId rule_weights, const ChartLayout& layout) {
  if (size(rule_weights) != layout.rule_count())
    throw std::logic_error("expected_perm: weight size mismatch");
  const int n = layout.n();
  std::vector<double> stash;
  std::vector<int> offsets;
  kernel::accumulate_expected(layout, value(rule_weights), stash, offsets);
  const NodeId id = alloc(n * n);
  if (n == 1) {
    *out_ptr(id) = 1.0;
  } else {
    const double* root = stash.data() + offsets.back();
    std::copy(root, root + static_cast<std::size_t>(n) * n, out_ptr(id));
  }
  const int aux_l = static_cast<int>(aux_layouts_.size());
  aux_layouts_.push_back(&layout);
  const int aux_d = static_cast<int>(aux_doubles_.size());
  aux_doubles_.push_back(std::move(stash));
  // i0 carries the layout index, aux the stash index.
  push(Op{OpKind::ExpectedPerm, id, rule_weights, -1, aux_l, 0, 0, 0.0, aux_d});
  return id;
}

void Tape::backward(NodeId root, double seed) {
  if (ops_.empty()) throw std::logic_error("backward: empty tape");
  if (nodes_[root].len != 1)
    throw std::logic_error("backward: root must be scalar");
  adjs_.assign(vals_.size(), 0.0);
  adjs_[nodes_[root].off] = seed;
  for (std::size_t t = ops_.size(); t-- > 0;) run_backward(ops_[t]);
}

void Tape::run_backward(const Op& op) {
  const int n = nodes_[op.out].len;
  const double* go = adjs_.data() + nodes_[op.out].off;
  const double* vo = vals_.data() + nodes_[op.out].off;
  switch (op.kind) {
    case OpKind::Input:
      break;
    case OpKind::Add: {
      double* ga = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      for (int i = 0; i < n; ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
      break;
    }
    case OpKind::Sub: {
      double* ga = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      for (int i = 0; i < n; ++i) {
        ga[i] += go[i];
        gb[i] -= go[i];
      }
      break;
    }
    case OpKind::Mul: {
      double* ga = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      const double* va = val_ptr(op.a);
      const double* vb = val_ptr(op.b);
      for (int i = 0; i < n; ++i) {
        ga[i] += go[i] * vb[i];
        gb[i] += go[i] * va[i];
      }
      break;
    }
    case OpKind::Scale: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i] * op.d0;
      break;
    }
    case OpKind::Tanh: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
      break;
    }
    case OpKind::Sigmoid: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
      break;
    }
    case OpKind::Exp: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i] * vo[i];
      break;
    }
    case OpKind::Log: {
      double* ga = adj_ptr(op.a);
      const double* va = val_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i] / va[i];
      break;
    }
    case OpKind::MatVec: {
      const int rows = op.i0, cols = op.i1;
      double* gw = adj_ptr(op.a);
      double* gx = adj_ptr(op.b);
      const double* vw = val_ptr(op.a);
      const double* vx = val_ptr(op.b);
      for (int r = 0; r < rows; ++r) {
        const double g = go[r];
        if (g == 0.0) continue;
        double* gwrow = gw + static_cast<std::size_t>(r) * cols;
        const double* vwrow = vw + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          gwrow[c] += g * vx[c];
          gx[c] += g * vwrow[c];
        }
      }
      break;
    }
    case OpKind::MatMul: {
      const int rows = op.i0, inner = op.i1, cols = op.i2;
      double* ga = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      const double* va = val_ptr(op.a);
      const double* vb = val_ptr(op.b);
      // gA = gO * B^T ; gB = A^T * gO
      for (int r = 0; r < rows; ++r)
        for (int k = 0; k < inner; ++k) {
          const double* go_row = go + static_cast<std::size_t>(r) * cols;
          const double* vb_row = vb + static_cast<std::size_t>(k) * cols;
          double s = 0.0;
          for (int c = 0; c < cols; ++c) s += go_row[c] * vb_row[c];
          ga[static_cast<std::size_t>(r) * inner + k] += s;
          const double a_rk = va[static_cast<std::size_t>(r) * inner + k];
          if (a_rk != 0.0) {
            double* gb_row = gb + static_cast<std::size_t>(k) * cols;
            for (int c = 0; c < cols; ++c) gb_row[c] += a_rk * go_row[c];
          }
        }
      break;
    }
    case OpKind::Concat: {
      double* ga = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      for (int i = 0; i < op.i0; ++i) ga[i] += go[i];
      for (int i = 0; i < op.i1; ++i) gb[i] += go[op.i0 + i];
      break;
    }
    case OpKind::ConcatMany: {
      const auto& parts = aux_ints_[op.aux];
      int off = 0;
      for (int pid : parts) {
        double* gp = adj_ptr(pid);
        const int len = nodes_[pid].len;
        for (int i = 0; i < len; ++i) gp[i] += go[off + i];
        off += len;
      }
      break;
    }
    case OpKind::Slice: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < op.i1; ++i) ga[op.i0 + i] += go[i];
      break;
    }
    case OpKind::GatherRows: {
      const auto& ids = aux_ints_[op.aux];
      const int row_len = op.i0;
      double* gt = adj_ptr(op.a);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        double* dst = gt + static_cast<std::size_t>(ids[r]) * row_len;
        const double* src = go + r * row_len;
        for (int c = 0; c < row_len; ++c) dst[c] += src[c];
      }
      break;
    }
    case OpKind::Sum: {
      double* ga = adj_ptr(op.a);
      const double g = go[0];
      for (int i = 0; i < nodes_[op.a].len; ++i) ga[i] += g;
      break;
    }
    case OpKind::Pick: {
      adj_ptr(op.a)[op.i0] += go[0];
      break;
    }
    case OpKind::LogSumExp: {
      double* ga = adj_ptr(op.a);
      const double* va = val_ptr(op.a);
      const double g = go[0];
      const double lse = vo[0];
      for (int i = 0; i < nodes_[op.a].len; ++i)
        ga[i] += g * std::exp(va[i] - lse);
      break;
    }
    case OpKind::Softmax: {
      double* ga = adj_ptr(op.a);
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += go[i] * vo[i];
      for (int i = 0; i < n; ++i)
        ga[i] += vo[i] * (go[i] - dot) / op.d0;
      break;
    }
    case OpKind::LogSoftmax: {
      double* ga = adj_ptr(op.a);
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += go[i];
      for (int i = 0; i < n; ++i) ga[i] += go[i] - std::exp(vo[i]) * total;
      break;
    }
    case OpKind::StraightThrough: {
      double* ga = adj_ptr(op.a);
      for (int i = 0; i < n; ++i) ga[i] += go[i];
      break;
    }
    case OpKind::InsideChart: {
      const ChartLayout& L = *aux_layouts_[op.aux];
      // inside_backward consumes the logbeta adjoints; hand it a copy.
      std::vector<double> lb_adj(go, go + n);
      std::span<double> logf_adj{adj_ptr(op.a),
                                 static_cast<std::size_t>(nodes_[op.a].len)};
      kernel::inside_backward(L, value(op.a), {vo, static_cast<std::size_t>(n)},
                              lb_adj, logf_adj);
      break;
    }
    case OpKind::PcfgChart: {
      const ChartLayout& L = *aux_layouts_[op.aux];
      double* gf = adj_ptr(op.a);
      double* gb = adj_ptr(op.b);
      for (const auto& s : L.spans()) {
        const int parent = L.beta_index(s.i, s.k);
        int r = s.rule_begin;
        for (int j = s.i + 1; j < s.k; ++j) {
          const int bl = L.beta_index(s.i, j), br = L.beta_index(j, s.k);
          for (int o = 0; o < 2; ++o, ++r) {
            const double c = go[r] * vo[r];
            if (c == 0.0) continue;
            gf[r] += c;
            gb[bl] += c;
            gb[br] += c;
            gb[parent] -= c;
          }
        }
      }
      break;
    }
    case OpKind::ExpectedPerm: {
      const ChartLayout& L = *aux_layouts_[op.i0];
      const auto& stash = aux_doubles_[op.aux];
      if (L.n() == 1) break;
      std::vector<int> offsets(L.span_count());
      int off = 0;
      for (int si = 0; si < L.span_count(); ++si) {
        offsets[si] = off;
        const int w = L.spans()[si].k - L.spans()[si].i;
        off += w * w;
      }
      std::span<double> wadj{adj_ptr(op.a),
                             static_cast<std::size_t>(nodes_[op.a].len)};
      kernel::accumulate_expected_backward(L, value(op.a), stash, offsets,
                                           {go, static_cast<std::size_t>(n)},
                                           wadj);
      break;
    }
  }
}

FiniteDiffReport finite_diff_check(
    const std::function<double(std::span<const double>)>& fn,
    std::span<const double> point, std::span<const double> analytic, double h,
    std::span<const std::size_t> coords) {
  if (point.size() != analytic.size())
    throw std::invalid_argument("finite_diff_check: size mismatch");
  std::vector<double> x(point.begin(), point.end());
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  FiniteDiffReport rep;
  for (std::size_t c : coords) {
    const double keep = x[c];
    x[c] = keep + h;
    const double up = fn(x);
    x[c] = keep - h;
    const double down = fn(x);
    x[c] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double ad = analytic[c];
    if (!std::isfinite(fd) || !std::isfinite(ad)) {
      rep.all_finite = false;
      rep.worst_coord = c;
      rep.max_rel_error = std::numeric_limits<double>::infinity();
      return rep;
    }
    const double rel = std::abs(fd - ad) / std::max(std::abs(fd), 1e-8);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_coord = c;
    }
  }
  return rep;
}

}  // namespace sepperm::ad
