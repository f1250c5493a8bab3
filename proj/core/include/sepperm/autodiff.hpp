#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sepperm/chart.hpp"

namespace sepperm::ad {

using NodeId = std::int32_t;

// Define-by-run reverse-mode tape over a fixed primitive set (elementwise
// ops, matrix-vector/matrix products, gathers, log-sum-exp, softmax, and the
// structured chart operations: inside pass, per-span normalization, weighted
// block accumulation). Forward values are computed eagerly at record time;
// backward() replays the adjoint rules in reverse record order, which is a
// reverse topological order by construction. Every node reachable from the
// loss receives an adjoint (possibly zero).
//
// Node values live in one contiguous arena; NodeIds and value offsets stay
// valid until reset(). Single-threaded by design.
class Tape {
 public:
  Tape();

  // Drops all nodes but keeps arena capacity (cheap per-example reuse).
  void reset();

  NodeId input(std::span<const double> v);
  NodeId input_scalar(double v);
  NodeId zeros(int len);

  int size(NodeId id) const;
  std::span<const double> value(NodeId id) const;
  double scalar(NodeId id) const;  // value of a size-1 node
  // Adjoint of a node; valid after backward().
  std::span<const double> grad(NodeId id) const;

  // Elementwise (equal sizes unless noted).
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId tanh_(NodeId a);
  NodeId sigmoid_(NodeId a);
  NodeId exp_(NodeId a);
  NodeId log_(NodeId a);

  // y = W x with W row-major rows-by-cols, x of length cols.
  NodeId matvec(NodeId w, NodeId x, int rows, int cols);
  // C = A B with A n-by-m, B m-by-p (row-major, flattened).
  NodeId matmul(NodeId a, NodeId b, int n, int m, int p);

  NodeId concat(NodeId a, NodeId b);
  NodeId concat_many(std::span<const NodeId> parts);
  NodeId slice(NodeId a, int offset, int len);
  // out row r = table row ids[r]; table is rows-by-row_len row-major.
  NodeId gather_rows(NodeId table, std::span<const int> ids, int row_len);

  NodeId sum(NodeId a);
  NodeId pick(NodeId a, int idx);
  NodeId logsumexp(NodeId a);
  // softmax(v / temperature); temperature > 0.
  NodeId softmax(NodeId a, double temperature = 1.0);
  NodeId log_softmax(NodeId a);

  // Forward value = `hard` (same length as `relaxed`); backward passes the
  // adjoint to `relaxed` unchanged (straight-through estimator).
  NodeId straight_through(std::span<const double> hard, NodeId relaxed);

  // A layout owned by the tape, one per length, reused across reset() calls.
  // Structured ops keep a pointer to their layout, so passing a layout with
  // a shorter lifetime than the tape is an error this helper avoids.
  const ChartLayout& layout_cache(int n);

  // Structured chart ops. `layout` must outlive backward().
  NodeId inside_chart(NodeId logf, const ChartLayout& layout);
  NodeId pcfg_chart(NodeId logf, NodeId logbeta, const ChartLayout& layout);
  // rule_weights -> flattened n*n root accumulation (see
  // kernel::accumulate_expected). Keeps the per-span matrices for backward.
  NodeId expected_perm(NodeId rule_weights, const ChartLayout& layout);

  // Seeds d(root)/d(root) = seed (root must be scalar) and replays all
  // adjoint rules. Throws std::logic_error on an empty tape.
  void backward(NodeId root, double seed = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class OpKind : std::uint8_t {
    Input, Add, Sub, Mul, Scale, Tanh, Sigmoid, Exp, Log,
    MatVec, MatMul, Concat, ConcatMany, Slice, GatherRows,
    Sum, Pick, LogSumExp, Softmax, LogSoftmax, StraightThrough,
    InsideChart, PcfgChart, ExpectedPerm,
  };

  struct Node {
    int off = 0;
    int len = 0;
  };

  struct Op {
    OpKind kind;
    NodeId out, a, b;
    int i0, i1, i2;  // op-specific integers (shapes, offsets)
    double d0;       // op-specific scalar (scale factor, temperature)
    int aux;         // index into an aux pool, -1 if unused
  };

  NodeId alloc(int len);
  double* out_ptr(NodeId id) { return vals_.data() + nodes_[id].off; }
  const double* val_ptr(NodeId id) const {
    return vals_.data() + nodes_[id].off;
  }
  double* adj_ptr(NodeId id) { return adjs_.data() + nodes_[id].off; }
  void push(Op op) { ops_.push_back(op); }
  void run_backward(const Op& op);

  std::vector<Node> nodes_;
  std::vector<Op> ops_;
  std::vector<double> vals_;
  std::vector<double> adjs_;
  std::vector<std::vector<int>> aux_ints_;
  std::vector<std::vector<double>> aux_doubles_;
  std::vector<const ChartLayout*> aux_layouts_;
  std::vector<std::unique_ptr<ChartLayout>> layout_pool_;  // survives reset()
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_coord = 0;
  bool all_finite = true;
};

// Central finite differences of `fn` at `point`, compared coordinate-wise
// against `analytic`. Relative error uses denominator max(|fd|, 1e-8). When
// `coords` is empty every coordinate is checked, otherwise only the listed
// ones (the full pipeline has too many parameters to probe one by one).
// Non-finite values of fn or analytic mark the report not-all-finite with
// the offending coordinate in worst_coord.
FiniteDiffReport finite_diff_check(
    const std::function<double(std::span<const double>)>& fn,
    std::span<const double> point, std::span<const double> analytic, double h,
    std::span<const std::size_t> coords = {});

}  // namespace sepperm::ad
