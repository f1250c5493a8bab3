#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sepperm/matrix.hpp"

namespace sepperm {

enum class Orientation : std::uint8_t { Straight = 0, Inverted = 1 };

class PermTree;
using PermTreePtr = std::shared_ptr<const PermTree>;

// Immutable binary tree over a contiguous token span. Leaves carry absolute
// input positions; an internal node composes its children either in order
// (Straight) or right-child-first (Inverted). Children of an internal node
// must cover adjacent spans, left child first.
class PermTree {
 public:
  static PermTreePtr leaf(int pos);
  static PermTreePtr internal(Orientation o, PermTreePtr l, PermTreePtr r);

  bool is_leaf() const { return !left_; }
  int pos() const { return begin_; }  // leaf position
  Orientation orientation() const { return orient_; }
  const PermTreePtr& left() const { return left_; }
  const PermTreePtr& right() const { return right_; }

  int begin() const { return begin_; }  // covered span [begin, end)
  int end() const { return end_; }
  int size() const { return end_ - begin_; }

  bool equals(const PermTree& other) const;

 private:
  PermTree() = default;
  Orientation orient_ = Orientation::Straight;
  PermTreePtr left_, right_;
  int begin_ = 0, end_ = 0;
};

// Row-reading of a permutation matrix: outputs[a] = b means output slot a
// holds input token b.
struct Permutation {
  std::vector<int> outputs;

  int n() const { return static_cast<int>(outputs.size()); }
  // True when outputs is a permutation of 0..n-1.
  bool valid() const;
  bool operator==(const Permutation&) const = default;
};

// n-by-n 0/1 matrix with exactly one 1 per row and per column, stored by its
// row-reading. Entry (a, b) = 1 means output slot a holds input token b, so
// M·X reorders the rows of an n-by-h matrix X.
class PermMatrix {
 public:
  // Throws std::invalid_argument unless slot_to_input is a permutation.
  explicit PermMatrix(std::vector<int> slot_to_input);

  int n() const { return static_cast<int>(slot_.size()); }
  int input_at(int slot) const { return slot_[slot]; }
  const std::vector<int>& slots() const { return slot_; }
  Permutation perm() const { return Permutation{slot_}; }
  Mat dense() const;

  bool operator==(const PermMatrix&) const = default;

 private:
  std::vector<int> slot_;
};

// Block compositions on real matrices (used both for 0/1 permutation blocks
// and for doubly-stochastic marginals). With a of size p and b of size q:
//   direct_sum: a occupies rows/cols 0..p-1, b occupies rows/cols p..p+q-1.
//   skew_sum:   b occupies rows 0..q-1 at cols p..p+q-1 (top-right) and a
//               occupies rows q..q+p-1 at cols 0..p-1 (bottom-left).
// The skew layout is pinned by the five-leaf worked example in the tests:
// composing ((·⊕·)⊖·)⊕(·⊕·) over 1x1 blocks must yield the permutation
// (2,0,1,3,4) under M·X row-reordering, i.e. an Inverted node puts its RIGHT
// child's output slots first. Both sums preserve doubly-stochasticity.
Mat direct_sum(const Mat& a, const Mat& b);
Mat skew_sum(const Mat& a, const Mat& b);

// Structural recursion: leaf -> 1x1 identity, Straight -> direct_sum of the
// children, Inverted -> skew_sum of the children. The result is local to the
// tree's span: slot s holds input (tree.begin() + offset).
PermMatrix tree_to_matrix(const PermTree& tree);

// O(n^3) span dynamic program: a permutation is expressible by some PermTree
// iff every level of the recursion can split an output span into two blocks
// of contiguous, adjacent input indices.
bool is_separable(const Permutation& p);

// All trees over [0, n), every shape and every orientation labeling.
// Throws std::invalid_argument for n < 1 or n > 8 (the count grows as
// Catalan(n-1)·2^(n-1)).
std::vector<PermTreePtr> enumerate_trees(int n);

// Number of distinct permutations reachable by some tree over [0, n).
// Same n <= 8 guard as enumerate_trees.
long long count_separable(int n);

}  // namespace sepperm
