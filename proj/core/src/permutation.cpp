#include "sepperm/permutation.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace sepperm {

PermTreePtr PermTree::leaf(int pos) {
  if (pos < 0) throw std::invalid_argument("PermTree::leaf: negative position");
  auto t = std::shared_ptr<PermTree>(new PermTree());
  t->begin_ = pos;
  t->end_ = pos + 1;
  return t;
}

PermTreePtr PermTree::internal(Orientation o, PermTreePtr l, PermTreePtr r) {
  if (!l || !r) throw std::invalid_argument("PermTree::internal: null child");
  if (l->end() != r->begin())
    throw std::invalid_argument(
        "PermTree::internal: children must cover adjacent spans, left first");
  auto t = std::shared_ptr<PermTree>(new PermTree());
  t->orient_ = o;
  t->left_ = std::move(l);
  t->right_ = std::move(r);
  t->begin_ = t->left_->begin();
  t->end_ = t->right_->end();
  return t;
}

bool PermTree::equals(const PermTree& other) const {
  if (is_leaf() != other.is_leaf()) return false;
  if (is_leaf()) return begin_ == other.begin_;
  return orient_ == other.orient_ && left_->equals(*other.left_) &&
         right_->equals(*other.right_);
}

bool Permutation::valid() const {
  const int m = n();
  if (m == 0) return false;  // carriers are sentences, length >= 1
  std::vector<char> seen(m, 0);
  for (int v : outputs) {
    if (v < 0 || v >= m || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

PermMatrix::PermMatrix(std::vector<int> slot_to_input)
    : slot_(std::move(slot_to_input)) {
  if (!Permutation{slot_}.valid())
    throw std::invalid_argument("PermMatrix: not a permutation");
}

Mat PermMatrix::dense() const {
  Mat m(n(), n());
  for (int s = 0; s < n(); ++s) m(s, slot_[s]) = 1.0;
  return m;
}

Mat direct_sum(const Mat& a, const Mat& b) {
  const int p = a.rows(), q = b.rows();
  if (a.cols() != p || b.cols() != q)
    throw std::invalid_argument("direct_sum: operands must be square");
  Mat out(p + q, p + q);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) out(r, c) = a(r, c);
  for (int r = 0; r < q; ++r)
    for (int c = 0; c < q; ++c) out(p + r, p + c) = b(r, c);
  return out;
}

Mat skew_sum(const Mat& a, const Mat& b) {
  const int p = a.rows(), q = b.rows();
  if (a.cols() != p || b.cols() != q)
    throw std::invalid_argument("skew_sum: operands must be square");
  // Right operand's block first in row order (top-right), left operand's
  // block last (bottom-left); see the header note on the layout pin.
  Mat out(p + q, p + q);
  for (int r = 0; r < q; ++r)
    for (int c = 0; c < q; ++c) out(r, p + c) = b(r, c);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) out(q + r, c) = a(r, c);
  return out;
}

namespace {

void read_slots(const PermTree& t, std::vector<int>& out) {
  if (t.is_leaf()) {
    out.push_back(t.pos());
    return;
  }
  if (t.orientation() == Orientation::Straight) {
    read_slots(*t.left(), out);
    read_slots(*t.right(), out);
  } else {
    read_slots(*t.right(), out);
    read_slots(*t.left(), out);
  }
}

}  // namespace

PermMatrix tree_to_matrix(const PermTree& tree) {
  std::vector<int> slots;
  slots.reserve(tree.size());
  read_slots(tree, slots);
  for (int& s : slots) s -= tree.begin();  // local coordinates
  return PermMatrix(std::move(slots));
}

bool is_separable(const Permutation& p) {
  if (!p.valid()) throw std::invalid_argument("is_separable: not a permutation");
  const int n = p.n();
  if (n == 0) throw std::invalid_argument("is_separable: empty permutation");
  if (n == 1) return true;

  // mn/mx over output-slot spans [a,b): the input indices covered.
  std::vector<int> mn(n * (n + 1)), mx(n * (n + 1));
  auto at = [n](int a, int b) { return a * (n + 1) + b; };
  for (int a = 0; a < n; ++a) {
    mn[at(a, a + 1)] = mx[at(a, a + 1)] = p.outputs[a];
    for (int b = a + 2; b <= n; ++b) {
      mn[at(a, b)] = std::min(mn[at(a, b - 1)], p.outputs[b - 1]);
      mx[at(a, b)] = std::max(mx[at(a, b - 1)], p.outputs[b - 1]);
    }
  }

  // buildable[a][b]: the slots [a,b) form a contiguous input block that can
  // be split into two adjacent contiguous buildable blocks, recursively.
  std::vector<char> buildable(n * (n + 1), 0);
  for (int a = 0; a < n; ++a) buildable[at(a, a + 1)] = 1;
  for (int w = 2; w <= n; ++w) {
    for (int a = 0; a + w <= n; ++a) {
      const int b = a + w;
      if (mx[at(a, b)] - mn[at(a, b)] != w - 1) continue;  // not contiguous
      for (int c = a + 1; c < b; ++c) {
        if (!buildable[at(a, c)] || !buildable[at(c, b)]) continue;
        // Both halves are contiguous blocks; adjacency follows from the
        // whole span being contiguous when the halves don't interleave.
        const bool halves_contiguous =
            (mx[at(a, c)] - mn[at(a, c)] == c - a - 1) &&
            (mx[at(c, b)] - mn[at(c, b)] == b - c - 1);
        if (halves_contiguous) {
          buildable[at(a, b)] = 1;
          break;
        }
      }
    }
  }
  return buildable[at(0, n)] != 0;
}

namespace {

constexpr int kMaxEnumN = 8;

// Trees over [i, k), memoized per span.
const std::vector<PermTreePtr>& trees_over(
    int i, int k, std::vector<std::vector<std::vector<PermTreePtr>>>& memo) {
  auto& slot = memo[i][k];
  if (!slot.empty()) return slot;
  if (k - i == 1) {
    slot.push_back(PermTree::leaf(i));
    return slot;
  }
  for (int j = i + 1; j < k; ++j) {
    const auto& ls = trees_over(i, j, memo);
    const auto& rs = trees_over(j, k, memo);
    for (const auto& l : ls)
      for (const auto& r : rs) {
        slot.push_back(PermTree::internal(Orientation::Straight, l, r));
        slot.push_back(PermTree::internal(Orientation::Inverted, l, r));
      }
  }
  return slot;
}

}  // namespace

std::vector<PermTreePtr> enumerate_trees(int n) {
  if (n < 1 || n > kMaxEnumN)
    throw std::invalid_argument("enumerate_trees: n must be in [1, 8]");
  std::vector<std::vector<std::vector<PermTreePtr>>> memo(
      n + 1, std::vector<std::vector<PermTreePtr>>(n + 1));
  return trees_over(0, n, memo);
}

long long count_separable(int n) {
  if (n < 1 || n > kMaxEnumN)
    throw std::invalid_argument("count_separable: n must be in [1, 8]");
  std::unordered_set<std::string> seen;
  for (const auto& t : enumerate_trees(n)) {
    const PermMatrix m = tree_to_matrix(*t);
    std::string key(m.slots().begin(), m.slots().end());
    seen.insert(std::move(key));
  }
  return static_cast<long long>(seen.size());
}

}  // namespace sepperm
