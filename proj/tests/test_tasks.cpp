// Arithmetic task: vocabulary, the infix -> postfix transform and its
// permutation, the expression sampler, and split construction. The central
// property — postfix[s] == infix[perm.outputs[s]] with a separable
// permutation — is checked on a hand-worked pair and then in bulk on
// generated data.

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "sepperm/arith.hpp"
#include "sepperm/permutation.hpp"

using namespace sepperm;

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_ws(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("vocabulary is closed and bijective") {
  CHECK(ArithVocab::size() == 16);
  std::set<std::string> seen;
  for (int id = 0; id < 16; ++id) {
    const std::string& tok = ArithVocab::token(id);
    CHECK(ArithVocab::id(tok) == id);
    seen.insert(tok);
  }
  CHECK(seen.size() == 16);
  for (const char* tok : {"(", ")", "+", "-", "*", "/", "0", "9"})
    CHECK_NOTHROW(ArithVocab::id(tok));
  CHECK_THROWS_AS(ArithVocab::id("x"), std::invalid_argument);
  CHECK_THROWS_AS(ArithVocab::token(16), std::invalid_argument);
}

TEST_CASE("hand-worked transform pair") {
  // ((1+9)*((7+8)/4))  ->  ((19+)((78+)4/)*)
  const auto infix = split_ws("( ( 1 + 9 ) * ( ( 7 + 8 ) / 4 ) )");
  const auto want = split_ws("( ( 1 9 + ) ( ( 7 8 + ) 4 / ) * )");
  REQUIRE(infix.size() == 17);
  PostfixResult r = infix_to_postfix(infix);
  CHECK(r.postfix == want);
  REQUIRE(r.perm.n() == 17);
  CHECK(r.perm.valid());
  CHECK(is_separable(r.perm));
  for (int s = 0; s < 17; ++s)
    CHECK(r.postfix[static_cast<std::size_t>(s)] ==
          infix[static_cast<std::size_t>(r.perm.outputs[s])]);
}

TEST_CASE("single digits map to themselves") {
  const std::vector<std::string> digit = {"7"};
  PostfixResult r = infix_to_postfix(digit);
  CHECK(r.postfix == digit);
  CHECK(r.perm.outputs == std::vector<int>{0});
  CHECK(expression_depth(digit) == 0);
}

TEST_CASE("depth-one expression moves only its operator") {
  const auto infix = split_ws("( 3 + 4 )");
  PostfixResult r = infix_to_postfix(infix);
  CHECK(join_ws(r.postfix) == "( 3 4 + )");
  CHECK(r.perm.outputs == std::vector<int>{0, 1, 3, 2, 4});
  CHECK(expression_depth(infix) == 1);
}

TEST_CASE("malformed expressions are rejected") {
  for (const char* bad :
       {"", "(", "( 1 + )", "( 1 + 2", "1 2", "( 1 ? 2 )", ") 1 + 2 ("}) {
    CHECK_THROWS_AS(infix_to_postfix(split_ws(bad)), std::invalid_argument);
  }
}

TEST_CASE("generated examples satisfy the transform property in bulk") {
  const auto examples = gen_arith(300, 1, 6, 909);
  REQUIRE(examples.size() == 300);
  for (const ArithExample& e : examples) {
    CHECK(e.depth >= 1);
    CHECK(e.depth <= 6);
    CHECK(expression_depth(e.infix) == e.depth);
    for (const std::string& tok : e.infix) CHECK_NOTHROW(ArithVocab::id(tok));

    PostfixResult r = infix_to_postfix(e.infix);
    CHECK(r.postfix == e.postfix);
    CHECK(r.perm.valid());
    CHECK(is_separable(r.perm));
    const int n = r.perm.n();
    for (int s = 0; s < n; ++s)
      CHECK(e.postfix[static_cast<std::size_t>(s)] ==
            e.infix[static_cast<std::size_t>(r.perm.outputs[s])]);
  }
}

TEST_CASE("generation covers the requested depth range") {
  const auto examples = gen_arith(1000, 1, 6, 910);
  std::set<int> depths;
  for (const ArithExample& e : examples) depths.insert(e.depth);
  for (int d = 1; d <= 6; ++d) CHECK(depths.count(d) == 1);
}

TEST_CASE("generation is determined by its arguments") {
  const auto a = gen_arith(50, 2, 5, 911);
  const auto b = gen_arith(50, 2, 5, 911);
  const auto c = gen_arith(50, 2, 5, 912);
  REQUIRE(a.size() == b.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    all_equal = all_equal && a[i].infix == b[i].infix;
  CHECK(all_equal);
  bool any_differ = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i)
    any_differ = any_differ || a[i].infix != c[i].infix;
  CHECK(any_differ);
}

TEST_CASE("splits: sizes, depth policy, and disjoint streams") {
  SplitFiles iid = make_splits(SplitKind::IID, 40, 15, 10, 77);
  CHECK(iid.train.size() == 40);
  CHECK(iid.dev.size() == 15);
  CHECK(iid.test.size() == 10);
  for (const ArithExample& e : iid.test) {
    CHECK(e.depth >= 1);
    CHECK(e.depth <= 6);
  }

  SplitFiles len = make_splits(SplitKind::LEN, 40, 15, 10, 77);
  for (const ArithExample& e : len.train) {
    CHECK(e.depth >= 1);
    CHECK(e.depth <= 6);
  }
  for (const ArithExample& e : len.test) CHECK(e.depth == 7);

  // Same seed, same kind: identical. The three inner sets differ from each
  // other (independent substreams).
  SplitFiles again = make_splits(SplitKind::IID, 40, 15, 10, 77);
  bool same = again.train.size() == iid.train.size();
  for (std::size_t i = 0; same && i < again.train.size(); ++i)
    same = again.train[i].infix == iid.train[i].infix;
  CHECK(same);
  CHECK(iid.train[0].infix != iid.dev[0].infix);
}

TEST_CASE("depth-seven examples are long enough to stress length transfer") {
  SplitFiles len = make_splits(SplitKind::LEN, 1, 1, 30, 78);
  std::size_t max_len = 0;
  for (const ArithExample& e : len.test)
    max_len = std::max(max_len, e.infix.size());
  // Depth 7 forces at least 7 nested applications: 4 tokens per level plus
  // a digit gives a floor of 29 tokens on the deepest path alone.
  CHECK(max_len >= 29);
}

}  // TEST_SUITE
