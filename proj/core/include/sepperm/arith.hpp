#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepperm/permutation.hpp"
#include "sepperm/rng.hpp"

namespace sepperm {

// Closed token inventory of the arithmetic task: parens, the four operators,
// the ten digits. Ids are fixed by this order.
class ArithVocab {
 public:
  static int size() { return 16; }
  static const std::vector<std::string>& tokens();
  // Throws std::invalid_argument on an unknown token.
  static int id(const std::string& token);
  static const std::string& token(int id);
};

struct ArithExample {
  std::vector<std::string> infix;
  std::vector<std::string> postfix;
  int depth = 0;
};

// Nesting depth: a bare digit has depth 0; a parenthesized application has
// depth 1 + max(child depths).
int expression_depth(std::span<const std::string> infix);

// Deterministic infix -> postfix transform: a digit maps to itself and
// "( A op B )" maps to "( T(A) T(B) op )". Returns the postfix tokens and
// the permutation taking input positions to output slots (postfix[s] ==
// infix[perm.outputs[s]]). The permutation is separable by construction.
// Throws std::invalid_argument on malformed input.
struct PostfixResult {
  std::vector<std::string> postfix;
  Permutation perm;
};
PostfixResult infix_to_postfix(std::span<const std::string> infix);

// Expression sampler: a node at depth-from-root level l expands into
// "( A op B )" with probability expand_base * expand_decay^l while the
// remaining depth budget allows, else it emits a digit. Digits and operators
// are uniform. Values are recorded alongside generated datasets rather than
// hard-coded into file formats.
struct GenConfig {
  double expand_base = 0.55;
  double expand_decay = 0.8;
};

// `count` examples whose depth lies in [min_depth, max_depth], by rejection.
// Fully determined by (count, depths, seed, cfg).
std::vector<ArithExample> gen_arith(int count, int min_depth, int max_depth,
                                    std::uint64_t seed,
                                    const GenConfig& cfg = {});

struct SplitFiles {
  std::vector<ArithExample> train, dev, test;
};

// IID: all three sets from depths [1,6] with disjoint seed streams.
// LEN: train/dev from depths [1,6], test from depth exactly 7.
enum class SplitKind { IID, LEN };

SplitFiles make_splits(SplitKind kind, int train_count, int dev_count,
                       int test_count, std::uint64_t seed,
                       const GenConfig& cfg = {});

}  // namespace sepperm
