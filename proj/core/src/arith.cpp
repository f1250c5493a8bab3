#include "sepperm/arith.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace sepperm {

namespace {

const std::vector<std::string> kTokens = {
    "(", ")", "+", "-", "*", "/",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};

bool is_digit_token(const std::string& t) {
  return t.size() == 1 && t[0] >= '0' && t[0] <= '9';
}

bool is_op_token(const std::string& t) {
  return t == "+" || t == "-" || t == "*" || t == "/";
}

struct ParseOut {
  int depth = 0;
  // Input positions in output (postfix) order for this subexpression.
  std::vector<int> order;
};

// Recursive descent over [lo, hi): either a single digit or "( A op B )"
// with the operator found at paren balance zero.
ParseOut parse(std::span<const std::string> toks, int lo, int hi) {
  if (hi - lo < 1) throw std::invalid_argument("expression: empty span");
  if (hi - lo == 1) {
    if (!is_digit_token(toks[lo]))
      throw std::invalid_argument("expression: expected a digit");
    return ParseOut{0, {lo}};
  }
  if (toks[lo] != "(" || toks[hi - 1] != ")")
    throw std::invalid_argument("expression: expected parentheses");
  int balance = 0;
  int op_pos = -1;
  for (int p = lo + 1; p < hi - 1; ++p) {
    if (toks[p] == "(") ++balance;
    else if (toks[p] == ")") --balance;
    else if (balance == 0 && is_op_token(toks[p])) {
      op_pos = p;
      break;
    }
  }
  if (op_pos <= lo + 1 || op_pos >= hi - 2)
    throw std::invalid_argument("expression: missing operator or operand");
  ParseOut a = parse(toks, lo + 1, op_pos);
  ParseOut b = parse(toks, op_pos + 1, hi - 1);
  ParseOut out;
  out.depth = 1 + std::max(a.depth, b.depth);
  out.order.reserve(hi - lo);
  out.order.push_back(lo);  // "("
  out.order.insert(out.order.end(), a.order.begin(), a.order.end());
  out.order.insert(out.order.end(), b.order.begin(), b.order.end());
  out.order.push_back(op_pos);
  out.order.push_back(hi - 1);  // ")"
  return out;
}

// Samples one expression; `level` is the node's distance from the root.
void sample_expr(Rng& rng, const GenConfig& cfg, int level, int budget,
                 std::vector<std::string>& out) {
  const double p_expand =
      cfg.expand_base * std::pow(cfg.expand_decay, level);
  if (budget > 0 && rng.uniform() < p_expand) {
    out.push_back("(");
    sample_expr(rng, cfg, level + 1, budget - 1, out);
    out.push_back(kTokens[2 + rng.below(4)]);  // one of + - * /
    sample_expr(rng, cfg, level + 1, budget - 1, out);
    out.push_back(")");
  } else {
    out.push_back(kTokens[6 + rng.below(10)]);
  }
}

}  // namespace

const std::vector<std::string>& ArithVocab::tokens() { return kTokens; }

int ArithVocab::id(const std::string& token) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    for (int i = 0; i < static_cast<int>(kTokens.size()); ++i)
      m.emplace(kTokens[i], i);
    return m;
  }();
  const auto it = index.find(token);
  if (it == index.end())
    throw std::invalid_argument("unknown token: " + token);
  return it->second;
}

const std::string& ArithVocab::token(int id) {
  if (id < 0 || id >= static_cast<int>(kTokens.size()))
    throw std::invalid_argument("token id out of range");
  return kTokens[id];
}

int expression_depth(std::span<const std::string> infix) {
  return parse(infix, 0, static_cast<int>(infix.size())).depth;
}

PostfixResult infix_to_postfix(std::span<const std::string> infix) {
  const ParseOut p = parse(infix, 0, static_cast<int>(infix.size()));
  PostfixResult out;
  out.postfix.reserve(infix.size());
  for (int idx : p.order) out.postfix.push_back(infix[idx]);
  out.perm = Permutation{p.order};
  return out;
}

std::vector<ArithExample> gen_arith(int count, int min_depth, int max_depth,
                                    std::uint64_t seed, const GenConfig& cfg) {
  if (count < 0) throw std::invalid_argument("gen_arith: count < 0");
  if (min_depth < 0 || min_depth > max_depth)
    throw std::invalid_argument("gen_arith: bad depth range");
  Rng rng(seed);
  std::vector<ArithExample> out;
  out.reserve(count);
  std::vector<std::string> toks;
  while (static_cast<int>(out.size()) < count) {
    toks.clear();
    sample_expr(rng, cfg, 0, max_depth, toks);
    const int depth = expression_depth(toks);
    if (depth < min_depth || depth > max_depth) continue;
    ArithExample ex;
    ex.infix = toks;
    ex.postfix = infix_to_postfix(toks).postfix;
    ex.depth = depth;
    out.push_back(std::move(ex));
  }
  return out;
}

SplitFiles make_splits(SplitKind kind, int train_count, int dev_count,
                       int test_count, std::uint64_t seed,
                       const GenConfig& cfg) {
  Rng root(seed);
  const std::uint64_t key = kind == SplitKind::IID ? 0 : 8;
  SplitFiles s;
  s.train = gen_arith(train_count, 1, 6, root.split(key + 1).seed(), cfg);
  s.dev = gen_arith(dev_count, 1, 6, root.split(key + 2).seed(), cfg);
  s.test = kind == SplitKind::IID
               ? gen_arith(test_count, 1, 6, root.split(key + 3).seed(), cfg)
               : gen_arith(test_count, 7, 7, root.split(key + 3).seed(), cfg);
  return s;
}

}  // namespace sepperm
