// sepperm: command-line front end for the separable-reordering library.
//
// Conventions: results go to stdout as JSON (or fixed key=value text where
// noted); progress and diagnostics go to stderr. Exit codes: 0 success,
// 1 contract violation (bad input data, failed check), 2 flag error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepperm/arith.hpp"
#include "sepperm/autodiff.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/inference.hpp"
#include "sepperm/model.hpp"
#include "sepperm/permutation.hpp"
#include "sepperm/serialize.hpp"

namespace {

using nlohmann::ordered_json;
using namespace sepperm;

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  return read_file(path);
}

struct MarginalArgs {
  std::string in;
};

int run_marginal(const MarginalArgs& a) {
  const RuleWeightChart chart = rule_chart_from_json(read_input(a.in));
  const Mat expected = marginal(wcfg_to_pcfg(chart));
  std::cout << expected_perm_to_json(expected) << "\n";
  return 0;
}

struct MapArgs {
  std::string in;
};

int run_map(const MapArgs& a) {
  const RuleWeightChart chart = rule_chart_from_json(read_input(a.in));
  const PcfgChart g = wcfg_to_pcfg(chart);
  const auto [tree, prob] = map_derivation(g);
  const PermMatrix matrix = tree_to_matrix(*tree);
  ordered_json j;
  j["tree"] = ordered_json::parse(tree_to_json(*tree));
  j["matrix"] = ordered_json::parse(perm_matrix_to_json(matrix));
  j["prob"] = prob;
  std::cout << j.dump() << "\n";
  return 0;
}

struct SampleArgs {
  std::string in;
  std::string sampler = "gumbel";
  int count = 1;
  double temperature = 1.0;
  std::uint64_t seed = 17;
};

int run_sample(const SampleArgs& a) {
  const RuleWeightChart chart = rule_chart_from_json(read_input(a.in));
  const PcfgChart g = wcfg_to_pcfg(chart);
  Rng rng(a.seed);
  for (int i = 0; i < a.count; ++i) {
    if (a.sampler == "gumbel") {
      Rng draw = rng.split(i);
      const SampledPerm s = gumbel_sample(g, draw, a.temperature);
      std::cout << sampled_perm_to_json(s) << "\n";
    } else {
      const PermTreePtr tree = ancestral_sample(g, rng);
      const PermMatrix matrix = tree_to_matrix(*tree);
      ordered_json j;
      j["tree"] = ordered_json::parse(tree_to_json(*tree));
      j["matrix"] = ordered_json::parse(perm_matrix_to_json(matrix));
      std::cout << j.dump() << "\n";
    }
  }
  return 0;
}

struct EnumerateArgs {
  int n = 4;
};

int run_enumerate(const EnumerateArgs& a) {
  const auto trees = enumerate_trees(a.n);
  std::cout << "trees=" << trees.size()
            << " separable=" << count_separable(a.n) << "\n";
  return 0;
}

struct GradcheckArgs {
  std::string variant = "soft";
  std::uint64_t seed = 17;
  int coords = 48;
  double h = 1e-4;  // central differences; larger steps drown in truncation,
                    // smaller ones in roundoff through the deep pipeline
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  const Variant variant = variant_from_name(a.variant);
  // Small dimensions keep the finite-difference probes honest and fast.
  TrainConfig cfg;
  cfg.d_syn = 6;
  cfg.h_syn = 5;
  cfg.mlp_hidden = 7;
  cfg.d_sem = 4;
  cfg.h_sem = 3;
  Rng init(a.seed);
  Model m;
  m.variant = variant;
  m.scorer = ScorerParams::init(ArithVocab::size(), cfg.d_syn, cfg.h_syn,
                                cfg.mlp_hidden, init);
  m.tagger =
      TaggerParams::init(ArithVocab::size(), cfg.d_sem, cfg.h_sem, init);

  const auto data = gen_arith(1, 1, 2, a.seed + 1);
  const std::vector<Example> ids = to_id_examples(data);
  const Example& ex = ids.front();

  std::vector<TensorRef> refs = m.scorer.tensors();
  for (TensorRef& r : m.tagger.tensors()) refs.push_back(std::move(r));
  std::size_t total = 0;
  for (const TensorRef& r : refs) total += r.data->size();

  std::vector<double> point;
  point.reserve(total);
  for (const TensorRef& r : refs)
    point.insert(point.end(), r.data->begin(), r.data->end());

  auto scatter = [&refs](std::span<const double> x) {
    std::size_t off = 0;
    for (const TensorRef& r : refs) {
      std::copy(x.begin() + off, x.begin() + off + r.data->size(),
                r.data->begin());
      off += r.data->size();
    }
  };

  // The noise source restarts from the same seed on every probe, freezing the
  // Gumbel draws. For the hard variant the pure-relaxed surrogate is probed:
  // the straight-through forward is piecewise constant in the parameters, so
  // only its relaxed backward is a gradient finite differences can see.
  auto run = [&](std::span<const double> x) {
    scatter(x);
    Rng noise(a.seed + 2);
    if (variant == Variant::Hard)
      return loss_gradients_relaxed(m, ex.tokens, ex.gold, 1.0, noise);
    return loss_gradients(m, variant, ex.tokens, ex.gold, 1.0, &noise);
  };
  auto loss_at = [&](std::span<const double> x) { return run(x).loss; };

  const LossWithGrads lg = run(point);
  std::vector<double> analytic(total, 0.0);
  {
    std::size_t off = 0;
    for (const TensorRef& r : refs) {
      for (std::size_t i = 0; i < lg.names.size(); ++i)
        if (lg.names[i] == r.name)
          std::copy(lg.grads[i].begin(), lg.grads[i].end(),
                    analytic.begin() + off);
      off += r.data->size();
    }
  }

  const int probes = std::min<int>(a.coords, static_cast<int>(total));
  std::vector<std::size_t> coords(probes);
  for (int i = 0; i < probes; ++i)
    coords[i] = (static_cast<std::size_t>(i) * total) / probes;

  const ad::FiniteDiffReport rep =
      ad::finite_diff_check(loss_at, point, analytic, a.h, coords);
  scatter(point);

  const bool ok = rep.all_finite && rep.max_rel_error <= a.tolerance;
  ordered_json j;
  j["variant"] = a.variant;
  j["loss"] = lg.loss;
  j["coords_checked"] = probes;
  j["max_rel_error"] = rep.max_rel_error;
  j["worst_coord"] = rep.worst_coord;
  j["tolerance"] = a.tolerance;
  j["ok"] = ok;
  std::cout << j.dump() << "\n";
  return ok ? 0 : 1;
}

struct GenArithArgs {
  std::string kind = "iid";
  int train = 5000, dev = 1000, test = 1000;
  std::uint64_t seed = 17;
  std::string out_dir = ".";
};

int run_gen_arith(const GenArithArgs& a) {
  SplitKind kind;
  if (a.kind == "iid") kind = SplitKind::IID;
  else if (a.kind == "len") kind = SplitKind::LEN;
  else throw std::invalid_argument("gen-arith: kind must be iid or len");
  std::filesystem::create_directories(a.out_dir);
  const SplitFiles s = make_splits(kind, a.train, a.dev, a.test, a.seed);
  write_tsv(a.out_dir + "/train.tsv", s.train);
  write_tsv(a.out_dir + "/dev.tsv", s.dev);
  write_tsv(a.out_dir + "/test.tsv", s.test);
  auto stats = [](std::span<const ArithExample> xs) {
    ordered_json j;
    std::size_t total = 0;
    int dmin = 1 << 20, dmax = 0;
    for (const ArithExample& x : xs) {
      total += x.infix.size();
      dmin = std::min(dmin, x.depth);
      dmax = std::max(dmax, x.depth);
    }
    j["count"] = xs.size();
    j["mean_len"] = xs.empty() ? 0.0 : static_cast<double>(total) / xs.size();
    j["min_depth"] = xs.empty() ? 0 : dmin;
    j["max_depth"] = xs.empty() ? 0 : dmax;
    return j;
  };
  ordered_json j;
  j["kind"] = a.kind;
  j["seed"] = a.seed;
  j["out_dir"] = a.out_dir;
  j["train"] = stats(s.train);
  j["dev"] = stats(s.dev);
  j["test"] = stats(s.test);
  std::cout << j.dump() << "\n";
  return 0;
}

struct TrainArgs {
  std::string kind = "iid";
  std::string variant = "soft";
  int train = 5000, dev = 1000, test = 1000;
  TrainConfig cfg;
  std::string out_dir = ".";
};

int run_train(const TrainArgs& a) {
  SplitKind kind;
  if (a.kind == "iid") kind = SplitKind::IID;
  else if (a.kind == "len") kind = SplitKind::LEN;
  else throw std::invalid_argument("train: kind must be iid or len");
  std::filesystem::create_directories(a.out_dir);
  TrainConfig cfg = a.cfg;
  cfg.variant = variant_from_name(a.variant);
  const SplitFiles s = make_splits(kind, a.train, a.dev, a.test, cfg.seed);
  const std::vector<Example> train_ids = to_id_examples(s.train);
  const std::vector<Example> dev_ids = to_id_examples(s.dev);
  const std::vector<Example> test_ids = to_id_examples(s.test);

  TrainResult result = train(cfg, train_ids, dev_ids, /*progress=*/true);

  std::ostringstream metrics;
  for (const MetricsRow& row : result.history)
    metrics << metrics_row_to_json(row) << "\n";
  write_file(a.out_dir + "/metrics.jsonl", metrics.str());
  save_checkpoint(a.out_dir + "/checkpoint.json", result.model, cfg);

  const double test_em = evaluate(result.model, test_ids);
  double dev_em = 0.0;
  for (auto it = result.history.rbegin(); it != result.history.rend(); ++it)
    if (it->split == "dev") {
      dev_em = it->exact_match;
      break;
    }
  ordered_json j;
  j["variant"] = a.variant;
  j["kind"] = a.kind;
  j["seed"] = cfg.seed;
  j["epochs_run"] = result.history.empty()
                        ? 0
                        : result.history.back().epoch;
  j["dev_exact_match"] = dev_em;
  j["test_exact_match"] = test_em;
  j["checkpoint"] = a.out_dir + "/checkpoint.json";
  j["metrics"] = a.out_dir + "/metrics.jsonl";
  std::cout << j.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
};

int run_eval(const EvalArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const std::vector<ArithExample> rows = read_tsv(a.data);
  const std::vector<Example> ids = to_id_examples(rows);
  const double em = evaluate(ck.model, ids);
  ordered_json j;
  j["checkpoint"] = a.checkpoint;
  j["data"] = a.data;
  j["count"] = ids.size();
  j["exact_match"] = em;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference and learning over separable reorderings"};
  app.require_subcommand(1);

  MarginalArgs marg;
  auto* c_marg = app.add_subcommand(
      "marginal", "Expected permutation matrix of a rule chart (JSON)");
  c_marg->add_option("--in", marg.in, "Rule chart JSON file ('-' = stdin)");

  MapArgs map_args;
  auto* c_map = app.add_subcommand(
      "map", "Highest-probability derivation of a rule chart (JSON)");
  c_map->add_option("--in", map_args.in, "Rule chart JSON file ('-' = stdin)");

  SampleArgs samp;
  auto* c_samp = app.add_subcommand(
      "sample", "Draw derivations from a rule chart (one JSON per line)");
  c_samp->add_option("--in", samp.in, "Rule chart JSON file ('-' = stdin)");
  c_samp->add_option("--sampler", samp.sampler, "gumbel|ancestral")
      ->check(CLI::IsMember({"gumbel", "ancestral"}));
  c_samp->add_option("--count", samp.count, "Number of draws")
      ->check(CLI::PositiveNumber);
  c_samp->add_option("--temperature", samp.temperature,
                     "Relaxation temperature (gumbel)");
  c_samp->add_option("--seed", samp.seed, "Random seed");

  EnumerateArgs enu;
  auto* c_enum = app.add_subcommand(
      "enumerate", "Count derivation trees and distinct permutations");
  c_enum->add_option("--n", enu.n, "Sequence length (1..8)");

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand(
      "gradcheck",
      "Compare analytic gradients of one full forward against central "
      "finite differences");
  c_gc->add_option("--variant", gc.variant, "soft|hard|identity")
      ->check(CLI::IsMember({"soft", "hard", "identity"}));
  c_gc->add_option("--seed", gc.seed, "Random seed");
  c_gc->add_option("--coords", gc.coords, "Coordinates to probe");
  c_gc->add_option("--step", gc.h, "Finite-difference step");
  c_gc->add_option("--tolerance", gc.tolerance, "Max relative error");

  GenArithArgs gen;
  auto* c_gen = app.add_subcommand(
      "gen-arith", "Generate infix -> postfix datasets as TSV");
  c_gen->add_option("--kind", gen.kind, "iid|len")
      ->check(CLI::IsMember({"iid", "len"}));
  c_gen->add_option("--train", gen.train, "Training examples");
  c_gen->add_option("--dev", gen.dev, "Development examples");
  c_gen->add_option("--test", gen.test, "Test examples");
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--out-dir", gen.out_dir, "Output directory");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a reorder-then-tag model");
  c_tr->add_option("--kind", tr.kind, "iid|len")
      ->check(CLI::IsMember({"iid", "len"}));
  c_tr->add_option("--variant", tr.variant, "soft|hard|identity")
      ->check(CLI::IsMember({"soft", "hard", "identity"}));
  c_tr->add_option("--train", tr.train, "Training examples");
  c_tr->add_option("--dev", tr.dev, "Development examples");
  c_tr->add_option("--test", tr.test, "Test examples");
  c_tr->add_option("--epochs", tr.cfg.epochs, "Max epochs");
  c_tr->add_option("--batch-size", tr.cfg.batch_size, "Batch size");
  c_tr->add_option("--lr", tr.cfg.lr, "Learning rate");
  c_tr->add_option("--temperature", tr.cfg.temperature,
                   "Hard-variant relaxation temperature");
  c_tr->add_option("--lag-steps", tr.cfg.lag_steps,
                   "Steps during which the tagger may lag");
  c_tr->add_option("--lag-prob", tr.cfg.lag_prob,
                   "Probability of a scorer-only step while lagging");
  c_tr->add_option("--seed", tr.cfg.seed, "Random seed");
  c_tr->add_option("--out-dir", tr.out_dir, "Output directory");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a TSV");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")
      ->required();
  c_ev->add_option("--data", ev.data, "TSV dataset")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (c_marg->parsed()) return run_marginal(marg);
    if (c_map->parsed()) return run_map(map_args);
    if (c_samp->parsed()) return run_sample(samp);
    if (c_enum->parsed()) return run_enumerate(enu);
    if (c_gc->parsed()) return run_gradcheck(gc);
    if (c_gen->parsed()) return run_gen_arith(gen);
    if (c_tr->parsed()) return run_train(tr);
    if (c_ev->parsed()) return run_eval(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}
