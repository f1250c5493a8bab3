#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepperm/arith.hpp"
#include "sepperm/chart.hpp"
#include "sepperm/inference.hpp"
#include "sepperm/model.hpp"
#include "sepperm/permutation.hpp"

namespace sepperm {

// JSON wire formats. All writers are deterministic (fixed key order, fixed
// float round-tripping); all readers throw std::invalid_argument with a
// description on malformed input.

// {"leaf": i} | {"op": "S"|"I", "l": <tree>, "r": <tree>}
std::string tree_to_json(const PermTree& t);
PermTreePtr tree_from_json(const std::string& text);

// {"n": n, "perm": [input index per output slot]}
std::string perm_matrix_to_json(const PermMatrix& m);
PermMatrix perm_matrix_from_json(const std::string& text);

// {"n": n, "rules": [{"i":..,"j":..,"k":..,"o":"S"|"I","logf":..}, ...]}
// Rules absent from the list keep logf = 0.
std::string rule_chart_to_json(const RuleWeightChart& w);
RuleWeightChart rule_chart_from_json(const std::string& text);

// {"n": n, "rows": [[...], ...]}  (row-major doubly-stochastic marginal)
std::string expected_perm_to_json(const Mat& m);
Mat expected_perm_from_json(const std::string& text);

// {"tree":.., "matrix":.., "seed":.., "temperature":..}
std::string sampled_perm_to_json(const SampledPerm& s);

// One "{epoch, split, loss, exact_match}" object (line-delimited when
// written to a metrics file).
std::string metrics_row_to_json(const MetricsRow& row);

// TSV datasets: per line, space-separated infix tokens, TAB, space-separated
// postfix tokens; UTF-8, LF line endings.
void write_tsv(const std::string& path, std::span<const ArithExample> examples);
std::vector<ArithExample> read_tsv(const std::string& path);

// Examples mapped through the closed arithmetic vocabulary.
std::vector<Example> to_id_examples(std::span<const ArithExample> examples);

// Versioned named-tensor checkpoint (JSON): format tag, version, variant,
// config, vocabulary, and every parameter tensor with its shape.
std::string checkpoint_to_json(const Model& m, const TrainConfig& config);
void save_checkpoint(const std::string& path, const Model& m,
                     const TrainConfig& config);
struct LoadedCheckpoint {
  Model model;
  TrainConfig config;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// TrainConfig <-> JSON (all fields optional on read; unknown keys rejected).
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace sepperm
