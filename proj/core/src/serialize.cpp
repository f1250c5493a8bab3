#include "sepperm/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sepperm {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json parse_json(const std::string& text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad JSON: ") + e.what());
  }
}

// Readers tolerate nothing silently: a wrong type or missing key throws.
const ordered_json& field(const ordered_json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end())
    throw std::invalid_argument(std::string("missing key: ") + key);
  return *it;
}

ordered_json tree_node(const PermTree& t) {
  ordered_json j;
  if (t.is_leaf()) {
    j["leaf"] = t.begin();
    return j;
  }
  j["op"] = t.orientation() == Orientation::Straight ? "S" : "I";
  j["l"] = tree_node(*t.left());
  j["r"] = tree_node(*t.right());
  return j;
}

PermTreePtr tree_node_from(const ordered_json& j) {
  if (!j.is_object()) throw std::invalid_argument("tree: expected object");
  if (j.contains("leaf")) return PermTree::leaf(field(j, "leaf").get<int>());
  const std::string op = field(j, "op").get<std::string>();
  if (op != "S" && op != "I")
    throw std::invalid_argument("tree: op must be S or I");
  return PermTree::internal(
      op == "S" ? Orientation::Straight : Orientation::Inverted,
      tree_node_from(field(j, "l")), tree_node_from(field(j, "r")));
}

ordered_json perm_matrix_node(const PermMatrix& m) {
  ordered_json j;
  j["n"] = m.n();
  j["perm"] = m.slots();
  return j;
}

}  // namespace

std::string tree_to_json(const PermTree& t) { return tree_node(t).dump(); }

PermTreePtr tree_from_json(const std::string& text) {
  return tree_node_from(parse_json(text));
}

std::string perm_matrix_to_json(const PermMatrix& m) {
  return perm_matrix_node(m).dump();
}

PermMatrix perm_matrix_from_json(const std::string& text) {
  const ordered_json j = parse_json(text);
  const int n = field(j, "n").get<int>();
  std::vector<int> slots = field(j, "perm").get<std::vector<int>>();
  if (static_cast<int>(slots.size()) != n)
    throw std::invalid_argument("perm matrix: n does not match perm length");
  return PermMatrix(std::move(slots));
}

std::string rule_chart_to_json(const RuleWeightChart& w) {
  ordered_json j;
  j["n"] = w.n();
  ordered_json rules = ordered_json::array();
  for (const auto& s : w.layout().spans())
    for (int split = s.i + 1; split < s.k; ++split)
      for (Orientation o : {Orientation::Straight, Orientation::Inverted}) {
        ordered_json r;
        r["i"] = s.i;
        r["j"] = split;
        r["k"] = s.k;
        r["o"] = o == Orientation::Straight ? "S" : "I";
        r["logf"] = w.logf(s.i, split, s.k, o);
        rules.push_back(std::move(r));
      }
  j["rules"] = std::move(rules);
  return j.dump();
}

RuleWeightChart rule_chart_from_json(const std::string& text) {
  const ordered_json j = parse_json(text);
  const int n = field(j, "n").get<int>();
  RuleWeightChart w(n);
  for (const ordered_json& r : field(j, "rules")) {
    const int i = field(r, "i").get<int>();
    const int split = field(r, "j").get<int>();
    const int k = field(r, "k").get<int>();
    const std::string o = field(r, "o").get<std::string>();
    if (o != "S" && o != "I")
      throw std::invalid_argument("rule chart: o must be S or I");
    if (!(0 <= i && i < split && split < k && k <= n))
      throw std::invalid_argument("rule chart: bad rule anchor");
    w.set_logf(i, split, k,
               o == "S" ? Orientation::Straight : Orientation::Inverted,
               field(r, "logf").get<double>());
  }
  return w;
}

std::string expected_perm_to_json(const Mat& m) {
  ordered_json j;
  j["n"] = m.rows();
  ordered_json rows = ordered_json::array();
  for (int r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump();
}

Mat expected_perm_from_json(const std::string& text) {
  const ordered_json j = parse_json(text);
  const int n = field(j, "n").get<int>();
  const ordered_json& rows = field(j, "rows");
  if (static_cast<int>(rows.size()) != n)
    throw std::invalid_argument("expected perm: row count mismatch");
  Mat m(n, n);
  for (int r = 0; r < n; ++r) {
    if (static_cast<int>(rows[r].size()) != n)
      throw std::invalid_argument("expected perm: column count mismatch");
    for (int c = 0; c < n; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

std::string sampled_perm_to_json(const SampledPerm& s) {
  ordered_json j;
  j["tree"] = tree_node(*s.tree);
  j["matrix"] = perm_matrix_node(s.hard);
  j["seed"] = s.seed;
  j["temperature"] = s.temperature;
  return j.dump();
}

std::string metrics_row_to_json(const MetricsRow& row) {
  ordered_json j;
  j["epoch"] = row.epoch;
  j["split"] = row.split;
  j["loss"] = row.loss;
  j["exact_match"] = row.exact_match;
  return j.dump();
}

void write_tsv(const std::string& path,
               std::span<const ArithExample> examples) {
  std::ostringstream out;
  for (const ArithExample& ex : examples) {
    for (std::size_t i = 0; i < ex.infix.size(); ++i) {
      if (i) out << ' ';
      out << ex.infix[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < ex.postfix.size(); ++i) {
      if (i) out << ' ';
      out << ex.postfix[i];
    }
    out << '\n';
  }
  write_file(path, out.str());
}

namespace {

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<ArithExample> read_tsv(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<ArithExample> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected exactly one tab");
    ArithExample ex;
    ex.infix = split_tokens(line.substr(0, tab));
    ex.postfix = split_tokens(line.substr(tab + 1));
    if (ex.infix.empty() || ex.postfix.size() != ex.infix.size())
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": sides must be same nonempty length");
    ex.depth = expression_depth(ex.infix);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> to_id_examples(std::span<const ArithExample> examples) {
  std::vector<Example> out;
  out.reserve(examples.size());
  for (const ArithExample& ex : examples) {
    Example e;
    e.tokens.reserve(ex.infix.size());
    e.gold.reserve(ex.postfix.size());
    for (const std::string& t : ex.infix) e.tokens.push_back(ArithVocab::id(t));
    for (const std::string& t : ex.postfix) e.gold.push_back(ArithVocab::id(t));
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

constexpr const char* kCheckpointFormat = "sepperm-checkpoint";
constexpr int kCheckpointVersion = 1;

ordered_json config_node(const TrainConfig& c) {
  ordered_json j;
  j["variant"] = variant_name(c.variant);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["grad_clip"] = c.grad_clip;
  j["temperature"] = c.temperature;
  j["lag_steps"] = c.lag_steps;
  j["lag_prob"] = c.lag_prob;
  j["seed"] = c.seed;
  j["d_syn"] = c.d_syn;
  j["h_syn"] = c.h_syn;
  j["mlp_hidden"] = c.mlp_hidden;
  j["d_sem"] = c.d_sem;
  j["h_sem"] = c.h_sem;
  j["marginal_max_len"] = c.marginal_max_len;
  j["train_em_subsample"] = c.train_em_subsample;
  j["early_stop_dev_em"] = c.early_stop_dev_em;
  j["early_stop_patience"] = c.early_stop_patience;
  j["min_epochs"] = c.min_epochs;
  return j;
}

TrainConfig config_from_node(const ordered_json& j) {
  TrainConfig c;
  if (!j.is_object()) throw std::invalid_argument("config: expected object");
  for (const auto& [key, value] : j.items()) {
    if (key == "variant") c.variant = variant_from_name(value.get<std::string>());
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "grad_clip") c.grad_clip = value.get<double>();
    else if (key == "temperature") c.temperature = value.get<double>();
    else if (key == "lag_steps") c.lag_steps = value.get<int>();
    else if (key == "lag_prob") c.lag_prob = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "d_syn") c.d_syn = value.get<int>();
    else if (key == "h_syn") c.h_syn = value.get<int>();
    else if (key == "mlp_hidden") c.mlp_hidden = value.get<int>();
    else if (key == "d_sem") c.d_sem = value.get<int>();
    else if (key == "h_sem") c.h_sem = value.get<int>();
    else if (key == "marginal_max_len") c.marginal_max_len = value.get<int>();
    else if (key == "train_em_subsample")
      c.train_em_subsample = value.get<int>();
    else if (key == "early_stop_dev_em")
      c.early_stop_dev_em = value.get<double>();
    else if (key == "early_stop_patience")
      c.early_stop_patience = value.get<int>();
    else if (key == "min_epochs") c.min_epochs = value.get<int>();
    else throw std::invalid_argument("config: unknown key " + key);
  }
  return c;
}

}  // namespace

std::string checkpoint_to_json(const Model& m, const TrainConfig& config) {
  Model copy = m;  // tensors() needs mutable storage; serialize a copy
  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["variant"] = variant_name(copy.variant);
  j["vocab"] = copy.tagger.vocab;
  j["config"] = config_node(config);
  ordered_json tensors;
  std::vector<TensorRef> refs = copy.scorer.tensors();
  for (TensorRef& r : copy.tagger.tensors()) refs.push_back(std::move(r));
  for (const TensorRef& r : refs) {
    ordered_json t;
    t["rows"] = r.rows;
    t["cols"] = r.cols;
    t["data"] = *r.data;
    tensors[r.name] = std::move(t);
  }
  j["tensors"] = std::move(tensors);
  return j.dump();
}

void save_checkpoint(const std::string& path, const Model& m,
                     const TrainConfig& config) {
  write_file(path, checkpoint_to_json(m, config));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const ordered_json j = parse_json(read_file(path));
  if (field(j, "format").get<std::string>() != kCheckpointFormat)
    throw std::invalid_argument("checkpoint: unrecognized format tag");
  if (field(j, "version").get<int>() != kCheckpointVersion)
    throw std::invalid_argument("checkpoint: unsupported version");
  LoadedCheckpoint out;
  out.config = config_from_node(field(j, "config"));
  const int vocab = field(j, "vocab").get<int>();
  Rng scratch(0);
  out.model.variant = variant_from_name(field(j, "variant").get<std::string>());
  out.model.scorer = ScorerParams::init(vocab, out.config.d_syn,
                                        out.config.h_syn,
                                        out.config.mlp_hidden, scratch);
  out.model.tagger =
      TaggerParams::init(vocab, out.config.d_sem, out.config.h_sem, scratch);
  const ordered_json& tensors = field(j, "tensors");
  std::vector<TensorRef> refs = out.model.scorer.tensors();
  for (TensorRef& r : out.model.tagger.tensors()) refs.push_back(std::move(r));
  if (tensors.size() != refs.size())
    throw std::invalid_argument("checkpoint: tensor set mismatch");
  for (TensorRef& r : refs) {
    const ordered_json& t = field(tensors, r.name.c_str());
    if (field(t, "rows").get<int>() != r.rows ||
        field(t, "cols").get<int>() != r.cols)
      throw std::invalid_argument("checkpoint: shape mismatch for " + r.name);
    std::vector<double> data = field(t, "data").get<std::vector<double>>();
    if (data.size() != r.data->size())
      throw std::invalid_argument("checkpoint: size mismatch for " + r.name);
    *r.data = std::move(data);
  }
  return out;
}

std::string train_config_to_json(const TrainConfig& c) {
  return config_node(c).dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  return config_from_node(parse_json(text));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("read failed: " + path);
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace sepperm
