#include "cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <variant>

#include "xling/alignment.hpp"
#include "xling/error.hpp"
#include "xling/lens.hpp"
#include "xling/manifest.hpp"
#include "xling/mcq.hpp"
#include "xling/metrics.hpp"
#include "xling/parallel.hpp"
#include "xling/steer.hpp"
#include "xling/synthetic.hpp"

namespace xling::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- formatting

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double from_json(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

using Cell = std::variant<std::string, double, long long>;

Cell integer(long long v) { return Cell(std::in_place_type<long long>, v); }

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("table row width does not match its header");
    rows.push_back(std::move(row));
  }

  std::string csv() const {
    std::ostringstream os;
    auto field = [&](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) {
        os << s;
        return;
      }
      os << '"';
      for (char c : s) os << (c == '"' ? "\"\"" : std::string(1, c));
      os << '"';
    };
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << ',';
      field(columns[i]);
    }
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        if (auto s = std::get_if<std::string>(&row[i])) field(*s);
        else if (auto d = std::get_if<double>(&row[i])) os << fmt(*d);
        else os << std::get<long long>(row[i]);
      }
      os << '\n';
    }
    return os.str();
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& row : rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (auto s = std::get_if<std::string>(&row[i])) obj[columns[i]] = *s;
        else if (auto d = std::get_if<double>(&row[i])) obj[columns[i]] = num(*d);
        else obj[columns[i]] = std::get<long long>(row[i]);
      }
      arr.push_back(std::move(obj));
    }
    return arr;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Writes each table as <name>.csv and mirrors them all in <mirror>.json.
void write_tables(const fs::path& dir, const std::vector<std::pair<std::string, const Table*>>& tables,
                  const std::string& mirror, json extra = json::object()) {
  json doc = std::move(extra);
  json t = json::object();
  for (const auto& [name, table] : tables) {
    write_text(dir / (name + ".csv"), table->csv());
    t[name] = table->to_json();
  }
  doc["tables"] = std::move(t);
  write_text(dir / (mirror + ".json"), doc.dump(2) + "\n");
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------- options

std::string to_text(const std::string& v) { return v; }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(double v) { return fmt(v); }
template <typename T>
std::string to_text(const std::vector<T>& v) {
  std::vector<std::string> parts;
  for (const auto& x : v) parts.push_back(to_text(x));
  return join(parts, ",");
}

// Registers options on a subcommand and remembers how to print their resolved
// values, so a run can be reproduced from its canonical argument list.
class Recorder {
 public:
  Recorder(CLI::App* app, std::vector<std::string> verb) : app_(app), verb_(std::move(verb)) {}

  template <typename T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    auto* o = app_->add_option(name, var, help);
    if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>> ||
                  std::is_same_v<T, std::vector<std::string>>) {
      o->delimiter(',');
    }
    entries_.push_back({name, [&var]() -> std::optional<std::string> {
                          if constexpr (std::is_same_v<T, std::vector<int>> ||
                                        std::is_same_v<T, std::vector<double>> ||
                                        std::is_same_v<T, std::vector<std::string>>) {
                            if (var.empty()) return std::nullopt;
                          }
                          return to_text(var);
                        },
                        false, nullptr});
    return o;
  }

  CLI::Option* optional_int(const std::string& name, std::optional<int>& var, const std::string& help) {
    auto* o = app_->add_option(name, var, help);
    entries_.push_back({name, [&var]() -> std::optional<std::string> {
                          if (!var) return std::nullopt;
                          return std::to_string(*var);
                        },
                        false, nullptr});
    return o;
  }

  // Input paths are recorded absolute so a replay finds them from anywhere.
  CLI::Option* path(const std::string& name, fs::path& var, const std::string& help) {
    auto* o = app_->add_option(name, var, help);
    entries_.push_back({name, [&var]() -> std::optional<std::string> {
                          if (var.empty()) return std::nullopt;
                          return fs::absolute(var).lexically_normal().string();
                        },
                        false, nullptr});
    return o;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    auto* o = app_->add_flag(name, var, help);
    entries_.push_back({name, nullptr, true, &var});
    return o;
  }

  // The output directory and --force are not part of the recorded config.
  void output(fs::path& out, bool& force) {
    app_->add_option("--out", out, "Output directory (created atomically)")->required();
    app_->add_flag("--force", force, "Replace an existing output directory");
  }

  CLI::App* app() const { return app_; }
  const std::vector<std::string>& verb() const { return verb_; }

  std::vector<std::string> argv() const {
    std::vector<std::string> out = verb_;
    for (const auto& e : entries_) {
      if (e.is_flag) {
        if (*e.flag_var) out.push_back(e.name);
        continue;
      }
      if (auto v = e.text()) out.push_back(e.name + "=" + *v);
    }
    return out;
  }

  json config() const {
    json c = json::object();
    for (const auto& e : entries_) {
      const std::string key = e.name.substr(2);
      if (e.is_flag) c[key] = *e.flag_var;
      else if (auto v = e.text()) c[key] = *v;
      else c[key] = nullptr;
    }
    return c;
  }

 private:
  struct Entry {
    std::string name;
    std::function<std::optional<std::string>()> text;
    bool is_flag = false;
    bool* flag_var = nullptr;
  };
  CLI::App* app_;
  std::vector<std::string> verb_;
  std::vector<Entry> entries_;
};

// Everything is written into a hidden sibling and renamed into place at the
// end, so a failed run never leaves a half-written output directory.
class OutputDir {
 public:
  OutputDir(fs::path final_dir, bool force) : final_(fs::absolute(final_dir).lexically_normal()), force_(force) {
    if (final_.filename().empty()) final_ = final_.parent_path();
    if (fs::exists(final_) && !force_) {
      throw UsageError("output directory " + final_.string() + " already exists (use --force to replace it)");
    }
    fs::create_directories(final_.parent_path());
    std::random_device rd;
    tmp_ = final_.parent_path() / ("." + final_.filename().string() + ".tmp-" + std::to_string(rd()));
    fs::create_directories(tmp_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  const fs::path& path() const { return tmp_; }

  void commit() {
    if (fs::exists(final_)) {
      if (!force_) throw UsageError("output directory " + final_.string() + " appeared during the run");
      fs::remove_all(final_);
    }
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool force_;
  bool committed_ = false;
};

void write_run_record(const fs::path& dir, const Recorder& rec) {
  json doc;
  doc["tool"] = "xling";
  doc["format"] = 1;
  doc["verb"] = join(rec.verb(), " ");
  doc["argv"] = rec.argv();
  doc["config"] = rec.config();
  write_text(dir / "run.json", doc.dump(2) + "\n");
}

// ---------------------------------------------------------------- workspace

json template_to_json(const PromptTemplate& t) {
  json j;
  j["preamble"] = t.preamble;
  j["question_label"] = t.question_label;
  j["separator"] = t.separator;
  j["letters"] = t.letters;
  j["answer_label"] = t.answer_label;
  return j;
}

PromptTemplate template_from_json(const json& j) {
  PromptTemplate t;
  t.preamble = j.at("preamble").get<std::vector<std::string>>();
  t.question_label = j.at("question_label").get<std::string>();
  t.separator = j.at("separator").get<std::string>();
  t.letters = j.at("letters").get<std::vector<std::string>>();
  t.answer_label = j.at("answer_label").get<std::string>();
  t.validate();
  return t;
}

// A directory written by `synth`.
struct Workspace {
  fs::path dir;
  Model model;
  PromptTemplate tmpl;
  std::string pivot;
  std::vector<std::string> languages;  // pivot first
  std::string model_name;
  std::string dataset_name;

  std::vector<std::string> targets() const { return {languages.begin() + 1, languages.end()}; }

  McqDataset dataset(const std::string& language, const std::string& split) const {
    if (split != "data" && split != "sample") throw UsageError("--split must be 'data' or 'sample'");
    return load_dataset(dir / split / (language + ".jsonl"), language);
  }
};

Workspace load_workspace(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  Workspace ws;
  ws.dir = dir;
  const json world = read_json(dir / "world.json");
  try {
    ws.pivot = world.at("pivot").get<std::string>();
    ws.languages.push_back(ws.pivot);
    for (const auto& l : world.at("languages")) ws.languages.push_back(l.at("code").get<std::string>());
    ws.tmpl = template_from_json(world.at("template"));
    ws.model_name = world.value("model_name", "toy");
    ws.dataset_name = world.value("dataset_name", "synthetic");
  } catch (const json::exception& e) {
    throw DataError("malformed world.json: " + std::string(e.what()));
  }
  ws.model = load_model(dir / "model");
  return ws;
}

int middle_layer(int n_layers) { return std::max(1, n_layers / 2); }

// Explicit layers win; otherwise every stride-th layer counted down from the
// last, stopping before the embedding layer.
std::vector<int> resolve_layers(const std::vector<int>& explicit_layers, int stride, int n_layers) {
  std::vector<int> layers;
  if (!explicit_layers.empty()) {
    layers = explicit_layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i] < 0 || layers[i] > n_layers) {
        throw UsageError("layer " + std::to_string(layers[i]) + " outside [0, " + std::to_string(n_layers) + "]");
      }
      if (i && layers[i] <= layers[i - 1]) throw UsageError("--layers must be strictly increasing");
    }
    return layers;
  }
  if (stride < 1) throw UsageError("--stride must be at least 1");
  for (int l = n_layers; l >= 1; l -= stride) layers.push_back(l);
  std::reverse(layers.begin(), layers.end());
  return layers;
}

fs::path vector_file(const fs::path& dir, const std::string& language, int layer) {
  return dir / (language + "_layer" + std::to_string(layer) + ".xlt");
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::uint64_t seed = 0;
  std::vector<std::string> languages{"l1:0.05", "l2:0.1", "l3:0.2", "l4:0.4", "l5:0.8"};
  std::string pivot = "en";
  int items = 50;
  int choices = 4;
  int sample = 50;
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 64;
  int content_words = 48;
  double init_std = 0.25;
  std::vector<int> layers;
  int stride = 4;

  void bind(Recorder& r) {
    r.option("--seed", seed, "Master seed for the model, languages, and corpora")->required();
    r.option("--languages", languages, "Comma-separated code:sigma specs for the non-pivot languages");
    r.option("--pivot", pivot, "Pivot language code");
    r.option("--items", items, "Evaluation questions per language");
    r.option("--choices", choices, "Answer choices per question");
    r.option("--sample", sample, "Held-out sample size for alignment and steering extraction");
    r.option("--n-layers", n_layers, "Transformer blocks");
    r.option("--d-model", d_model, "Residual width");
    r.option("--n-heads", n_heads, "Attention heads");
    r.option("--d-ff", d_ff, "MLP width");
    r.option("--max-seq-len", max_seq_len, "Maximum sequence length");
    r.option("--content-words", content_words, "Content vocabulary size of the base language");
    r.option("--init-std", init_std, "Standard deviation of projection weights");
    r.option("--layers", layers, "Layers whose states are exported (overrides --stride)");
    r.option("--stride", stride, "Export every stride-th layer counted down from the last");
  }
};

std::vector<SyntheticLanguageSpec> parse_languages(const std::vector<std::string>& specs, std::uint64_t seed) {
  std::vector<SyntheticLanguageSpec> out;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos || colon == 0) throw UsageError("language spec '" + s + "' is not code:sigma");
    SyntheticLanguageSpec spec;
    spec.code = s.substr(0, colon);
    for (char c : spec.code) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
        throw UsageError("language code '" + spec.code + "' may only hold letters, digits, '_' and '-'");
      }
    }
    try {
      std::size_t used = 0;
      spec.embedding_noise_sigma = std::stod(s.substr(colon + 1), &used);
      if (used != s.size() - colon - 1) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      throw UsageError("language spec '" + s + "' has a malformed sigma");
    }
    spec.seed = seed;
    out.push_back(spec);
  }
  return out;
}

void cmd_synth(const SynthOptions& o, const fs::path& dir, std::ostream& out) {
  WorldConfig wc;
  wc.model.n_layers = o.n_layers;
  wc.model.d_model = o.d_model;
  wc.model.n_heads = o.n_heads;
  wc.model.d_ff = o.d_ff;
  wc.model.max_seq_len = o.max_seq_len;
  wc.model.seed = o.seed;
  wc.model.init_std = static_cast<float>(o.init_std);
  wc.n_content_words = o.content_words;
  wc.pivot = o.pivot;
  wc.languages = parse_languages(o.languages, o.seed);
  if (o.sample < 2) throw UsageError("--sample must be at least 2");
  const auto layers = resolve_layers(o.layers, o.stride, o.n_layers);

  const SyntheticWorld world = build_world(wc);
  const auto eval = build_parallel_corpus(world, o.items, o.choices, o.seed, "q");
  const auto sample = build_parallel_corpus(world, o.sample, o.choices, o.seed, "s");

  save_model(world.model, dir / "model");
  save_bundle(export_bundle(world.model), dir / "bundle");
  fs::create_directories(dir / "data");
  fs::create_directories(dir / "sample");
  for (const auto& ds : eval) save_dataset(ds, dir / "data" / (ds.language + ".jsonl"));
  for (const auto& ds : sample) save_dataset(ds, dir / "sample" / (ds.language + ".jsonl"));

  ExperimentManifest m;
  m.languages = world.languages();
  m.layer_indices = layers;
  m.n_examples = o.sample;
  m.d_model = o.d_model;
  m.dataset_path = "sample";
  m.model_bundle_path = fs::path("bundle");
  m.base_dir = dir;
  const auto max_len = static_cast<std::size_t>(world.model.config.max_seq_len);
  for (const auto& ds : sample) {
    std::vector<std::vector<std::vector<float>>> states(ds.items.size());
    CaptureRequest req;
    req.layers = layers;
    req.logits = Positions::last;
    parallel_for(ds.items.size(), [&](std::size_t i) {
      const auto r = forward(world.model, build_prompt(ds.items[i], world.tmpl, world.model.vocab, max_len).tokens, req);
      for (int l : layers) states[i].push_back(r.last_state(l));
    });
    for (std::size_t k = 0; k < layers.size(); ++k) {
      TensorF32 t = TensorF32::matrix(ds.items.size(), static_cast<std::size_t>(o.d_model));
      for (std::size_t i = 0; i < ds.items.size(); ++i) std::copy(states[i][k].begin(), states[i][k].end(), t.row(i).begin());
      const fs::path rel = fs::path("states") / ds.language / ("layer" + std::to_string(layers[k]) + ".xlt");
      fs::create_directories((dir / rel).parent_path());
      save_tensor(t, dir / rel);
      m.tensor_paths[{ds.language, layers[k]}] = rel;
    }
  }
  save_manifest(m, dir / "manifest.json");

  json world_doc;
  world_doc["model_name"] = "toy";
  world_doc["dataset_name"] = "synthetic";
  world_doc["pivot"] = o.pivot;
  json langs = json::array();
  for (const auto& spec : wc.languages) langs.push_back({{"code", spec.code}, {"sigma", spec.embedding_noise_sigma}});
  world_doc["languages"] = langs;
  world_doc["items"] = o.items;
  world_doc["choices"] = o.choices;
  world_doc["sample"] = o.sample;
  world_doc["question_length"] = world.shape.question_length;
  world_doc["choice_length"] = world.shape.choice_length;
  world_doc["probed_layers"] = layers;
  world_doc["template"] = template_to_json(world.tmpl);
  write_text(dir / "world.json", world_doc.dump(2) + "\n");

  out << "synth: " << m.languages.size() << " languages x " << o.items << " items, " << o.sample
      << " sample items, layers " << to_text(layers) << "\n";
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  fs::path data;
  std::string split = "data";
  fs::path vectors;
  double gamma = 1.0;
  std::optional<int> layer;

  void bind(Recorder& r) {
    r.path("--data", data, "Directory written by synth")->required();
    r.option("--split", split, "Which corpus to score: data or sample");
    r.path("--vectors", vectors, "Steer non-pivot languages with vectors from this directory");
    r.option("--gamma", gamma, "Steering multiplier used with --vectors");
    r.optional_int("--layer", layer, "Steering layer used with --vectors");
  }
};

void cmd_eval(const EvalOptions& o, const fs::path& dir, std::ostream& out) {
  const Workspace ws = load_workspace(o.data);
  if (!o.vectors.empty() && !o.layer) throw UsageError("--vectors requires --layer");

  std::vector<LanguageEvaluation> evals;
  for (const auto& lang : ws.languages) {
    const McqDataset ds = ws.dataset(lang, o.split);
    if (ds.items.empty()) throw DataError("dataset " + lang + " is empty");
    std::vector<Injection> inj;
    if (!o.vectors.empty() && lang != ws.pivot) {
      const SteeringVector sv = load_steering(vector_file(o.vectors, lang, *o.layer));
      inj = steering_injections(sv, {o.gamma, *o.layer});
    }
    evals.push_back(evaluate_dataset(ws.model, ds, ws.tmpl, inj));
  }
  for (std::size_t i = 1; i < evals.size(); ++i) {
    if (evals[i].rank_vector().item_ids != evals[0].rank_vector().item_ids) {
      throw DataError("dataset " + evals[i].language + " is not parallel to the pivot");
    }
  }

  Table accuracy{{"model", "dataset", "language", "accuracy"}, {}};
  Table predictions{{"language", "item", "gold", "predicted", "probs"}, {}};
  std::vector<double> accs;
  for (const auto& e : evals) {
    accuracy.add({ws.model_name, ws.dataset_name, e.language, e.accuracy()});
    accs.push_back(e.accuracy());
    for (std::size_t i = 0; i < e.dists.size(); ++i) {
      std::vector<std::string> p;
      for (double v : e.dists[i].probs) p.push_back(fmt(v));
      predictions.add({e.language, e.dists[i].item_id, integer(e.gold[i]), integer(predicted_index(e.dists[i])),
                       join(p, ";")});
    }
  }

  const PairwiseMatrices pm = pairwise_matrices(evals);
  const std::size_t L = pm.languages.size();
  Table pairs{{"l1", "l2", "consistency", "tr_plus_l1_to_l2", "tr_plus_l2_to_l1", "tr_minus_l1_to_l2",
               "tr_minus_l2_to_l1"},
              {}};
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = i + 1; j < L; ++j) {
      pairs.add({pm.languages[i], pm.languages[j], pm.consistency[i][j], pm.tr_plus[i][j], pm.tr_plus[j][i],
                 pm.tr_minus[i][j], pm.tr_minus[j][i]});
    }
  }
  auto matrix_table = [&](const std::vector<std::vector<double>>& mat) {
    Table t{{"from"}, {}};
    for (const auto& l : pm.languages) t.columns.push_back(l);
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<Cell> row{pm.languages[i]};
      for (std::size_t j = 0; j < L; ++j) row.push_back(i == j ? std::numeric_limits<double>::quiet_NaN() : mat[i][j]);
      t.add(std::move(row));
    }
    return t;
  };
  const Table mc = matrix_table(pm.consistency);
  const Table mp = matrix_table(pm.tr_plus);
  const Table mn = matrix_table(pm.tr_minus);

  const ExpectedMetrics em = expected_metrics(pm);
  Table summary{{"metric", "value", "n", "excluded"}, {}};
  summary.add({"accuracy_mean", mean(accs), integer(static_cast<long long>(accs.size())), integer(0)});
  summary.add({"accuracy_std", sample_stddev(accs), integer(static_cast<long long>(accs.size())), integer(0)});
  const auto n_pairs = static_cast<long long>(em.n_pairs);
  summary.add({"consistency", em.consistency, integer(n_pairs), integer(static_cast<long long>(em.excluded_consistency))});
  summary.add({"tr_plus", em.tr_plus, integer(n_pairs), integer(static_cast<long long>(em.excluded_tr_plus))});
  summary.add({"tr_minus", em.tr_minus, integer(n_pairs), integer(static_cast<long long>(em.excluded_tr_minus))});

  json extra;
  extra["model"] = ws.model_name;
  extra["dataset"] = ws.dataset_name;
  extra["languages"] = ws.languages;
  extra["split"] = o.split;
  write_tables(dir,
               {{"accuracy", &accuracy},
                {"predictions", &predictions},
                {"pairs", &pairs},
                {"matrix_consistency", &mc},
                {"matrix_tr_plus", &mp},
                {"matrix_tr_minus", &mn},
                {"summary", &summary}},
               "eval", extra);

  out << "eval: accuracy " << fmt(mean(accs)) << " +- " << fmt(sample_stddev(accs)) << ", E[cons] "
      << fmt(em.consistency) << ", E[tr+] " << fmt(em.tr_plus) << ", E[tr-] " << fmt(em.tr_minus) << "\n";
  const std::size_t excluded = em.excluded_consistency + em.excluded_tr_plus + em.excluded_tr_minus;
  if (excluded) out << "eval: " << excluded << " undefined pair values excluded\n";
}

// ---------------------------------------------------------------- align

struct AlignOptions {
  fs::path manifest;
  std::vector<std::string> metrics{"cka"};
  fs::path eval;

  void bind(Recorder& r) {
    r.path("--manifest", manifest, "Experiment manifest of exported hidden states")->required();
    r.option("--metric", metrics, "Comma-separated: cka, cka_uncentered, cosine, cosine_norm");
    r.path("--eval", eval, "Eval output directory to correlate similarity against");
  }
};

struct EvalSummary {
  std::map<std::string, double> accuracy, consistency, tr_plus_in;
};

EvalSummary read_eval(const fs::path& dir) {
  const json doc = read_json(dir / "eval.json");
  EvalSummary s;
  try {
    for (const auto& row : doc.at("tables").at("accuracy")) {
      s.accuracy[row.at("language").get<std::string>()] = from_json(row.at("accuracy"));
    }
    std::map<std::string, std::vector<double>> cons, trin;
    for (const auto& row : doc.at("tables").at("pairs")) {
      const auto a = row.at("l1").get<std::string>();
      const auto b = row.at("l2").get<std::string>();
      const double c = from_json(row.at("consistency"));
      if (!std::isnan(c)) {
        cons[a].push_back(c);
        cons[b].push_back(c);
      }
      const double ab = from_json(row.at("tr_plus_l1_to_l2"));
      const double ba = from_json(row.at("tr_plus_l2_to_l1"));
      if (!std::isnan(ab)) trin[b].push_back(ab);
      if (!std::isnan(ba)) trin[a].push_back(ba);
    }
    for (const auto& [lang, acc] : s.accuracy) {
      s.consistency[lang] = cons[lang].empty() ? std::numeric_limits<double>::quiet_NaN() : mean(cons[lang]);
      s.tr_plus_in[lang] = trin[lang].empty() ? std::numeric_limits<double>::quiet_NaN() : mean(trin[lang]);
    }
  } catch (const json::exception& e) {
    throw DataError("malformed eval.json in " + dir.string() + ": " + e.what());
  }
  return s;
}

void cmd_align(const AlignOptions& o, const fs::path& dir, std::ostream& out) {
  if (o.metrics.empty()) throw UsageError("--metric needs at least one metric");
  std::vector<SimilarityMetric> metrics;
  for (const auto& m : o.metrics) metrics.push_back(parse_similarity_metric(m));

  const ExperimentManifest manifest = load_manifest(o.manifest);
  const auto violations = validate_manifest(manifest);
  if (!violations.empty()) {
    throw DataError("invalid manifest " + o.manifest.string() + ":\n  " + join(violations, "\n  "));
  }
  const RepresentationSet reps = load_representations(manifest);

  std::optional<EvalSummary> ev;
  if (!o.eval.empty()) {
    ev = read_eval(o.eval);
    for (const auto& lang : manifest.languages) {
      if (!ev->accuracy.count(lang)) throw DataError("language " + lang + " is missing from the eval results");
    }
  }

  Table cells{{"metric", "layer", "l1", "l2", "value", "flag"}, {}};
  Table curve{{"metric", "layer", "mean", "stderr", "n_pairs"}, {}};
  Table by_lang{{"metric", "language", "mean_similarity"}, {}};
  Table corr{{"metric", "target", "r", "p", "n", "stars", "status"}, {}};
  for (SimilarityMetric metric : metrics) {
    const LayerSimilarityCurve sweep = layer_sweep(reps, metric);
    const std::string name = to_string(metric);
    for (const auto& c : sweep.cells) cells.add({name, integer(c.layer), c.l1, c.l2, c.value, c.flag});
    for (const auto& p : sweep.curve) {
      curve.add({name, integer(p.layer), p.mean, p.stderr_, integer(static_cast<long long>(p.n_pairs))});
    }
    const auto plm = sweep.per_language_mean();
    for (const auto& lang : manifest.languages) by_lang.add({name, lang, plm.at(lang)});

    if (!ev) continue;
    const std::pair<const char*, const std::map<std::string, double>*> targets[] = {
        {"accuracy", &ev->accuracy}, {"consistency", &ev->consistency}, {"tr_plus_in", &ev->tr_plus_in}};
    for (const auto& [target, values] : targets) {
      std::vector<double> x, y;
      for (const auto& lang : manifest.languages) {
        const double a = plm.at(lang);
        const double b = values->at(lang);
        if (std::isnan(a) || std::isnan(b)) continue;
        x.push_back(a);
        y.push_back(b);
      }
      const auto n = static_cast<long long>(x.size());
      const double nan = std::numeric_limits<double>::quiet_NaN();
      if (x.size() < 3) {
        corr.add({name, target, nan, nan, integer(n), "", "undefined (fewer than 3 languages)"});
        continue;
      }
      const PearsonResult pr = pearson(x, y);
      if (!pr.defined()) {
        corr.add({name, target, nan, nan, integer(n), "", "undefined (zero variance)"});
      } else {
        corr.add({name, target, pr.r, pr.p, integer(n), significance_stars(pr.p), "ok"});
      }
    }
  }

  std::vector<std::pair<std::string, const Table*>> tables{
      {"similarity_cells", &cells}, {"similarity_curve", &curve}, {"similarity_by_language", &by_lang}};
  if (ev) tables.push_back({"correlations", &corr});
  json extra;
  extra["languages"] = manifest.languages;
  extra["layers"] = manifest.layer_indices;
  extra["metrics"] = o.metrics;
  write_tables(dir, tables, "align", extra);

  for (const auto& row : curve.rows) {
    out << "align: " << std::get<std::string>(row[0]) << " layer " << std::get<long long>(row[1]) << " mean "
        << fmt(std::get<double>(row[2])) << "\n";
  }
}

// ---------------------------------------------------------------- lens

struct LensOptions {
  fs::path data;
  std::string split = "data";
  std::vector<int> layers;
  int stride = 4;
  bool per_choice = false;

  void bind(Recorder& r) {
    r.path("--data", data, "Directory written by synth")->required();
    r.option("--split", split, "Which corpus to probe: data or sample");
    r.option("--layers", layers, "Layers to probe (overrides --stride)");
    r.option("--stride", stride, "Probe every stride-th layer counted down from the last");
    r.flag("--per-choice", per_choice, "Also report the per-choice log-ratio variant");
  }
};

void cmd_lens(const LensOptions& o, const fs::path& dir, std::ostream& out) {
  const Workspace ws = load_workspace(o.data);
  const auto layers = resolve_layers(o.layers, o.stride, ws.model.n_layers());
  if (ws.targets().empty()) throw DataError("lens needs at least one non-pivot language");
  const McqDataset pivot = ws.dataset(ws.pivot, o.split);
  std::map<std::string, int> gold;
  for (const auto& item : pivot.items) gold[item.id] = item.gold;

  std::vector<LatentChoiceScore> scores;
  for (const auto& lang : ws.targets()) {
    auto s = latent_dataset_scores(ws.model, ws.dataset(lang, o.split), pivot, ws.tmpl, layers);
    scores.insert(scores.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }

  Table score_table{{"language", "item", "layer", "choice_lang", "j", "score"}, {}};
  for (const auto& s : scores) {
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      score_table.add({s.language, s.item_id, integer(s.layer), to_string(s.text), integer(static_cast<long long>(j)),
                       s.scores[j]});
    }
  }

  std::vector<LatentCurve> curves{log_ratio_curve(scores)};
  if (o.per_choice) curves.push_back(log_ratio_curve(scores, true));
  curves.push_back(latent_accuracy_curve(scores, gold, ChoiceText::native));
  curves.push_back(latent_accuracy_curve(scores, gold, ChoiceText::pivot));

  Table curve_table{{"layer", "kind", "mean", "stderr"}, {}};
  Table by_lang{{"kind", "layer", "language", "value"}, {}};
  json diagnostics = json::object();
  for (const auto& c : curves) {
    for (const auto& p : c.points) curve_table.add({integer(p.layer), c.kind, p.mean, p.stderr_});
    for (const auto& [layer, langs] : c.per_language) {
      for (const auto& [lang, v] : langs) by_lang.add({c.kind, integer(layer), lang, v});
    }
    diagnostics[c.kind] = {{"excluded", c.excluded}, {"messages", c.diagnostics}};
  }
  const double chance = curves.back().chance;
  for (int layer : layers) curve_table.add({integer(layer), "chance", chance, 0.0});

  json extra;
  extra["languages"] = ws.targets();
  extra["pivot"] = ws.pivot;
  extra["layers"] = layers;
  extra["weighting"] = "languages weighted equally";
  extra["diagnostics"] = diagnostics;
  write_tables(dir, {{"lens_scores", &score_table}, {"lens_curve", &curve_table}, {"lens_by_language", &by_lang}},
               "lens", extra);
  out << "lens: " << scores.size() << " score records over layers " << to_text(layers) << "\n";
}

// ---------------------------------------------------------------- steer

struct SteerExtractOptions {
  fs::path data;
  std::vector<int> layers;

  void bind(Recorder& r) {
    r.path("--data", data, "Directory written by synth")->required();
    r.option("--layers", layers, "Extraction layers (default: the middle layer)");
  }
};

Table vector_table() { return Table{{"language", "layer", "n_pairs", "norm"}, {}}; }

void cmd_steer_extract(const SteerExtractOptions& o, const fs::path& dir, std::ostream& out) {
  const Workspace ws = load_workspace(o.data);
  const auto layers = o.layers.empty() ? std::vector<int>{middle_layer(ws.model.n_layers())}
                                       : resolve_layers(o.layers, 1, ws.model.n_layers());
  const McqDataset pivot = ws.dataset(ws.pivot, "sample");
  Table vt = vector_table();
  for (const auto& lang : ws.targets()) {
    const McqDataset target = ws.dataset(lang, "sample");
    for (int layer : layers) {
      SteeringVector sv = extract_steering(ws.model, pivot, target, ws.tmpl, layer);
      sv.dataset = ws.dataset_name;
      sv.seed = ws.model.config.seed;
      save_steering(sv, vector_file(dir, lang, layer));
      vt.add({lang, integer(layer), integer(static_cast<long long>(sv.n_pairs)), sv.norm()});
    }
  }
  json extra;
  extra["layers"] = layers;
  write_tables(dir, {{"vectors", &vt}}, "steer_extract", extra);
  out << "steer extract: " << vt.rows.size() << " vectors\n";
}

struct SteerEvalOptions {
  fs::path data;
  fs::path vectors;
  std::optional<int> layer;
  std::vector<double> gammas = default_gamma_grid();
  std::string split = "data";
  bool layer_sweep = false;
  std::vector<int> layers;
  int stride = 4;
  double gamma_pos = 2.0;
  double gamma_neg = -2.0;

  void bind(Recorder& r) {
    r.path("--data", data, "Directory written by synth")->required();
    r.path("--vectors", vectors, "Directory written by steer extract (default: extract from the sample split)");
    r.optional_int("--layer", layer, "Steering layer for the gamma sweep (default: the middle layer)");
    r.option("--gamma", gammas, "Comma-separated, strictly increasing multipliers");
    r.option("--split", split, "Which corpus to evaluate: data or sample");
    r.flag("--layer-sweep", layer_sweep, "Also steer each probed layer at --gamma-pos and --gamma-neg");
    r.option("--layers", layers, "Layers for the layer sweep (overrides --stride)");
    r.option("--stride", stride, "Layer-sweep stride counted down from the last layer");
    r.option("--gamma-pos", gamma_pos, "Positive multiplier of the layer sweep");
    r.option("--gamma-neg", gamma_neg, "Negative multiplier of the layer sweep");
  }
};

void cmd_steer_eval(const SteerEvalOptions& o, const fs::path& dir, std::ostream& out) {
  const Workspace ws = load_workspace(o.data);
  const int layer = o.layer.value_or(middle_layer(ws.model.n_layers()));
  if (layer < 0 || layer > ws.model.n_layers()) throw UsageError("--layer outside the model range");
  const McqDataset pivot = ws.dataset(ws.pivot, o.split);
  const LanguageEvaluation pivot_eval = evaluate_dataset(ws.model, pivot, ws.tmpl);
  const McqDataset sample_pivot = ws.dataset(ws.pivot, "sample");

  Table sweep{{"axis", "value", "language", "accuracy", "consistency_pivot", "tr_plus_from_pivot"}, {}};
  Table vt = vector_table();
  auto add_points = [&](const SweepResult& r) {
    for (const auto& p : r.points) {
      sweep.add({p.axis, p.value, p.language, p.accuracy, p.consistency_pivot, p.tr_plus_from_pivot});
    }
  };
  fs::create_directories(dir / "vectors");
  for (const auto& lang : ws.targets()) {
    const McqDataset target = ws.dataset(lang, o.split);
    const McqDataset sample_target = ws.dataset(lang, "sample");
    SteeringVector sv;
    if (!o.vectors.empty()) {
      sv = load_steering(vector_file(o.vectors, lang, layer));
    } else {
      sv = extract_steering(ws.model, sample_pivot, sample_target, ws.tmpl, layer);
      sv.dataset = ws.dataset_name;
      sv.seed = ws.model.config.seed;
    }
    save_steering(sv, vector_file(dir / "vectors", lang, layer));
    vt.add({lang, integer(layer), integer(static_cast<long long>(sv.n_pairs)), sv.norm()});
    add_points(gamma_sweep(ws.model, pivot_eval, target, sv, o.gammas, ws.tmpl));
    if (o.layer_sweep) {
      const auto layers = resolve_layers(o.layers, o.stride, ws.model.n_layers());
      add_points(layer_sweep_steering(ws.model, pivot_eval, target, sample_pivot, sample_target, layers, o.gamma_pos,
                                      o.gamma_neg, ws.tmpl));
    }
  }
  json extra;
  extra["pivot"] = ws.pivot;
  extra["layer"] = layer;
  extra["pivot_accuracy"] = num(pivot_eval.accuracy());
  write_tables(dir, {{"sweep", &sweep}, {"vectors", &vt}}, "steer", extra);
  out << "steer eval: " << sweep.rows.size() << " sweep rows at layer " << layer << "\n";
}

// ---------------------------------------------------------------- report

struct ReportOptions {
  fs::path eval;
  fs::path align;
  fs::path lens;
  fs::path steer;

  void bind(Recorder& r) {
    r.path("--eval", eval, "Eval output directory")->required();
    r.path("--align", align, "Align output directory");
    r.path("--lens", lens, "Lens output directory");
    r.path("--steer", steer, "Steer eval output directory");
  }
};

std::string pm_text(double v) {
  if (std::isnan(v)) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void cmd_report(const ReportOptions& o, const fs::path& dir, std::ostream& out) {
  const json ev = read_json(o.eval / "eval.json");
  std::map<std::string, json> summary;
  for (const auto& row : ev.at("tables").at("summary")) summary[row.at("metric").get<std::string>()] = row;
  auto value = [&](const std::string& k) { return from_json(summary.at(k).at("value")); };
  auto excluded = [&](const std::string& k) { return summary.at(k).at("excluded").get<long long>(); };

  Table t1{{"model", "dataset", "n_languages", "accuracy_mean", "accuracy_std", "consistency", "tr_plus", "tr_minus",
            "excluded_consistency", "excluded_tr_plus", "excluded_tr_minus"},
           {}};
  t1.add({ev.at("model").get<std::string>(), ev.at("dataset").get<std::string>(),
          integer(static_cast<long long>(ev.at("languages").size())), value("accuracy_mean"), value("accuracy_std"),
          value("consistency"), value("tr_plus"), value("tr_minus"), integer(excluded("consistency")),
          integer(excluded("tr_plus")), integer(excluded("tr_minus"))});

  std::ostringstream md;
  md << "# Report\n\n## Consistency and transfer\n\n";
  md << "| model | dataset | accuracy | E[cons] | E[tr+] | E[tr-] |\n|---|---|---|---|---|---|\n";
  md << "| " << ev.at("model").get<std::string>() << " | " << ev.at("dataset").get<std::string>() << " | "
     << pm_text(value("accuracy_mean")) << " +- " << pm_text(value("accuracy_std")) << " | "
     << pm_text(value("consistency")) << " | " << pm_text(value("tr_plus")) << " | " << pm_text(value("tr_minus"))
     << " |\n";

  std::vector<std::pair<std::string, const Table*>> tables{{"table1", &t1}};
  Table t2{{"metric", "target", "r", "p", "stars", "status"}, {}};
  if (!o.align.empty()) {
    const json al = read_json(o.align / "align.json");
    md << "\n## Similarity vs. behaviour (Pearson)\n\n| metric | target | r | p |\n|---|---|---|---|\n";
    if (al.at("tables").contains("correlations")) {
      for (const auto& row : al.at("tables").at("correlations")) {
        const double r = from_json(row.at("r"));
        const double p = from_json(row.at("p"));
        t2.add({row.at("metric").get<std::string>(), row.at("target").get<std::string>(), r, p,
                row.at("stars").get<std::string>(), row.at("status").get<std::string>()});
        md << "| " << row.at("metric").get<std::string>() << " | " << row.at("target").get<std::string>() << " | "
           << pm_text(r) << row.at("stars").get<std::string>() << " | " << pm_text(p) << " |\n";
      }
    }
    md << "\n## Similarity by layer\n\n| metric | layer | mean | stderr |\n|---|---|---|---|\n";
    for (const auto& row : al.at("tables").at("similarity_curve")) {
      md << "| " << row.at("metric").get<std::string>() << " | " << row.at("layer").get<long long>() << " | "
         << pm_text(from_json(row.at("mean"))) << " | " << pm_text(from_json(row.at("stderr"))) << " |\n";
    }
    tables.push_back({"table2", &t2});
  }
  if (!o.lens.empty()) {
    const json ln = read_json(o.lens / "lens.json");
    md << "\n## Latent probing\n\n| layer | kind | mean | stderr |\n|---|---|---|---|\n";
    for (const auto& row : ln.at("tables").at("lens_curve")) {
      md << "| " << row.at("layer").get<long long>() << " | " << row.at("kind").get<std::string>() << " | "
         << pm_text(from_json(row.at("mean"))) << " | " << pm_text(from_json(row.at("stderr"))) << " |\n";
    }
  }
  if (!o.steer.empty()) {
    const json st = read_json(o.steer / "steer.json");
    md << "\n## Steering\n\n| axis | value | language | accuracy | consistency | tr+ |\n|---|---|---|---|---|---|\n";
    for (const auto& row : st.at("tables").at("sweep")) {
      md << "| " << row.at("axis").get<std::string>() << " | " << fmt(from_json(row.at("value"))) << " | "
         << row.at("language").get<std::string>() << " | " << pm_text(from_json(row.at("accuracy"))) << " | "
         << pm_text(from_json(row.at("consistency_pivot"))) << " | "
         << pm_text(from_json(row.at("tr_plus_from_pivot"))) << " |\n";
    }
  }
  write_text(dir / "report.md", md.str());
  write_tables(dir, tables, "report");
  out << "report: accuracy " << pm_text(value("accuracy_mean")) << " +- " << pm_text(value("accuracy_std"))
      << ", E[cons] " << pm_text(value("consistency")) << "\n";
}

// ---------------------------------------------------------------- dispatch

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

int replay(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Replay a run from its run.json"};
  fs::path record, target;
  bool force = false;
  app.add_option("--replay", record, "run.json of an earlier run")->required();
  app.add_option("--out", target, "Output directory for the replayed run")->required();
  app.add_flag("--force", force, "Replace an existing output directory");
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  std::vector<std::string> argv;
  const int rc = guarded(err, [&] {
    const json doc = read_json(record);
    try {
      argv = doc.at("argv").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw DataError("malformed run record " + record.string() + ": " + e.what());
    }
    if (argv.empty()) throw DataError("run record " + record.string() + " has an empty argv");
  });
  if (rc != kOk) return rc;
  argv.push_back("--out=" + target.string());
  if (force) argv.push_back("--force");
  return run(argv, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && (args[0] == "--replay" || args[0].rfind("--replay=", 0) == 0)) return replay(args, out, err);

  CLI::App app{"xling: cross-lingual consistency, alignment, latent probing, and steering"};
  app.require_subcommand(1);
  fs::path out_dir;
  bool force = false;

  SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "Build a toy model, synthetic languages, corpora, and exported states");
  Recorder r_synth(s_synth, {"synth"});
  synth.bind(r_synth);
  r_synth.output(out_dir, force);

  EvalOptions eval;
  auto* s_eval = app.add_subcommand("eval", "Accuracy, consistency, and transfer report");
  Recorder r_eval(s_eval, {"eval"});
  eval.bind(r_eval);
  r_eval.output(out_dir, force);

  AlignOptions align;
  auto* s_align = app.add_subcommand("align", "Layer-wise representation similarity and correlations");
  Recorder r_align(s_align, {"align"});
  align.bind(r_align);
  r_align.output(out_dir, force);

  LensOptions lens;
  auto* s_lens = app.add_subcommand("lens", "Logit-lens latent probabilities of answer choices");
  Recorder r_lens(s_lens, {"lens"});
  lens.bind(r_lens);
  r_lens.output(out_dir, force);

  auto* s_steer = app.add_subcommand("steer", "Activation steering");
  s_steer->require_subcommand(1);
  SteerExtractOptions extract;
  auto* s_extract = s_steer->add_subcommand("extract", "Extract steering vectors from the sample split");
  Recorder r_extract(s_extract, {"steer", "extract"});
  extract.bind(r_extract);
  r_extract.output(out_dir, force);
  SteerEvalOptions steer_eval;
  auto* s_steer_eval = s_steer->add_subcommand("eval", "Gamma and layer sweeps");
  Recorder r_steer_eval(s_steer_eval, {"steer", "eval"});
  steer_eval.bind(r_steer_eval);
  r_steer_eval.output(out_dir, force);

  ReportOptions report;
  auto* s_report = app.add_subcommand("report", "Combine outputs into summary tables");
  Recorder r_report(s_report, {"report"});
  report.bind(r_report);
  r_report.output(out_dir, force);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Recorder* rec = nullptr;
  std::function<void(const fs::path&)> body;
  if (s_synth->parsed()) {
    rec = &r_synth;
    body = [&](const fs::path& d) { cmd_synth(synth, d, out); };
  } else if (s_eval->parsed()) {
    rec = &r_eval;
    body = [&](const fs::path& d) { cmd_eval(eval, d, out); };
  } else if (s_align->parsed()) {
    rec = &r_align;
    body = [&](const fs::path& d) { cmd_align(align, d, out); };
  } else if (s_lens->parsed()) {
    rec = &r_lens;
    body = [&](const fs::path& d) { cmd_lens(lens, d, out); };
  } else if (s_extract->parsed()) {
    rec = &r_extract;
    body = [&](const fs::path& d) { cmd_steer_extract(extract, d, out); };
  } else if (s_steer_eval->parsed()) {
    rec = &r_steer_eval;
    body = [&](const fs::path& d) { cmd_steer_eval(steer_eval, d, out); };
  } else {
    rec = &r_report;
    body = [&](const fs::path& d) { cmd_report(report, d, out); };
  }

  return guarded(err, [&] {
    OutputDir dir(out_dir, force);
    write_run_record(dir.path(), *rec);
    body(dir.path());
    dir.commit();
  });
}

}  // namespace xling::cli
