#ifndef CSIVA_CLIOPS_HPP
#define CSIVA_CLIOPS_HPP

#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "csiva/bifio.hpp"
#include "csiva/evalbench.hpp"

namespace csiva {

// ----- run configuration -----
//
// Text config: `[section]` headers, `key=value` lines, `#` comments.
// Sections: data, model, train, eval, sweep. Unknown sections and keys are
// rejected so a typo cannot silently fall back to a default.

namespace cli_detail {

using Section = std::vector<std::pair<std::string, std::string>>;

inline std::map<std::string, Section> parse_sections(const std::string& text) {
  std::map<std::string, Section> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    std::string s = line.substr(a, b - a + 1);
    if (s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = s.substr(1, s.size() - 2);
      out[section];
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key before any [section]");
    std::string key = s.substr(0, eq), val = s.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    size_t v = val.find_first_not_of(" \t");
    val = v == std::string::npos ? "" : val.substr(v);
    out[section].emplace_back(key, val);
  }
  return out;
}

inline int to_int(const std::string& key, const std::string& val) {
  try {
    size_t used = 0;
    int v = std::stoi(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + val + "'");
  }
}

inline double to_double(const std::string& key, const std::string& val) {
  try {
    size_t used = 0;
    double v = std::stod(val, &used);
    if (used != val.size()) throw std::invalid_argument(val);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + val + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& val) {
  if (val == "1" || val == "true") return true;
  if (val == "0" || val == "false") return false;
  throw ConfigError(key + ": expected a boolean, got '" + val + "'");
}

inline std::vector<double> to_double_list(const std::string& key, const std::string& val) {
  std::vector<double> out;
  std::istringstream in(val);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_double(key, item));
  return out;
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& val) {
  std::vector<int> out;
  std::istringstream in(val);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int(key, item));
  return out;
}

}  // namespace cli_detail

struct SweepConfig {
  std::string kind = "interventions";  // or "samples"
  std::vector<double> values = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  int pairs = 32;
};

struct RunConfig {
  DataSpec data;
  ModelConfig model;
  TrainConfig train;
  int eval_pairs = 64;
  int generate_count = 1;
  SweepConfig sweep;
  bool n_nodes_max_set = false;

  // Resolve the coupled fields: the model's node capacity defaults to the
  // data width and its value mode always follows the data family.
  void finalize() {
    if (!n_nodes_max_set) model.n_nodes_max = data.n_nodes;
    model.discrete = family_is_discrete(data.family);
    if (model.discrete) model.k = data.k;
    model.validate();
    train.data = data;
    train.validate();
  }

  void apply_preset(const std::string& name) {
    ModelConfig p = ModelConfig::preset(name);
    model.hidden = p.hidden;
    model.encoder_layers = p.encoder_layers;
    model.decoder_layers = p.decoder_layers;
    model.heads = p.heads;
    model.value_mlp_hidden = p.value_mlp_hidden;
  }

  static RunConfig from_text(const std::string& text) {
    using namespace cli_detail;
    RunConfig c;
    auto sections = parse_sections(text);
    for (const auto& [name, entries] : sections) {
      if (name == "data") {
        for (const auto& [k, v] : entries) {
          if (k == "n_nodes") c.data.n_nodes = to_int(k, v);
          else if (k == "er_degree") c.data.er_degree = to_double(k, v);
          else if (k == "family") c.data.family = family_from_name(v);
          else if (k == "alpha") c.data.alpha = to_double(k, v);
          else if (k == "k") c.data.k = to_int(k, v);
          else if (k == "samples") c.data.samples = to_int(k, v);
          else if (k == "fraction") c.data.fraction = to_double(k, v);
          else if (k == "regime") c.data.regime = regime_from_name(v);
          else throw ConfigError("[data] unknown key: " + k);
        }
      } else if (name == "model") {
        for (const auto& [k, v] : entries) {
          if (k == "preset") c.apply_preset(v);  // later keys override
          else if (k == "n_nodes_max") { c.model.n_nodes_max = to_int(k, v); c.n_nodes_max_set = true; }
          else if (k == "hidden") c.model.hidden = to_int(k, v);
          else if (k == "encoder_layers") c.model.encoder_layers = to_int(k, v);
          else if (k == "decoder_layers") c.model.decoder_layers = to_int(k, v);
          else if (k == "heads") c.model.heads = to_int(k, v);
          else if (k == "value_mlp_hidden") c.model.value_mlp_hidden = to_int(k, v);
          else if (k == "prenorm") c.model.prenorm = to_bool(k, v);
          else if (k == "sample_attention") c.model.sample_attention = to_bool(k, v);
          else throw ConfigError("[model] unknown key: " + k);
        }
      } else if (name == "train") {
        for (const auto& [k, v] : entries) {
          if (k == "iterations") c.train.iterations = to_int(k, v);
          else if (k == "lr") c.train.lr = to_double(k, v);
          else if (k == "aux_weight") c.train.aux_weight = to_double(k, v);
          else if (k == "clip_norm") c.train.clip_norm = to_double(k, v);
          else if (k == "pool_size") c.train.pool_size = to_int(k, v);
          else if (k == "eval_every") c.train.eval_every = to_int(k, v);
          else if (k == "eval_pairs") c.train.eval_pairs = to_int(k, v);
          else if (k == "mixed_fractions") c.train.mixed_fractions = to_double_list(k, v);
          else throw ConfigError("[train] unknown key: " + k);
        }
      } else if (name == "eval") {
        for (const auto& [k, v] : entries) {
          if (k == "pairs") c.eval_pairs = to_int(k, v);
          else throw ConfigError("[eval] unknown key: " + k);
        }
      } else if (name == "generate") {
        for (const auto& [k, v] : entries) {
          if (k == "count") c.generate_count = to_int(k, v);
          else throw ConfigError("[generate] unknown key: " + k);
        }
      } else if (name == "sweep") {
        for (const auto& [k, v] : entries) {
          if (k == "kind") {
            if (v != "interventions" && v != "samples")
              throw ConfigError("[sweep] kind must be interventions or samples");
            c.sweep.kind = v;
          } else if (k == "values") c.sweep.values = to_double_list(k, v);
          else if (k == "pairs") c.sweep.pairs = to_int(k, v);
          else throw ConfigError("[sweep] unknown key: " + k);
        }
      } else {
        throw ConfigError("unknown config section: [" + name + "]");
      }
    }
    return c;
  }

  // Normalized echo of the effective configuration.
  std::string to_text() const {
    std::string s = "[data]\n";
    s += "n_nodes=" + std::to_string(data.n_nodes) + "\n";
    s += "er_degree=" + format_double(data.er_degree) + "\n";
    s += std::string("family=") + family_name(data.family) + "\n";
    s += "alpha=" + format_double(data.alpha) + "\n";
    s += "k=" + std::to_string(data.k) + "\n";
    s += "samples=" + std::to_string(data.samples) + "\n";
    s += "fraction=" + format_double(data.fraction) + "\n";
    s += std::string("regime=") + regime_name(data.regime) + "\n";
    s += "[model]\n" + model.to_text();
    s += "[train]\n";
    s += "iterations=" + std::to_string(train.iterations) + "\n";
    s += "lr=" + format_double(train.lr) + "\n";
    s += "aux_weight=" + format_double(train.aux_weight) + "\n";
    s += "clip_norm=" + format_double(train.clip_norm) + "\n";
    s += "pool_size=" + std::to_string(train.pool_size) + "\n";
    s += "eval_every=" + std::to_string(train.eval_every) + "\n";
    s += "eval_pairs=" + std::to_string(train.eval_pairs) + "\n";
    if (!train.mixed_fractions.empty()) {
      s += "mixed_fractions=";
      for (size_t i = 0; i < train.mixed_fractions.size(); ++i)
        s += (i ? "," : "") + format_double(train.mixed_fractions[i]);
      s += "\n";
    }
    return s;
  }
};

// ----- commands -----
// Each command throws on failure; the frontend maps error categories to
// exit codes. All file output is atomic. Directories gain a MANIFEST that
// hashes every file written, so runs can be compared at a glance.

namespace cli_detail {

struct Manifest {
  std::vector<std::string> lines;
  std::string add(const std::filesystem::path& dir, const std::string& name,
                  const std::string& content, const std::string& extra = "") {
    write_file_atomic(dir / name, content);
    std::string line = hex64(fnv1a64(content)) + " " + std::to_string(content.size()) +
                       " " + name + (extra.empty() ? "" : " " + extra);
    lines.push_back(line);
    return line;
  }
  void note(const std::string& line) { lines.push_back(line); }
  void write(const std::filesystem::path& dir) {
    std::string s;
    for (const std::string& l : lines) s += l + "\n";
    write_file_atomic(dir / "MANIFEST", s);
  }
};

}  // namespace cli_detail

// Replay fingerprint: effective config hash, root seed, code version.
inline std::string run_fingerprint(const RunConfig& cfg, uint64_t seed) {
  return "run config=" + hex64(fnv1a64(cfg.to_text())) + " seed=" + std::to_string(seed) +
         " version=" + std::string(kVersion);
}

// Writes `count` dataset files plus a MANIFEST listing per-file hash, seed,
// and edge count, so a rerun can be compared without opening the files.
inline void cmd_generate(const RunConfig& cfg, uint64_t seed,
                         const std::filesystem::path& out_dir, std::ostream& os) {
  cli_detail::Manifest mf;
  mf.note(run_fingerprint(cfg, seed));
  double total_edges = 0;
  for (int i = 0; i < cfg.generate_count; ++i) {
    uint64_t pair_seed = derive_seed(seed, 0x67656e64, static_cast<uint64_t>(i));
    Dataset d = make_pair(cfg.data, pair_seed);
    char name[32];
    std::snprintf(name, sizeof name, "dataset_%03d.txt", i);
    mf.add(out_dir, name, dataset_to_text(d),
           "seed=" + std::to_string(pair_seed) +
               " edges=" + std::to_string(d.truth.edge_count()));
    total_edges += d.truth.edge_count();
  }
  mf.note("datasets=" + std::to_string(cfg.generate_count) +
          " mean_edges=" + format_double(total_edges / cfg.generate_count));
  mf.write(out_dir);
  os << "generate out=" << out_dir.string() << " datasets=" << cfg.generate_count
     << " mean_edges=" << format_double(total_edges / cfg.generate_count) << "\n";
}

inline void cmd_train(RunConfig cfg, uint64_t seed, const std::filesystem::path& out_dir,
                      std::ostream& os) {
  cfg.finalize();
  cfg.train.seed = seed;
  CsivaModel<double> model(cfg.model, derive_seed(seed, 0x696e6974));
  std::ostringstream log;
  TrainResult res = train(model, cfg.train, &log);
  std::filesystem::create_directories(out_dir);
  cli_detail::Manifest mf;
  mf.note(run_fingerprint(cfg, seed));
  mf.add(out_dir, "config.txt", cfg.to_text());
  mf.add(out_dir, "metrics.log", log.str());
  model.save(out_dir / "model.ckpt");
  std::string ckpt_bytes = read_file(out_dir / "model.ckpt");
  mf.note(hex64(fnv1a64(ckpt_bytes)) + " " + std::to_string(ckpt_bytes.size()) +
          " model.ckpt");
  mf.write(out_dir);
  os << "train out=" << out_dir.string() << " iterations=" << res.iterations
     << " final_loss=" << format_double(res.final_loss);
  if (!res.heldout.empty())
    os << " heldout_hamming=" << format_double(res.heldout.back().second);
  os << "\n";
}

inline void cmd_eval(const RunConfig& cfg, uint64_t seed,
                     const std::filesystem::path& ckpt, const std::filesystem::path& out,
                     std::ostream& os) {
  CsivaModel<double> model = CsivaModel<double>::load(ckpt);
  EvalReport rep = eval_model(model_predictor(model), cfg.data, cfg.eval_pairs, seed,
                              "checkpoint");
  write_file_atomic(out, rep.to_text() + run_fingerprint(cfg, seed) + "\n");
  os << "cell=" << rep.train_cell << "x" << rep.test_cell
     << " mean=" << format_double(rep.mean) << " std=" << format_double(rep.stddev)
     << " n=" << rep.hammings.size() << "\n";
}

inline void cmd_predict(const std::filesystem::path& ckpt,
                        const std::filesystem::path& dataset_path,
                        const std::filesystem::path& out, std::ostream& os) {
  CsivaModel<double> model = CsivaModel<double>::load(ckpt);
  Dataset d = dataset_from_text(read_file(dataset_path));
  GraphPrediction pred = model.predict(d);
  std::string text = to_text(pred.greedy);
  text += "loglik=" + format_double(pred.loglik) + "\n";
  text += "probs\n";
  for (int r = 0; r < pred.n; ++r) {
    for (int c = 0; c < pred.n; ++c) {
      if (c) text += ' ';
      text += format_double(pred.probs[static_cast<size_t>(r) * pred.n + c]);
    }
    text += '\n';
  }
  text += "run ckpt=" + hex64(fnv1a64(read_file(ckpt))) +
          " dataset=" + hex64(fnv1a64(read_file(dataset_path))) +
          " version=" + std::string(kVersion) + "\n";
  write_file_atomic(out, text);
  os << "predict out=" << out.string() << " n=" << pred.n
     << " edges=" << pred.greedy.edge_count()
     << " hamming_vs_truth=" << format_double(hamming(pred.greedy, d.truth)) << "\n";
}

// Load a reference network, draw a dataset from it, and report structure
// recovery when a checkpoint is supplied.
inline void cmd_bench_bnlearn(const RunConfig& cfg, uint64_t seed,
                              const std::filesystem::path& bif_path,
                              const std::filesystem::path& ckpt,  // empty: data only
                              const std::filesystem::path& out, std::ostream& os) {
  BifParseResult parsed = parse_bif_file(bif_path);
  validate_bif(parsed.net);
  CbnSpec cbn = bif_to_cbn(parsed.net);
  Dataset d = sample_dataset(cbn, cfg.data.samples, cfg.data.fraction, cfg.data.regime,
                             seed);
  std::string rep = "network=" + parsed.net.name + " nodes=" + std::to_string(cbn.n()) +
                    " edges=" + std::to_string(cbn.graph.edge_count()) +
                    " warnings=" + std::to_string(parsed.warnings.size()) + "\n";
  for (const std::string& w : parsed.warnings) rep += "warning=" + w + "\n";
  rep += "samples=" + std::to_string(d.s) +
         " interventional=" + std::to_string(dataset_stats(d).total_interventions) + "\n";
  DatasetStats st = dataset_stats(d);
  for (int node = 0; node < d.n; ++node) {
    rep += "freq " + parsed.net.vars[node].name;
    for (int c = 0; c < parsed.net.vars[node].card(); ++c)
      rep += " " + format_double(st.freq[node][c]);
    rep += "\n";
  }
  if (!ckpt.empty()) {
    CsivaModel<double> model = CsivaModel<double>::load(ckpt);
    GraphPrediction pred = model.predict(d);
    rep += "hamming=" + format_double(hamming(pred.greedy, d.truth)) + "\n";
    rep += to_text(pred.greedy);
  }
  rep += "truth\n" + to_text(cbn.graph);
  rep += run_fingerprint(cfg, seed) + "\n";
  write_file_atomic(out, rep);
  os << "bench-bnlearn network=" << parsed.net.name << " nodes=" << cbn.n()
     << " edges=" << cbn.graph.edge_count() << " warnings=" << parsed.warnings.size()
     << " out=" << out.string() << "\n";
}

inline void cmd_sweep(const RunConfig& cfg, uint64_t seed, const std::filesystem::path& ckpt,
                      const std::filesystem::path& out, std::ostream& os) {
  CsivaModel<double> model = CsivaModel<double>::load(ckpt);
  Predictor pred = model_predictor(model);
  SweepResult res;
  if (cfg.sweep.kind == "interventions") {
    res = sweep_interventions(pred, cfg.data, cfg.sweep.values, cfg.sweep.pairs, seed,
                              "checkpoint");
  } else {
    std::vector<int> counts;
    for (double v : cfg.sweep.values) counts.push_back(static_cast<int>(v));
    res = sweep_samples(pred, cfg.data, counts, cfg.sweep.pairs, seed, "checkpoint");
  }
  write_file_atomic(out, res.csv + "# " + run_fingerprint(cfg, seed) + "\n");
  os << "sweep kind=" << cfg.sweep.kind << " points=" << res.points.size()
     << " out=" << out.string() << "\n";
}

// ----- error reporting -----

inline int exit_code_for(const std::string& category) {
  if (category == "usage") return 2;
  if (category == "config") return 3;
  if (category == "validation") return 4;
  if (category == "parse") return 5;
  if (category == "io") return 6;
  if (category == "numeric") return 7;
  if (category == "capability") return 8;
  if (category == "shape") return 9;
  return 1;
}

// One line on stderr, machine parsable: error category=<c> msg=<text>.
inline int report_error(const Error& e, std::ostream& err) {
  std::string msg = e.what();
  for (char& c : msg)
    if (c == '\n') c = ' ';
  err << "error category=" << e.category() << " msg=" << msg << "\n";
  return exit_code_for(e.category());
}

}  // namespace csiva

#endif  // CSIVA_CLIOPS_HPP
