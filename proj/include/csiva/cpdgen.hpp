#ifndef CSIVA_CPDGEN_HPP
#define CSIVA_CPDGEN_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "csiva/adjacency.hpp"
#include "csiva/graphgen.hpp"
#include "csiva/rng.hpp"

namespace csiva {

// Conditional-distribution families. The first three are continuous, the
// last two discrete (categorical values 1..K).
enum class Family { linear, anm, nn, mlp_discrete, dirichlet };

inline bool family_is_discrete(Family f) {
  return f == Family::mlp_discrete || f == Family::dirichlet;
}

inline const char* family_name(Family f) {
  switch (f) {
    case Family::linear: return "linear";
    case Family::anm: return "anm";
    case Family::nn: return "nn";
    case Family::mlp_discrete: return "mlp-discrete";
    case Family::dirichlet: return "dirichlet";
  }
  throw ValidationError("family_name: unknown family");
}

inline Family family_from_name(const std::string& s) {
  if (s == "linear") return Family::linear;
  if (s == "anm") return Family::anm;
  if (s == "nn") return Family::nn;
  if (s == "mlp-discrete") return Family::mlp_discrete;
  if (s == "dirichlet") return Family::dirichlet;
  throw ValidationError("unknown family name: " + s);
}

// One intervention applied while drawing a single sample.
struct InterventionSpec {
  enum class Kind { none, hard, soft };
  Kind kind = Kind::none;
  int target = -1;          // node index, 0-based
  double value = 0.0;       // hard: clamped value (category 1..K when discrete)
  double soft_alpha = 0.0;  // soft: symmetric Dirichlet concentration
  bool known_target = true; // false: marker written as observational
};

// Hyperparameters of make_cbn that vary per experiment. Structural constants
// of each family (hidden widths, noise scales, weight laws) are fixed in the
// sampling code below.
struct CpdHyper {
  int k = 3;           // categories per node, discrete families
  double alpha = 1.0;  // Dirichlet concentration over CPT rows
};

// A fully parameterized causal Bayesian network: a DAG plus one conditional
// sampler per node. Table CBNs (dirichlet family and loaded networks) allow
// per-node category counts.
struct CbnSpec {
  AdjacencyMatrix graph;
  Family family = Family::dirichlet;
  std::vector<int> card;                  // per-node categories; empty if continuous
  std::vector<std::vector<int>> parents;  // ascending node index
  std::vector<int> topo;

  struct NodeLinear {
    std::vector<double> w;  // one weight per parent, parent order
  };
  // One hidden layer; used by anm (leaky-relu, additive noise), nn (tanh,
  // noise as an extra input), and mlp-discrete (relu, softmax head).
  struct NodeMlp {
    int in = 0, hidden = 0, out = 0;
    std::vector<double> w1, b1;  // in x hidden, hidden
    std::vector<double> w2, b2;  // hidden x out, out
    double sigma = 1.0;          // noise scale (anm, nn)
  };
  struct NodeTable {
    std::vector<double> p;  // rows x card[n]; row index: mixed radix over
                            // parent categories, first parent most significant
  };

  std::vector<NodeLinear> lin;
  std::vector<NodeMlp> mlp;
  std::vector<NodeTable> table;
  double noise_std = 0.1;  // linear family

  int n() const { return graph.n; }
  int max_card() const {
    int k = 0;
    for (int c : card) k = std::max(k, c);
    return k;
  }
  int table_rows(int node) const {
    int rows = 1;
    for (int p : parents[node]) rows *= card[p];
    return rows;
  }
  // Row of node's CPT selected by the current parent values (1-based categories).
  int table_row(int node, const std::vector<double>& x) const {
    int row = 0;
    for (int p : parents[node]) {
      int v = static_cast<int>(x[p]) - 1;
      row = row * card[p] + v;
    }
    return row;
  }
};

namespace detail {

inline void fill_normal(Rng& rng, std::vector<double>& v, double stddev) {
  for (double& x : v) x = stddev * rng.normal();
}

inline void fill_truncated_normal(Rng& rng, std::vector<double>& v, double stddev) {
  for (double& x : v) x = rng.truncated_normal(stddev);
}

inline void fill_uniform(Rng& rng, std::vector<double>& v, double lo, double hi) {
  for (double& x : v) x = rng.uniform(lo, hi);
}

}  // namespace detail

// Draws the per-node conditional parameters for `graph`. Family laws:
//  linear:       X_n = sum_p w_p X_p + Z,  Z ~ N(0, 0.1^2), w truncated
//                normal (std 1.5, cut 2 sigma)
//  anm:          X_n = f(parents) + 0.4 Z, Z ~ N(0, s^2), s^2 ~ U[1,2];
//                f: 1 hidden layer of 10 leaky-relu (slope 0.25) units,
//                weights N(0,1), no biases
//  nn:           X_n = f(parents, Z), Z ~ N(0, s^2), s^2 ~ U[1,2];
//                f: 1 hidden layer of 20 tanh units, weights N(0,1)
//  mlp-discrete: logits = 2-layer net (hidden 32, relu) on one-hot parents
//                (constant 1 for roots), weights truncated normal std 1.5,
//                biases U[-0.5, 0.5]; category ~ softmax(logits)
//  dirichlet:    each CPT row ~ symmetric Dirichlet(alpha)
inline CbnSpec make_cbn(const AdjacencyMatrix& graph, Family family, const CpdHyper& hyper,
                        uint64_t seed) {
  if (family_is_discrete(family) && hyper.k < 2)
    throw ConfigError("make_cbn: discrete families need k >= 2");
  if (family == Family::dirichlet && hyper.alpha <= 0)
    throw ConfigError("make_cbn: dirichlet concentration must be > 0");
  CbnSpec cbn;
  cbn.graph = graph;
  cbn.family = family;
  cbn.topo = topo_order(graph);
  cbn.parents.resize(graph.n);
  for (int k = 0; k < graph.n; ++k) cbn.parents[k] = graph.parents(k);
  if (family_is_discrete(family)) cbn.card.assign(graph.n, hyper.k);

  Rng rng(seed);
  switch (family) {
    case Family::linear: {
      cbn.lin.resize(graph.n);
      cbn.noise_std = 0.1;
      for (int n = 0; n < graph.n; ++n) {
        cbn.lin[n].w.resize(cbn.parents[n].size());
        detail::fill_truncated_normal(rng, cbn.lin[n].w, 1.5);
      }
      break;
    }
    case Family::anm: {
      cbn.mlp.resize(graph.n);
      for (int n = 0; n < graph.n; ++n) {
        CbnSpec::NodeMlp& m = cbn.mlp[n];
        m.in = static_cast<int>(cbn.parents[n].size());
        m.hidden = 10;
        m.out = 1;
        m.w1.resize(static_cast<size_t>(m.in) * m.hidden);
        m.w2.resize(static_cast<size_t>(m.hidden));
        detail::fill_normal(rng, m.w1, 1.0);
        detail::fill_normal(rng, m.w2, 1.0);
        m.sigma = std::sqrt(rng.uniform(1.0, 2.0));
      }
      break;
    }
    case Family::nn: {
      cbn.mlp.resize(graph.n);
      for (int n = 0; n < graph.n; ++n) {
        CbnSpec::NodeMlp& m = cbn.mlp[n];
        m.in = static_cast<int>(cbn.parents[n].size()) + 1;  // + noise input
        m.hidden = 20;
        m.out = 1;
        m.w1.resize(static_cast<size_t>(m.in) * m.hidden);
        m.w2.resize(static_cast<size_t>(m.hidden));
        detail::fill_normal(rng, m.w1, 1.0);
        detail::fill_normal(rng, m.w2, 1.0);
        m.sigma = std::sqrt(rng.uniform(1.0, 2.0));
      }
      break;
    }
    case Family::mlp_discrete: {
      cbn.mlp.resize(graph.n);
      for (int n = 0; n < graph.n; ++n) {
        CbnSpec::NodeMlp& m = cbn.mlp[n];
        int n_par = static_cast<int>(cbn.parents[n].size());
        m.in = n_par > 0 ? n_par * hyper.k : 1;  // one-hot parents, constant 1 for roots
        m.hidden = 32;
        m.out = hyper.k;
        m.w1.resize(static_cast<size_t>(m.in) * m.hidden);
        m.b1.resize(static_cast<size_t>(m.hidden));
        m.w2.resize(static_cast<size_t>(m.hidden) * m.out);
        m.b2.resize(static_cast<size_t>(m.out));
        detail::fill_truncated_normal(rng, m.w1, 1.5);
        detail::fill_uniform(rng, m.b1, -0.5, 0.5);
        detail::fill_truncated_normal(rng, m.w2, 1.5);
        detail::fill_uniform(rng, m.b2, -0.5, 0.5);
      }
      break;
    }
    case Family::dirichlet: {
      cbn.table.resize(graph.n);
      for (int n = 0; n < graph.n; ++n) {
        int rows = cbn.table_rows(n);
        cbn.table[n].p.resize(static_cast<size_t>(rows) * hyper.k);
        for (int r = 0; r < rows; ++r)
          rng.dirichlet(hyper.alpha, hyper.k, cbn.table[n].p.data() + static_cast<size_t>(r) * hyper.k);
      }
      break;
    }
  }
  return cbn;
}

namespace detail {

inline double eval_mlp_scalar(const CbnSpec::NodeMlp& m, const double* in, bool leaky,
                              double slope) {
  double out = 0.0;
  for (int h = 0; h < m.hidden; ++h) {
    double a = 0.0;
    for (int i = 0; i < m.in; ++i) a += in[i] * m.w1[static_cast<size_t>(i) * m.hidden + h];
    if (leaky)
      a = a > 0.0 ? a : slope * a;
    else
      a = std::tanh(a);
    out += a * m.w2[h];
  }
  return out;
}

// Softmax head over a relu hidden layer: the conditional distribution a
// discrete MLP node assigns to its categories for one parent encoding.
inline std::vector<double> mlp_categorical_dist(const CbnSpec::NodeMlp& m, const double* in) {
  std::vector<double> hidden(static_cast<size_t>(m.hidden));
  for (int h = 0; h < m.hidden; ++h) {
    double a = m.b1[h];
    for (int i = 0; i < m.in; ++i) a += in[i] * m.w1[static_cast<size_t>(i) * m.hidden + h];
    hidden[h] = a > 0.0 ? a : 0.0;
  }
  std::vector<double> p(static_cast<size_t>(m.out));
  double mx = -1e300;
  for (int o = 0; o < m.out; ++o) {
    double z = m.b2[o];
    for (int h = 0; h < m.hidden; ++h) z += hidden[h] * m.w2[static_cast<size_t>(h) * m.out + o];
    p[o] = z;
    mx = std::max(mx, z);
  }
  double sum = 0.0;
  for (int o = 0; o < m.out; ++o) {
    p[o] = std::exp(p[o] - mx);
    sum += p[o];
  }
  for (int o = 0; o < m.out; ++o) p[o] /= sum;
  return p;
}

inline int eval_mlp_categorical(const CbnSpec::NodeMlp& m, const double* in, Rng& rng) {
  std::vector<double> p = mlp_categorical_dist(m, in);
  return rng.categorical(p.data(), m.out);
}

}  // namespace detail

// One joint sample in topological order; `iv` overrides the target node.
// Discrete values are returned as 1-based categories.
inline std::vector<double> ancestral_sample(const CbnSpec& cbn, const InterventionSpec& iv,
                                            Rng& rng) {
  int n_nodes = cbn.n();
  if (iv.kind != InterventionSpec::Kind::none && (iv.target < 0 || iv.target >= n_nodes))
    throw ValidationError("intervention target out of range");
  if (iv.kind == InterventionSpec::Kind::soft && cbn.table.empty())
    throw ConfigError("soft interventions require a table CBN");
  std::vector<double> x(static_cast<size_t>(n_nodes), 0.0);
  std::vector<double> buf;
  for (int n : cbn.topo) {
    if (iv.kind == InterventionSpec::Kind::hard && n == iv.target) {
      if (!cbn.card.empty()) {
        int v = static_cast<int>(iv.value);
        if (v < 1 || v > cbn.card[n] || double(v) != iv.value)
          throw ValidationError("hard intervention value is not a valid category");
      }
      x[n] = iv.value;
      continue;
    }
    if (iv.kind == InterventionSpec::Kind::soft && n == iv.target) {
      // Fresh symmetric Dirichlet row for the parent configuration at hand.
      buf.resize(static_cast<size_t>(cbn.card[n]));
      rng.dirichlet(iv.soft_alpha, cbn.card[n], buf.data());
      x[n] = 1 + rng.categorical(buf.data(), cbn.card[n]);
      continue;
    }
    const std::vector<int>& par = cbn.parents[n];
    switch (cbn.family) {
      case Family::linear: {
        double v = 0.0;
        for (size_t i = 0; i < par.size(); ++i) v += cbn.lin[n].w[i] * x[par[i]];
        x[n] = v + cbn.noise_std * rng.normal();
        break;
      }
      case Family::anm: {
        buf.resize(par.size());
        for (size_t i = 0; i < par.size(); ++i) buf[i] = x[par[i]];
        double f = detail::eval_mlp_scalar(cbn.mlp[n], buf.data(), true, 0.25);
        x[n] = f + 0.4 * cbn.mlp[n].sigma * rng.normal();
        break;
      }
      case Family::nn: {
        buf.resize(par.size() + 1);
        for (size_t i = 0; i < par.size(); ++i) buf[i] = x[par[i]];
        buf[par.size()] = cbn.mlp[n].sigma * rng.normal();
        x[n] = detail::eval_mlp_scalar(cbn.mlp[n], buf.data(), false, 0.0);
        break;
      }
      case Family::mlp_discrete: {
        const CbnSpec::NodeMlp& m = cbn.mlp[n];
        buf.assign(static_cast<size_t>(m.in), 0.0);
        if (par.empty()) {
          buf[0] = 1.0;
        } else {
          size_t off = 0;
          for (size_t i = 0; i < par.size(); ++i) {
            buf[off + static_cast<size_t>(x[par[i]]) - 1] = 1.0;
            off += static_cast<size_t>(cbn.card[par[i]]);
          }
        }
        x[n] = 1 + detail::eval_mlp_categorical(m, buf.data(), rng);
        break;
      }
      case Family::dirichlet: {
        int row = cbn.table_row(n, x);
        const double* p = cbn.table[n].p.data() + static_cast<size_t>(row) * cbn.card[n];
        x[n] = 1 + rng.categorical(p, cbn.card[n]);
        break;
      }
    }
  }
  return x;
}

inline std::vector<double> ancestral_sample(const CbnSpec& cbn, const InterventionSpec& iv,
                                            uint64_t seed) {
  Rng rng(seed);
  return ancestral_sample(cbn, iv, rng);
}

// How interventional rows are produced and marked.
enum class Regime { hard, soft, unknown_hard };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::hard: return "hard";
    case Regime::soft: return "soft";
    case Regime::unknown_hard: return "unknown-hard";
  }
  throw ValidationError("regime_name: unknown regime");
}

inline Regime regime_from_name(const std::string& s) {
  if (s == "hard") return Regime::hard;
  if (s == "soft") return Regime::soft;
  if (s == "unknown-hard") return Regime::unknown_hard;
  throw ValidationError("unknown regime name: " + s);
}

// S joint samples plus per-sample intervention markers and the ground-truth
// graph: one supervised training example.
struct Dataset {
  int n = 0, s = 0;
  Family family = Family::dirichlet;
  int k = 0;  // max categories; 0 for continuous families
  std::vector<double> values;  // s x n, row-major
  std::vector<int> markers;    // s entries: -1 observational, else 1..n
  AdjacencyMatrix truth;

  double value(int row, int node) const { return values[static_cast<size_t>(row) * n + node]; }
};

// Draws round(s * fraction) interventional rows (uniform i.i.d. target node,
// positions shuffled) and the rest observational. Hard clamp values: linear
// U[-1, 1]; anm/nn N(2, 1); discrete uniform over categories. Soft
// interventions redraw the target's conditional as Dirichlet(alpha_i) with
// alpha_i uniform over {0.1, 0.3, 0.5, 0.7, 0.9}, fresh per row.
inline Dataset sample_dataset(const CbnSpec& cbn, int s, double fraction, Regime regime,
                              uint64_t seed) {
  if (s < 1) throw ConfigError("sample_dataset: s must be >= 1");
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("sample_dataset: fraction must lie in [0, 1]");
  int n_nodes = cbn.n();
  Dataset d;
  d.n = n_nodes;
  d.s = s;
  d.family = cbn.family;
  d.k = cbn.max_card();
  d.truth = cbn.graph;
  d.values.resize(static_cast<size_t>(s) * n_nodes);
  d.markers.assign(static_cast<size_t>(s), -1);

  Rng rng(derive_seed(seed, 0x64617461));
  int n_iv = static_cast<int>(std::llround(double(s) * fraction));
  std::vector<uint8_t> is_iv(static_cast<size_t>(s), 0);
  for (int i = 0; i < n_iv; ++i) is_iv[i] = 1;
  rng.shuffle(is_iv);

  static constexpr double kSoftAlphas[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  for (int row = 0; row < s; ++row) {
    InterventionSpec iv;
    if (is_iv[row]) {
      iv.target = static_cast<int>(rng.uniform_int(0, n_nodes - 1));
      if (regime == Regime::soft) {
        iv.kind = InterventionSpec::Kind::soft;
        iv.soft_alpha = kSoftAlphas[rng.uniform_int(0, 4)];
      } else {
        iv.kind = InterventionSpec::Kind::hard;
        iv.known_target = regime != Regime::unknown_hard;
        if (!cbn.card.empty())
          iv.value = static_cast<double>(rng.uniform_int(1, cbn.card[iv.target]));
        else if (cbn.family == Family::linear)
          iv.value = rng.uniform(-1.0, 1.0);
        else
          iv.value = rng.normal(2.0, 1.0);
      }
    }
    std::vector<double> x = ancestral_sample(cbn, iv, rng);
    for (int node = 0; node < n_nodes; ++node)
      d.values[static_cast<size_t>(row) * n_nodes + node] = x[node];
    bool marked = iv.kind != InterventionSpec::Kind::none && iv.known_target;
    d.markers[row] = marked ? iv.target + 1 : -1;
  }
  return d;
}

// Pure per-dataset summary: per-node means (continuous) or category
// frequencies (discrete), plus intervention counts from the markers.
struct DatasetStats {
  std::vector<double> mean;               // continuous families
  std::vector<std::vector<double>> freq;  // discrete families, per node
  std::vector<int> interventions_per_node;
  int total_interventions = 0;
};

inline DatasetStats dataset_stats(const Dataset& d) {
  DatasetStats st;
  st.interventions_per_node.assign(static_cast<size_t>(d.n), 0);
  for (int row = 0; row < d.s; ++row) {
    if (d.markers[row] != -1) {
      ++st.total_interventions;
      ++st.interventions_per_node[d.markers[row] - 1];
    }
  }
  if (family_is_discrete(d.family)) {
    st.freq.assign(static_cast<size_t>(d.n), std::vector<double>(static_cast<size_t>(d.k), 0.0));
    for (int row = 0; row < d.s; ++row)
      for (int node = 0; node < d.n; ++node)
        st.freq[node][static_cast<size_t>(d.value(row, node)) - 1] += 1.0 / d.s;
  } else {
    st.mean.assign(static_cast<size_t>(d.n), 0.0);
    for (int row = 0; row < d.s; ++row)
      for (int node = 0; node < d.n; ++node) st.mean[node] += d.value(row, node) / d.s;
  }
  return st;
}

// ----- dataset file format -----
//
// CSIVA-DS v1
// N=<n> S=<s> FAMILY=<name> K=<k|0>
// <v_1> ... <v_N> | <marker>          (S lines)
// TRUTH
// <adjacency text block>

inline std::string dataset_to_text(const Dataset& d) {
  std::string out = "CSIVA-DS v1\n";
  out += "N=" + std::to_string(d.n) + " S=" + std::to_string(d.s) +
         " FAMILY=" + family_name(d.family) + " K=" + std::to_string(d.k) + "\n";
  for (int row = 0; row < d.s; ++row) {
    for (int node = 0; node < d.n; ++node) {
      if (node) out += ' ';
      out += format_double(d.value(row, node));
    }
    out += " | " + std::to_string(d.markers[row]) + "\n";
  }
  out += "TRUTH\n";
  out += to_text(d.truth);
  return out;
}

inline void validate_dataset(const Dataset& d) {
  if (d.n < 1 || d.s < 1) throw ValidationError("dataset: empty");
  if (d.truth.n != d.n) throw ValidationError("dataset: truth size mismatch");
  bool discrete = family_is_discrete(d.family);
  if (discrete && d.k < 2) throw ValidationError("dataset: discrete family needs K >= 2");
  if (!discrete && d.k != 0) throw ValidationError("dataset: continuous family must have K=0");
  for (int row = 0; row < d.s; ++row) {
    int m = d.markers[row];
    if (m != -1 && (m < 1 || m > d.n))
      throw ValidationError("dataset: marker out of range at row " + std::to_string(row));
    if (discrete)
      for (int node = 0; node < d.n; ++node) {
        double v = d.value(row, node);
        if (v != std::floor(v) || v < 1 || v > d.k)
          throw ValidationError("dataset: discrete value out of range at row " +
                                std::to_string(row));
      }
  }
}

inline Dataset dataset_from_stream(std::istream& in) {
  auto fail = [](int line, const std::string& msg) -> void {
    throw ValidationError("dataset file, line " + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line) || line != "CSIVA-DS v1") fail(1, "bad magic");
  if (!std::getline(in, line)) fail(2, "missing header");
  Dataset d;
  {
    std::istringstream hs(line);
    std::string tok;
    std::string family;
    int got = 0;
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) fail(2, "bad header token: " + tok);
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "N") d.n = std::stoi(val);
      else if (key == "S") d.s = std::stoi(val);
      else if (key == "FAMILY") family = val;
      else if (key == "K") d.k = std::stoi(val);
      else fail(2, "unknown header key: " + key);
      ++got;
    }
    if (got != 4) fail(2, "header needs N, S, FAMILY, K");
    d.family = family_from_name(family);
  }
  if (d.n < 1 || d.s < 1) fail(2, "N and S must be >= 1");
  d.values.resize(static_cast<size_t>(d.s) * d.n);
  d.markers.assign(static_cast<size_t>(d.s), -1);
  for (int row = 0; row < d.s; ++row) {
    if (!std::getline(in, line)) fail(3 + row, "missing sample row");
    std::istringstream ls(line);
    for (int node = 0; node < d.n; ++node)
      if (!(ls >> d.values[static_cast<size_t>(row) * d.n + node]))
        fail(3 + row, "missing value");
    std::string bar;
    if (!(ls >> bar) || bar != "|") fail(3 + row, "missing | marker separator");
    if (!(ls >> d.markers[row])) fail(3 + row, "missing marker");
    std::string extra;
    if (ls >> extra) fail(3 + row, "trailing content: " + extra);
  }
  if (!std::getline(in, line) || line != "TRUTH") fail(3 + d.s, "missing TRUTH section");
  d.truth = adjacency_from_stream(in);
  validate_dataset(d);
  return d;
}

inline Dataset dataset_from_text(const std::string& text) {
  std::istringstream in(text);
  return dataset_from_stream(in);
}

}  // namespace csiva

#endif  // CSIVA_CPDGEN_HPP
