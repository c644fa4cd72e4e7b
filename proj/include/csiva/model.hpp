#ifndef CSIVA_MODEL_HPP
#define CSIVA_MODEL_HPP

#include <bit>
#include <cstring>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csiva/cpdgen.hpp"
#include "csiva/optim.hpp"
#include "csiva/tensor.hpp"

namespace csiva {

// Architecture of the dataset-to-graph network. Presets:
//   main-v1     hidden 128, 12 encoder / 4 decoder layers, 8 heads
//   appendix-v2 hidden 128, 10 encoder / 2 decoder layers, 8 heads
//   desk        hidden 32, 4 encoder / 2 decoder layers, 4 heads
struct ModelConfig {
  int n_nodes_max = 5;
  int hidden = 128;
  int encoder_layers = 12;  // alternating node-axis / sample-axis, node first
  int decoder_layers = 4;
  int heads = 8;
  int value_mlp_hidden = 64;
  bool discrete = true;  // family mode: discrete-K or continuous
  int k = 3;             // categories when discrete
  bool prenorm = true;   // false: post-norm residual blocks
  bool sample_attention = true;  // false: replace sample-axis layers with node-axis

  void validate() const {
    if (n_nodes_max < 1) throw ConfigError("model: n_nodes_max must be >= 1");
    if (hidden < 4 || hidden % 2 != 0) throw ConfigError("model: hidden must be even and >= 4");
    if (heads < 1 || hidden % heads != 0)
      throw ConfigError("model: heads must divide hidden");
    if (encoder_layers < 2 || encoder_layers % 2 != 0)
      throw ConfigError("model: encoder_layers must be even and >= 2");
    if (decoder_layers < 1) throw ConfigError("model: decoder_layers must be >= 1");
    if (value_mlp_hidden < 1) throw ConfigError("model: value_mlp_hidden must be >= 1");
    if (discrete && k < 2) throw ConfigError("model: discrete mode needs k >= 2");
  }

  static ModelConfig preset(const std::string& name) {
    ModelConfig c;
    if (name == "main-v1") {
      c.hidden = 128; c.encoder_layers = 12; c.decoder_layers = 4; c.heads = 8;
      c.value_mlp_hidden = 64;
    } else if (name == "appendix-v2") {
      c.hidden = 128; c.encoder_layers = 10; c.decoder_layers = 2; c.heads = 8;
      c.value_mlp_hidden = 64;
    } else if (name == "desk") {
      c.hidden = 32; c.encoder_layers = 4; c.decoder_layers = 2; c.heads = 4;
      c.value_mlp_hidden = 32;
    } else {
      throw ConfigError("unknown preset: " + name + " (use main-v1, appendix-v2, desk)");
    }
    return c;
  }

  std::string to_text() const {
    std::string s;
    s += "n_nodes_max=" + std::to_string(n_nodes_max) + "\n";
    s += "hidden=" + std::to_string(hidden) + "\n";
    s += "encoder_layers=" + std::to_string(encoder_layers) + "\n";
    s += "decoder_layers=" + std::to_string(decoder_layers) + "\n";
    s += "heads=" + std::to_string(heads) + "\n";
    s += "value_mlp_hidden=" + std::to_string(value_mlp_hidden) + "\n";
    s += std::string("family_mode=") + (discrete ? "discrete" : "continuous") + "\n";
    s += "k=" + std::to_string(k) + "\n";
    s += std::string("prenorm=") + (prenorm ? "1" : "0") + "\n";
    s += std::string("sample_attention=") + (sample_attention ? "1" : "0") + "\n";
    return s;
  }

  static ModelConfig from_text(const std::string& text) {
    ModelConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("model config: bad line: " + line);
      std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "n_nodes_max") c.n_nodes_max = std::stoi(val);
      else if (key == "hidden") c.hidden = std::stoi(val);
      else if (key == "encoder_layers") c.encoder_layers = std::stoi(val);
      else if (key == "decoder_layers") c.decoder_layers = std::stoi(val);
      else if (key == "heads") c.heads = std::stoi(val);
      else if (key == "value_mlp_hidden") c.value_mlp_hidden = std::stoi(val);
      else if (key == "family_mode") c.discrete = val == "discrete";
      else if (key == "k") c.k = std::stoi(val);
      else if (key == "prenorm") c.prenorm = val == "1";
      else if (key == "sample_attention") c.sample_attention = val == "1";
      else throw ConfigError("model config: unknown key: " + key);
    }
    c.validate();
    return c;
  }
};

// Output of one prediction: per-entry Bernoulli parameters (row-major, entry
// (k, l) = parent indicator), the thresholded graph, and the log-likelihood
// of the emitted bit sequence.
struct GraphPrediction {
  int n = 0;
  std::vector<double> probs;  // n * n
  AdjacencyMatrix greedy;
  double loglik = 0.0;
};

template <class Real>
class CsivaModel {
  using T = num::Tensor<Real>;
  using G = num::Graph<Real>;
  using Shape = num::Shape;

 public:
  ModelConfig cfg;

  CsivaModel(ModelConfig config, uint64_t init_seed) : cfg(config) {
    cfg.validate();
    Rng rng(init_seed);
    build_params(rng);
  }

  num::ParamStore<Real>& params() { return store_; }

  // ----- embedding -----
  // The lattice is (N+1) x (S+1) x H. Rows 0..N-1 are nodes, row N carries
  // the intervention marker of each sample. Column S is the summary column.
  // Each cell's first H/2 dims come from a per-row MLP of the cell value
  // (zeros in the summary column); the last H/2 dims are a fixed sinusoidal
  // embedding of the row index, shared along the row.
  T embed(G& g, const Dataset& d) {
    check_compatible(d);
    int n = d.n, s = d.s;
    int h2 = cfg.hidden / 2;
    std::vector<T> rows;
    rows.reserve(n + 1);
    std::vector<Real> onehot;
    for (int r = 0; r <= n; ++r) {
      T value_in = [&] {
        if (r == n) {  // marker row: one-hot over {observational, node 1..N}
          int width = cfg.n_nodes_max + 1;
          onehot.assign(static_cast<size_t>(s) * width, Real(0));
          for (int row = 0; row < s; ++row) {
            int m = d.markers[row];
            onehot[static_cast<size_t>(row) * width + (m == -1 ? 0 : m)] = Real(1);
          }
          return num::constant(g, Shape::mat(s, width), onehot.data());
        }
        if (cfg.discrete) {
          onehot.assign(static_cast<size_t>(s) * cfg.k, Real(0));
          for (int row = 0; row < s; ++row) {
            double v = d.value(row, r);
            if (v != std::floor(v) || v < 1 || v > cfg.k)
              throw ValidationError("embed: category out of range at sample " +
                                    std::to_string(row));
            onehot[static_cast<size_t>(row) * cfg.k + static_cast<size_t>(v) - 1] = Real(1);
          }
          return num::constant(g, Shape::mat(s, cfg.k), onehot.data());
        }
        onehot.resize(static_cast<size_t>(s));
        for (int row = 0; row < s; ++row) onehot[row] = static_cast<Real>(d.value(row, r));
        return num::constant(g, Shape::mat(s, 1), onehot.data());
      }();
      ValueMlp& m = r == n ? marker_mlp_ : value_mlp_[r];
      T hidden = num::relu(num::add_vec(num::matmul(value_in, num::leaf(g, *m.w1)),
                                        num::leaf(g, *m.b1)));
      T vh = num::add_vec(num::matmul(hidden, num::leaf(g, *m.w2)), num::leaf(g, *m.b2));
      T vfull = num::concat0<Real>({vh, num::zeros(g, Shape::mat(1, h2))});
      std::vector<Real> ident(static_cast<size_t>(s + 1) * h2);
      std::vector<Real> one = identity_embedding(r);
      for (int row = 0; row <= s; ++row)
        std::copy(one.begin(), one.end(), ident.begin() + static_cast<size_t>(row) * h2);
      T id_t = num::constant(g, Shape::mat(s + 1, h2), ident.data());
      rows.push_back(num::concat_last<Real>({vfull, id_t}));
    }
    return num::stack0(rows);
  }

  // ----- encoder -----
  // Alternating attention: even layers attend across nodes within one sample
  // (node axis), odd layers across samples of one node (sample axis). With
  // sample attention disabled every layer uses the node axis. The summary is
  // then read per node row by attention with the summary-column embedding as
  // the query over the S data columns. Returns N x H.
  T encode(G& g, const Dataset& d) {
    T x = embed(g, d);
    int n = d.n, s = d.s;
    for (int l = 0; l < cfg.encoder_layers; ++l) {
      bool node_axis = (l % 2 == 0) || !cfg.sample_attention;
      if (node_axis) {
        x = num::transpose01(x);
        x = block(g, x, enc_[l], nullptr);
        x = num::transpose01(x);
      } else {
        x = block(g, x, enc_[l], nullptr);
      }
    }
    if (cfg.prenorm) x = ln(g, x, final_ln_);
    T x_nodes = num::slice_rows(x, 0, n);          // marker row feeds attention only
    T q = num::slice_cols(x_nodes, s, s + 1);      // N x 1 x H
    T kv = num::slice_cols(x_nodes, 0, s);         // N x S x H
    T e = mha(g, q, kv, summary_, nullptr);
    return num::reshape(e, Shape::mat(n, cfg.hidden));
  }

  // ----- decoder -----
  // Emits the N^2 adjacency entries row-major, conditioned on the summary via
  // cross-attention. Teacher forcing feeds the ground-truth previous bits and
  // returns the full probability tensor differentiably.
  T decode_teacher(G& g, T summary, const AdjacencyMatrix& truth) {
    int n = truth.n;
    if (summary.shape().d[0] != n)
      throw ValidationError("decode_teacher: truth size does not match the summary");
    int t_len = n * n;
    std::vector<int> tokens(static_cast<size_t>(t_len));
    tokens[0] = 2;  // begin-of-sequence
    for (int t = 1; t < t_len; ++t) tokens[t] = truth.bits[t - 1] ? 1 : 0;
    T probs = dec_forward(g, summary, tokens, n);
    return num::reshape(probs, Shape::mat(n, n));
  }

  // Greedy decoding: each step consumes the previously emitted bits.
  // Bernoulli parameter > 0.5 emits 1; exactly 0.5 resolves to 0.
  GraphPrediction decode_greedy(const Dataset& d, const std::vector<Real>& summary_values) {
    int n = d.n;
    int t_len = n * n;
    GraphPrediction out;
    out.n = n;
    out.greedy = AdjacencyMatrix(n);
    out.probs.resize(static_cast<size_t>(t_len));
    std::vector<int> tokens;
    tokens.push_back(2);
    for (int t = 0; t < t_len; ++t) {
      G g;
      g.inference = true;
      T summary = num::constant(g, Shape::mat(n, cfg.hidden), summary_values);
      T probs = dec_forward(g, summary, tokens, n);
      double p = double(probs.val()[t]);
      out.probs[t] = p;
      int bit = p > 0.5 ? 1 : 0;
      out.greedy.bits[t] = static_cast<uint8_t>(bit);
      double pc = std::min(1.0 - 1e-7, std::max(1e-7, p));
      out.loglik += std::log(bit ? pc : 1.0 - pc);
      tokens.push_back(bit);
    }
    return out;
  }

  // ----- auxiliary head -----
  // Shared two-layer MLP from each summary vector to 2N logits: the node's
  // parent-row and child-column indicators. Train-time regularizer only.
  T aux_logits(G& g, T summary, int n) {
    T h = num::relu(num::add_vec(num::matmul(summary, num::leaf(g, *aux_w1_)),
                                 num::leaf(g, *aux_b1_)));
    T full = num::add_vec(num::matmul(h, num::leaf(g, *aux_w2_)), num::leaf(g, *aux_b2_));
    T parents = num::slice_last(full, 0, n);
    T children = num::slice_last(full, cfg.n_nodes_max, cfg.n_nodes_max + n);
    return num::concat_last<Real>({parents, children});
  }

  // Full greedy prediction for one dataset (inference only, no gradients).
  GraphPrediction predict(const Dataset& d) {
    G g;
    g.inference = true;
    T summary = encode(g, d);
    return decode_greedy(d, summary.val());
  }

  // Log-likelihood of the ground-truth bit sequence under teacher forcing,
  // with the same probability clamp the training loss uses.
  double teacher_loglik(const Dataset& d) {
    G g;
    g.inference = true;
    T summary = encode(g, d);
    T probs = decode_teacher(g, summary, d.truth);
    const auto& pv = probs.val();
    double ll = 0;
    for (size_t i = 0; i < pv.size(); ++i) {
      double p = std::min(1.0 - 1e-7, std::max(1e-7, double(pv[i])));
      ll += std::log(d.truth.bits[i] ? p : 1.0 - p);
    }
    return ll;
  }

  void check_compatible(const Dataset& d) const {
    if (d.n < 1) throw ValidationError("predict: empty dataset");
    if (d.n > cfg.n_nodes_max)
      throw CapabilityError("dataset has " + std::to_string(d.n) +
                            " nodes but the model supports at most " +
                            std::to_string(cfg.n_nodes_max));
    bool d_discrete = family_is_discrete(d.family);
    if (d_discrete != cfg.discrete)
      throw CapabilityError("dataset family mode does not match the model");
    if (cfg.discrete && d.k > cfg.k)
      throw CapabilityError("dataset has " + std::to_string(d.k) +
                            " categories but the model supports at most " +
                            std::to_string(cfg.k));
  }

  // ----- checkpoint format -----
  //
  // CSIVA-CKPT v1
  // <model config key=value lines>
  // params=<count>
  // param <name> <rank> <dims...> <size>
  // <size raw little-endian 64-bit floats> '\n'
  void save(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer assumes a little-endian host");
    std::string out = "CSIVA-CKPT v1\n";
    out += cfg.to_text();
    out += "params=" + std::to_string(store_.count()) + "\n";
    for (const num::Param<Real>& p : store_) {
      out += "param " + p.name + " " + std::to_string(p.shape.rank);
      for (int i = 0; i < p.shape.rank; ++i) out += " " + std::to_string(p.shape.d[i]);
      out += " " + std::to_string(p.w.size()) + "\n";
      std::vector<double> as64(p.w.begin(), p.w.end());
      size_t pos = out.size();
      out.resize(pos + as64.size() * 8);
      std::memcpy(out.data() + pos, as64.data(), as64.size() * 8);
      out += '\n';
    }
    write_file_atomic(path, out);
  }

  static CsivaModel load(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint reader assumes a little-endian host");
    std::string text = read_file(path);
    size_t pos = 0;
    auto next_line = [&]() -> std::string {
      size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) throw ValidationError("checkpoint: truncated header");
      std::string line = text.substr(pos, nl - pos);
      pos = nl + 1;
      return line;
    };
    if (next_line() != "CSIVA-CKPT v1") throw ValidationError("checkpoint: bad magic");
    std::string config_text;
    std::string line;
    size_t n_params = 0;
    for (;;) {
      line = next_line();
      if (line.rfind("params=", 0) == 0) {
        n_params = std::stoul(line.substr(7));
        break;
      }
      config_text += line + "\n";
    }
    CsivaModel model(ModelConfig::from_text(config_text), 0);
    if (n_params != model.store_.count())
      throw ValidationError("checkpoint: parameter count mismatch");
    for (size_t i = 0; i < n_params; ++i) {
      line = next_line();
      std::istringstream ls(line);
      std::string tag, name;
      int rank = 0;
      if (!(ls >> tag >> name >> rank) || tag != "param")
        throw ValidationError("checkpoint: bad param line: " + line);
      num::Shape shape;
      shape.rank = rank;
      for (int r = 0; r < rank; ++r)
        if (!(ls >> shape.d[r])) throw ValidationError("checkpoint: bad shape: " + line);
      size_t count = 0;
      if (!(ls >> count)) throw ValidationError("checkpoint: bad count: " + line);
      num::Param<Real>* p = model.store_.find(name);
      if (!p) throw ValidationError("checkpoint: unknown parameter " + name);
      if (!(p->shape == shape) || p->w.size() != count)
        throw ValidationError("checkpoint: shape mismatch for " + name);
      if (pos + count * 8 + 1 > text.size()) throw ValidationError("checkpoint: truncated data");
      std::vector<double> as64(count);
      std::memcpy(as64.data(), text.data() + pos, count * 8);
      pos += count * 8;
      if (text[pos] != '\n') throw ValidationError("checkpoint: missing separator");
      ++pos;
      for (size_t j = 0; j < count; ++j) p->w[j] = static_cast<Real>(as64[j]);
    }
    return model;
  }

 private:
  struct ValueMlp {
    num::Param<Real>*w1, *b1, *w2, *b2;
  };
  struct LnParams {
    num::Param<Real>*gain, *bias;
  };
  struct AttnParams {
    num::Param<Real>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  };
  struct FfParams {
    num::Param<Real>*w1, *b1, *w2, *b2;
  };
  struct Layer {
    LnParams ln1, ln2, ln3;  // ln3: decoder only (cross-attention norm)
    AttnParams attn, cross;  // cross: decoder only
    FfParams ff;
  };

  num::ParamStore<Real> store_;
  std::vector<ValueMlp> value_mlp_;
  ValueMlp marker_mlp_;
  std::vector<Layer> enc_, dec_;
  LnParams final_ln_, dec_final_ln_;
  AttnParams summary_;
  num::Param<Real>*tok_emb_, *row_emb_, *col_emb_, *head_w_, *head_b_;
  num::Param<Real>*aux_w1_, *aux_b1_, *aux_w2_, *aux_b2_;

  // Weight init: hidden layers N(0, 1/sqrt(fan_in)); output heads smaller,
  // N(0, 0.5/sqrt(fan_in)), so initial Bernoulli parameters sit near 0.5;
  // embeddings N(0, 0.5); biases zero; layer-norm gain one.
  num::Param<Real>* weight(const std::string& name, int in, int out, Rng& rng,
                           double scale = 1.0) {
    return &store_.add(name, num::Shape::mat(in, out), rng, scale / std::sqrt(double(in)));
  }
  num::Param<Real>* bias(const std::string& name, int n) {
    return &store_.add(name, num::Shape::vec(n));
  }
  LnParams make_ln(const std::string& name) {
    LnParams ln;
    ln.gain = &store_.add(name + ".gain", num::Shape::vec(cfg.hidden));
    for (Real& w : ln.gain->w) w = Real(1);
    ln.bias = bias(name + ".bias", cfg.hidden);
    return ln;
  }
  AttnParams make_attn(const std::string& name, Rng& rng) {
    AttnParams a;
    int h = cfg.hidden;
    a.wq = weight(name + ".wq", h, h, rng);
    a.bq = bias(name + ".bq", h);
    a.wk = weight(name + ".wk", h, h, rng);
    a.bk = bias(name + ".bk", h);
    a.wv = weight(name + ".wv", h, h, rng);
    a.bv = bias(name + ".bv", h);
    a.wo = weight(name + ".wo", h, h, rng);
    a.bo = bias(name + ".bo", h);
    return a;
  }
  FfParams make_ff(const std::string& name, Rng& rng) {
    FfParams f;
    int h = cfg.hidden;
    f.w1 = weight(name + ".w1", h, 4 * h, rng);
    f.b1 = bias(name + ".b1", 4 * h);
    f.w2 = weight(name + ".w2", 4 * h, h, rng);
    f.b2 = bias(name + ".b2", h);
    return f;
  }

  void build_params(Rng& rng) {
    int h = cfg.hidden, h2 = cfg.hidden / 2, v = cfg.value_mlp_hidden;
    int in_v = cfg.discrete ? cfg.k : 1;
    value_mlp_.resize(cfg.n_nodes_max);
    for (int i = 0; i < cfg.n_nodes_max; ++i) {
      std::string base = "value_mlp." + std::to_string(i);
      value_mlp_[i] = ValueMlp{weight(base + ".w1", in_v, v, rng), bias(base + ".b1", v),
                               weight(base + ".w2", v, h2, rng), bias(base + ".b2", h2)};
    }
    marker_mlp_ = ValueMlp{weight("marker_mlp.w1", cfg.n_nodes_max + 1, v, rng),
                           bias("marker_mlp.b1", v), weight("marker_mlp.w2", v, h2, rng),
                           bias("marker_mlp.b2", h2)};
    enc_.resize(cfg.encoder_layers);
    for (int l = 0; l < cfg.encoder_layers; ++l) {
      std::string base = "enc." + std::to_string(l);
      enc_[l].ln1 = make_ln(base + ".ln1");
      enc_[l].attn = make_attn(base + ".attn", rng);
      enc_[l].ln2 = make_ln(base + ".ln2");
      enc_[l].ff = make_ff(base + ".ff", rng);
    }
    final_ln_ = make_ln("enc.final_ln");
    summary_ = make_attn("summary", rng);
    tok_emb_ = &store_.add("dec.tok_emb", num::Shape::mat(3, h), rng, 0.5);
    row_emb_ = &store_.add("dec.row_emb", num::Shape::mat(cfg.n_nodes_max, h), rng, 0.5);
    col_emb_ = &store_.add("dec.col_emb", num::Shape::mat(cfg.n_nodes_max, h), rng, 0.5);
    dec_.resize(cfg.decoder_layers);
    for (int l = 0; l < cfg.decoder_layers; ++l) {
      std::string base = "dec." + std::to_string(l);
      dec_[l].ln1 = make_ln(base + ".ln1");
      dec_[l].attn = make_attn(base + ".self", rng);
      dec_[l].ln2 = make_ln(base + ".ln2");
      dec_[l].cross = make_attn(base + ".cross", rng);
      dec_[l].ln3 = make_ln(base + ".ln3");
      dec_[l].ff = make_ff(base + ".ff", rng);
    }
    dec_final_ln_ = make_ln("dec.final_ln");
    head_w_ = weight("dec.head.w", h, 1, rng, 0.5);
    head_b_ = bias("dec.head.b", 1);
    aux_w1_ = weight("aux.w1", h, 2 * h, rng);
    aux_b1_ = bias("aux.b1", 2 * h);
    aux_w2_ = weight("aux.w2", 2 * h, 2 * cfg.n_nodes_max, rng, 0.5);
    aux_b2_ = bias("aux.b2", 2 * cfg.n_nodes_max);
  }

  // Fixed sinusoidal embedding of the row index, H/2 wide; rows of the
  // lattice differ only here, which is what lets attention tell nodes apart.
  std::vector<Real> identity_embedding(int pos) const {
    int h2 = cfg.hidden / 2;
    std::vector<Real> e(static_cast<size_t>(h2));
    for (int i = 0; i < h2; i += 2) {
      double freq = std::pow(10000.0, -double(i) / double(h2));
      e[i] = static_cast<Real>(std::sin(pos * freq));
      if (i + 1 < h2) e[i + 1] = static_cast<Real>(std::cos(pos * freq));
    }
    return e;
  }

  T ln(G& g, T x, const LnParams& p) {
    return num::add_vec(num::mul_vec(num::layer_norm_last(x), num::leaf(g, *p.gain)),
                        num::leaf(g, *p.bias));
  }

  // Multi-head attention; q_in is B x M x H, kv is B x Mk x H. The optional
  // mask is M x Mk, 1 where attending is allowed.
  T mha(G& g, T q_in, T kv, const AttnParams& p, const std::vector<uint8_t>* mask) {
    int dh = cfg.hidden / cfg.heads;
    T q = num::add_vec(num::matmul(q_in, num::leaf(g, *p.wq)), num::leaf(g, *p.bq));
    T k = num::add_vec(num::matmul(kv, num::leaf(g, *p.wk)), num::leaf(g, *p.bk));
    T v = num::add_vec(num::matmul(kv, num::leaf(g, *p.wv)), num::leaf(g, *p.bv));
    std::vector<T> ctx;
    ctx.reserve(cfg.heads);
    for (int head = 0; head < cfg.heads; ++head) {
      T qh = num::slice_last(q, head * dh, (head + 1) * dh);
      T kh = num::slice_last(k, head * dh, (head + 1) * dh);
      T vh = num::slice_last(v, head * dh, (head + 1) * dh);
      ctx.push_back(num::scaled_dot_attention(qh, kh, vh, mask));
    }
    T merged = cfg.heads == 1 ? ctx[0] : num::concat_last(ctx);
    return num::add_vec(num::matmul(merged, num::leaf(g, *p.wo)), num::leaf(g, *p.bo));
  }

  T ff(G& g, T x, const FfParams& p) {
    T t = num::relu(num::add_vec(num::matmul(x, num::leaf(g, *p.w1)), num::leaf(g, *p.b1)));
    return num::add_vec(num::matmul(t, num::leaf(g, *p.w2)), num::leaf(g, *p.b2));
  }

  // One encoder block over B x M x H (attention along the middle axis).
  T block(G& g, T x, const Layer& l, const std::vector<uint8_t>* mask) {
    if (cfg.prenorm) {
      T t = ln(g, x, l.ln1);
      x = num::add(x, mha(g, t, t, l.attn, mask));
      return num::add(x, ff(g, ln(g, x, l.ln2), l.ff));
    }
    x = ln(g, num::add(x, mha(g, x, x, l.attn, mask)), l.ln1);
    return ln(g, num::add(x, ff(g, x, l.ff)), l.ln2);
  }

  // Decoder forward over the current token prefix; returns the Bernoulli
  // parameter sequence, one per position.
  T dec_forward(G& g, T summary, const std::vector<int>& tokens, int n) {
    int t_len = static_cast<int>(tokens.size());
    std::vector<int> ks(static_cast<size_t>(t_len)), ls(static_cast<size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      ks[t] = (t / n) % n;  // entry being predicted at this position
      ls[t] = t % n;
    }
    T x = num::add(num::add(num::gather_rows(num::leaf(g, *tok_emb_), tokens),
                            num::gather_rows(num::leaf(g, *row_emb_), ks)),
                   num::gather_rows(num::leaf(g, *col_emb_), ls));
    x = num::reshape(x, Shape::cube(1, t_len, cfg.hidden));
    T sum3 = num::reshape(summary, Shape::cube(1, summary.shape().d[0], cfg.hidden));
    std::vector<uint8_t> causal(static_cast<size_t>(t_len) * t_len, 0);
    for (int i = 0; i < t_len; ++i)
      for (int j = 0; j <= i; ++j) causal[static_cast<size_t>(i) * t_len + j] = 1;
    for (const Layer& l : dec_) {
      if (cfg.prenorm) {
        T t = ln(g, x, l.ln1);
        x = num::add(x, mha(g, t, t, l.attn, &causal));
        x = num::add(x, mha(g, ln(g, x, l.ln2), sum3, l.cross, nullptr));
        x = num::add(x, ff(g, ln(g, x, l.ln3), l.ff));
      } else {
        x = ln(g, num::add(x, mha(g, x, x, l.attn, &causal)), l.ln1);
        x = ln(g, num::add(x, mha(g, x, sum3, l.cross, nullptr)), l.ln2);
        x = ln(g, num::add(x, ff(g, x, l.ff)), l.ln3);
      }
    }
    if (cfg.prenorm) x = ln(g, x, dec_final_ln_);
    T flat = num::reshape(x, Shape::mat(t_len, cfg.hidden));
    T z = num::add_vec(num::matmul(flat, num::leaf(g, *head_w_)), num::leaf(g, *head_b_));
    return num::sigmoid(num::reshape(z, Shape::vec(t_len)));
  }
};

}  // namespace csiva

#endif  // CSIVA_MODEL_HPP
