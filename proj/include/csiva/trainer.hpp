#ifndef CSIVA_TRAINER_HPP
#define CSIVA_TRAINER_HPP

#include <ostream>
#include <string>
#include <vector>

#include "csiva/model.hpp"

namespace csiva {

// Distribution over (graph, mechanism, dataset) triples used for training
// and evaluation. One spec describes one cell of the generator grid.
struct DataSpec {
  int n_nodes = 5;
  double er_degree = 1.0;
  Family family = Family::dirichlet;
  double alpha = 0.1;  // Dirichlet / table concentration
  int k = 3;           // categories for the discrete families
  int samples = 200;
  double fraction = 0.8;  // interventional share of the samples
  Regime regime = Regime::hard;

  void validate() const {
    if (n_nodes < 1) throw ConfigError("data: n_nodes must be >= 1");
    if (!(er_degree > 0)) throw ConfigError("data: er_degree must be > 0");
    if (samples < 1) throw ConfigError("data: samples must be >= 1");
    if (fraction < 0 || fraction > 1) throw ConfigError("data: fraction must be in [0, 1]");
    if (family_is_discrete(family) && k < 2) throw ConfigError("data: k must be >= 2");
    if (alpha <= 0) throw ConfigError("data: alpha must be > 0");
    if (regime == Regime::soft && family != Family::dirichlet)
      throw ConfigError("data: soft interventions need the dirichlet family");
  }
};

// One labelled example: a sampled graph, mechanisms on it, and a dataset
// drawn from them. Everything is derived from the one seed.
inline Dataset make_pair(const DataSpec& spec, uint64_t seed) {
  spec.validate();
  AdjacencyMatrix graph = sample_dag(
      GraphDistributionSpec{spec.n_nodes, spec.er_degree, derive_seed(seed, 0x67726170)});
  CpdHyper hyper;
  hyper.k = spec.k;
  hyper.alpha = spec.alpha;
  CbnSpec cbn = make_cbn(graph, spec.family, hyper, derive_seed(seed, 0x6d656368));
  return sample_dataset(cbn, spec.samples, spec.fraction, spec.regime,
                        derive_seed(seed, 0x64617461));
}

struct TrainConfig {
  DataSpec data;
  int iterations = 20000;
  double lr = 1e-4;
  double aux_weight = 1.0;
  double clip_norm = 0.0;  // 0 disables clipping
  uint64_t seed = 1;
  int pool_size = 0;   // 0: fresh pair every iteration; else cycle a fixed pool
  int eval_every = 0;  // 0: no held-out evaluation during training
  int eval_pairs = 64;
  // When non-empty, each training pair draws its interventional fraction
  // from this set instead of data.fraction (uniformly, per iteration).
  std::vector<double> mixed_fractions;

  void validate() const {
    data.validate();
    if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
    if (lr <= 0) throw ConfigError("train: lr must be > 0");
    if (aux_weight < 0) throw ConfigError("train: aux_weight must be >= 0");
    if (clip_norm < 0) throw ConfigError("train: clip_norm must be >= 0");
    if (pool_size < 0) throw ConfigError("train: pool_size must be >= 0");
    if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
    if (eval_pairs < 1) throw ConfigError("train: eval_pairs must be >= 1");
    for (double f : mixed_fractions)
      if (f < 0 || f > 1) throw ConfigError("train: mixed fraction out of [0, 1]");
  }
};

// Cross-entropy of the adjacency bits under the predicted Bernoulli
// parameters, summed over all N^2 entries. Probabilities are clamped to
// [1e-7, 1 - 1e-7] before the logs.
template <class Real>
num::Tensor<Real> ce_loss(num::Graph<Real>& g, num::Tensor<Real> probs,
                          const AdjacencyMatrix& truth) {
  int n = truth.n;
  if (probs.shape().size() != static_cast<size_t>(n) * n)
    throw ValidationError("ce_loss: probability count does not match the graph");
  std::vector<Real> t(truth.bits.begin(), truth.bits.end());
  num::Tensor<Real> target = num::constant(g, probs.shape(), t.data());
  num::Tensor<Real> pc = num::clamp(probs, Real(1e-7), Real(1.0 - 1e-7));
  num::Tensor<Real> one = num::constant(g, probs.shape(), std::vector<Real>(t.size(), Real(1)));
  num::Tensor<Real> pos = num::mul(target, num::log_t(pc));
  num::Tensor<Real> neg = num::mul(num::sub(one, target), num::log_t(num::sub(one, pc)));
  return num::affine(num::sum_all(num::add(pos, neg)), Real(-1), Real(0));
}

// Auxiliary loss: sigmoid cross-entropy of each node's parent row and child
// column against the N x 2N logit matrix, summed over all 2N^2 entries.
template <class Real>
num::Tensor<Real> aux_loss(num::Graph<Real>& g, num::Tensor<Real> logits,
                           const AdjacencyMatrix& truth) {
  int n = truth.n;
  if (logits.shape().size() != static_cast<size_t>(n) * 2 * n)
    throw ValidationError("aux_loss: logit count does not match the graph");
  std::vector<Real> t(static_cast<size_t>(n) * 2 * n);
  for (int node = 0; node < n; ++node)
    for (int j = 0; j < n; ++j) {
      t[static_cast<size_t>(node) * 2 * n + j] = Real(truth.at(node, j));      // parents
      t[static_cast<size_t>(node) * 2 * n + n + j] = Real(truth.at(j, node));  // children
    }
  num::Tensor<Real> target = num::constant(g, logits.shape(), t.data());
  num::Tensor<Real> p = num::clamp(num::sigmoid(logits), Real(1e-7), Real(1.0 - 1e-7));
  num::Tensor<Real> one =
      num::constant(g, logits.shape(), std::vector<Real>(t.size(), Real(1)));
  num::Tensor<Real> pos = num::mul(target, num::log_t(p));
  num::Tensor<Real> neg = num::mul(num::sub(one, target), num::log_t(num::sub(one, p)));
  return num::affine(num::sum_all(num::add(pos, neg)), Real(-1), Real(0));
}

struct TrainResult {
  int iterations = 0;
  double final_loss = 0.0;
  double final_ce = 0.0;
  double final_aux = 0.0;
  // (iteration, mean greedy Hamming distance on the held-out pairs)
  std::vector<std::pair<int, double>> heldout;
};

// Training pair for one iteration index; honors the mixed-fraction mode.
inline Dataset pair_for_iteration(const TrainConfig& cfg, uint64_t index) {
  DataSpec spec = cfg.data;
  if (!cfg.mixed_fractions.empty()) {
    uint64_t pick = derive_seed(cfg.seed, 0x66726163, index) % cfg.mixed_fractions.size();
    spec.fraction = cfg.mixed_fractions[static_cast<size_t>(pick)];
  }
  return make_pair(spec, derive_seed(cfg.seed, 0x70616972, index));
}

// Mean greedy Hamming distance over a fixed set of held-out pairs drawn
// from the spec with seeds independent of the training stream.
template <class Real>
double heldout_hamming(CsivaModel<Real>& model, const DataSpec& spec, uint64_t seed,
                       int pairs) {
  double total = 0;
  for (int j = 0; j < pairs; ++j) {
    Dataset d = make_pair(spec, derive_seed(seed, 0x6576616c, static_cast<uint64_t>(j)));
    GraphPrediction pred = model.predict(d);
    total += hamming(pred.greedy, d.truth);
  }
  return total / pairs;
}

// Single-example training: each iteration samples one (dataset, graph) pair,
// runs teacher forcing, and takes one Adam step on the summed loss
// ce + aux_weight * aux. Metric lines go to `log` as
//   iter=<l> loss=<v> ce=<v> aux=<v> [heldout_hamming=<v>]
// with 1-based iterations and full-precision values.
template <class Real>
TrainResult train(CsivaModel<Real>& model, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.data.n_nodes > model.cfg.n_nodes_max)
    throw CapabilityError("train: data has more nodes than the model supports");
  num::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  num::Adam<Real> adam(ac);
  std::vector<Dataset> pool;
  for (int j = 0; j < cfg.pool_size; ++j)
    pool.push_back(pair_for_iteration(cfg, static_cast<uint64_t>(j)));
  TrainResult res;
  res.iterations = cfg.iterations;
  Dataset fresh;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    if (cfg.pool_size == 0) fresh = pair_for_iteration(cfg, static_cast<uint64_t>(iter - 1));
    const Dataset& d = cfg.pool_size > 0
                           ? pool[static_cast<size_t>((iter - 1) % cfg.pool_size)]
                           : fresh;
    double loss_v, ce_v, aux_v;
    try {
      num::Graph<Real> g;
      num::Tensor<Real> summary = model.encode(g, d);
      num::Tensor<Real> probs = model.decode_teacher(g, summary, d.truth);
      num::Tensor<Real> ce = ce_loss(g, probs, d.truth);
      num::Tensor<Real> aux = aux_loss(g, model.aux_logits(g, summary, d.n), d.truth);
      num::Tensor<Real> total = num::add(ce, num::affine(aux, Real(cfg.aux_weight), Real(0)));
      loss_v = double(total.scalar());
      ce_v = double(ce.scalar());
      aux_v = double(aux.scalar());
      g.backward(total);
      adam.step(model.params());
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(iter) + " (seed " +
                         std::to_string(cfg.seed) + "): " + e.what());
    }
    res.final_loss = loss_v;
    res.final_ce = ce_v;
    res.final_aux = aux_v;
    bool do_eval = cfg.eval_every > 0 &&
                   (iter % cfg.eval_every == 0 || iter == cfg.iterations);
    double hh = 0;
    if (do_eval) {
      hh = heldout_hamming(model, cfg.data, cfg.seed, cfg.eval_pairs);
      res.heldout.emplace_back(iter, hh);
    }
    if (log) {
      *log << "iter=" << iter << " loss=" << format_double(loss_v)
           << " ce=" << format_double(ce_v) << " aux=" << format_double(aux_v);
      if (do_eval) *log << " heldout_hamming=" << format_double(hh);
      *log << "\n";
    }
  }
  if (cfg.iterations == 0 && cfg.eval_every > 0) {  // evaluate-only run
    double hh = heldout_hamming(model, cfg.data, cfg.seed, cfg.eval_pairs);
    res.heldout.emplace_back(0, hh);
    if (log) *log << "iter=0 heldout_hamming=" << format_double(hh) << "\n";
  }
  return res;
}

}  // namespace csiva

#endif  // CSIVA_TRAINER_HPP
