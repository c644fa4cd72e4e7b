#ifndef CSIVA_EVALBENCH_HPP
#define CSIVA_EVALBENCH_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "csiva/trainer.hpp"

namespace csiva {

// Anything that maps a dataset to a graph estimate can be benchmarked.
using Predictor = std::function<AdjacencyMatrix(const Dataset&)>;

template <class Real>
Predictor model_predictor(CsivaModel<Real>& model) {
  return [&model](const Dataset& d) { return model.predict(d).greedy; };
}

// Short stable label for one generator cell, used in report lines.
inline std::string spec_label(const DataSpec& spec) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "n%d-d%g-%s-a%g-k%d-s%d-f%g-%s", spec.n_nodes,
                spec.er_degree, family_name(spec.family), spec.alpha, spec.k,
                spec.samples, spec.fraction, regime_name(spec.regime));
  return buf;
}

struct EvalReport {
  std::string train_cell;  // label of the distribution the model was trained on
  std::string test_cell;
  std::vector<double> hammings;  // one per evaluated pair
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double all_absent_mean = 0.0;  // baseline: Hamming of the empty graph
  double acyclic_fraction = 0.0;
  double runtime_seconds = 0.0;
  std::string fingerprint;  // hash of the per-pair results

  // Per-pair lines, then one machine-parsable summary line.
  std::string to_text() const {
    std::string s;
    for (size_t i = 0; i < hammings.size(); ++i)
      s += "pair=" + std::to_string(i) + " hamming=" + format_double(hammings[i]) + "\n";
    s += "cell=" + train_cell + "x" + test_cell + " mean=" + format_double(mean) +
         " std=" + format_double(stddev) + " n=" + std::to_string(hammings.size()) + "\n";
    s += "baseline_all_absent=" + format_double(all_absent_mean) +
         " acyclic_fraction=" + format_double(acyclic_fraction) +
         " runtime_seconds=" + format_double(runtime_seconds) +
         " fingerprint=" + fingerprint + "\n";
    return s;
  }
};

// Evaluate a predictor on fresh pairs from one generator cell. The pair
// stream depends only on (spec, seed), never on the predictor.
inline EvalReport eval_model(const Predictor& predict, const DataSpec& test_spec,
                             int pairs, uint64_t seed,
                             const std::string& train_cell = "self") {
  test_spec.validate();
  if (pairs < 1) throw ConfigError("eval: pairs must be >= 1");
  EvalReport rep;
  rep.train_cell = train_cell;
  rep.test_cell = spec_label(test_spec);
  auto t0 = std::chrono::steady_clock::now();
  int acyclic = 0;
  double sum = 0, sumsq = 0, baseline = 0;
  std::string trace;
  for (int i = 0; i < pairs; ++i) {
    Dataset d = make_pair(test_spec, derive_seed(seed, 0x65706169, static_cast<uint64_t>(i)));
    AdjacencyMatrix est = predict(d);
    double h = hamming(est, d.truth);
    rep.hammings.push_back(h);
    sum += h;
    sumsq += h * h;
    baseline += d.truth.edge_count();
    if (is_acyclic(est)) ++acyclic;
    trace += format_double(h) + ";";
  }
  rep.mean = sum / pairs;
  double var = sumsq / pairs - rep.mean * rep.mean;
  rep.stddev = var > 0 ? std::sqrt(var) : 0.0;
  rep.all_absent_mean = baseline / pairs;
  rep.acyclic_fraction = double(acyclic) / pairs;
  rep.fingerprint = hex64(fnv1a64(rep.test_cell + "|" + trace));
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct OodGrid {
  std::vector<EvalReport> reports;
  std::string csv;  // cell,mean,std,n,baseline,acyclic_fraction
};

// Out-of-distribution grid: one trained predictor, many test cells.
inline OodGrid ood_grid(const Predictor& predict, const std::string& train_cell,
                        const std::vector<DataSpec>& test_cells, int pairs, uint64_t seed) {
  OodGrid grid;
  grid.csv = "cell,mean,std,n,baseline,acyclic_fraction\n";
  for (size_t c = 0; c < test_cells.size(); ++c) {
    EvalReport rep = eval_model(predict, test_cells[c], pairs,
                                derive_seed(seed, 0x67726964, c), train_cell);
    grid.csv += rep.test_cell + "," + format_double(rep.mean) + "," +
                format_double(rep.stddev) + "," + std::to_string(pairs) + "," +
                format_double(rep.all_absent_mean) + "," +
                format_double(rep.acyclic_fraction) + "\n";
    grid.reports.push_back(std::move(rep));
  }
  return grid;
}

struct SweepPoint {
  double x = 0.0;  // swept value (fraction or sample count)
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::string csv;
};

// Structure recovery as a function of the interventional share of each
// test dataset. Every fraction reuses the same underlying pair seeds, so
// the curve differences come from the data regime, not sampling noise.
inline SweepResult sweep_interventions(const Predictor& predict, const DataSpec& base,
                                       const std::vector<double>& fractions, int pairs,
                                       uint64_t seed,
                                       const std::string& train_cell = "self") {
  SweepResult out;
  out.csv = "fraction,mean,std,n\n";
  for (double f : fractions) {
    DataSpec spec = base;
    spec.fraction = f;
    EvalReport rep = eval_model(predict, spec, pairs, seed, train_cell);
    out.points.push_back(SweepPoint{f, rep.mean, rep.stddev});
    out.csv += format_double(f) + "," + format_double(rep.mean) + "," +
               format_double(rep.stddev) + "," + std::to_string(pairs) + "\n";
  }
  return out;
}

// Structure recovery as a function of the dataset size.
inline SweepResult sweep_samples(const Predictor& predict, const DataSpec& base,
                                 const std::vector<int>& sample_counts, int pairs,
                                 uint64_t seed, const std::string& train_cell = "self") {
  SweepResult out;
  out.csv = "samples,mean,std,n\n";
  for (int s : sample_counts) {
    DataSpec spec = base;
    spec.samples = s;
    EvalReport rep = eval_model(predict, spec, pairs, seed, train_cell);
    out.points.push_back(SweepPoint{double(s), rep.mean, rep.stddev});
    out.csv += std::to_string(s) + "," + format_double(rep.mean) + "," +
               format_double(rep.stddev) + "," + std::to_string(pairs) + "\n";
  }
  return out;
}

// Fraction of decoded graphs that are acyclic over fresh pairs.
inline double acyclicity_audit(const Predictor& predict, const DataSpec& spec, int pairs,
                               uint64_t seed) {
  return eval_model(predict, spec, pairs, seed).acyclic_fraction;
}

// Architecture resolved against one data cell: capacity follows the data.
inline ModelConfig arch_for(ModelConfig arch, const DataSpec& data) {
  arch.n_nodes_max = data.n_nodes;
  arch.discrete = family_is_discrete(data.family);
  if (arch.discrete) arch.k = data.k;
  arch.validate();
  return arch;
}

// Full grid protocol: train one model per train cell, evaluate each on every
// test cell. Row-major reports, train cell varying slowest.
template <class Real>
OodGrid ood_grid_trained(const ModelConfig& arch, const std::vector<TrainConfig>& train_cells,
                         const std::vector<DataSpec>& test_cells, int pairs, uint64_t seed) {
  OodGrid grid;
  grid.csv = "train,test,mean,std,n,baseline,acyclic_fraction\n";
  for (size_t t = 0; t < train_cells.size(); ++t) {
    TrainConfig tc = train_cells[t];
    tc.seed = derive_seed(seed, 0x74726169, t);
    CsivaModel<Real> model(arch_for(arch, tc.data), derive_seed(seed, 0x696e6974, t));
    train(model, tc, nullptr);
    std::string train_label = spec_label(tc.data);
    Predictor pred = model_predictor(model);
    for (size_t c = 0; c < test_cells.size(); ++c) {
      EvalReport rep = eval_model(pred, test_cells[c], pairs,
                                  derive_seed(seed, 0x67726964, c), train_label);
      grid.csv += train_label + "," + rep.test_cell + "," + format_double(rep.mean) + "," +
                  format_double(rep.stddev) + "," + std::to_string(pairs) + "," +
                  format_double(rep.all_absent_mean) + "," +
                  format_double(rep.acyclic_fraction) + "\n";
      grid.reports.push_back(std::move(rep));
    }
  }
  return grid;
}

// Appendix protocol for the intervention curve: one model trained with the
// per-dataset fraction drawn from `fractions`, then evaluated per fraction.
template <class Real>
SweepResult sweep_interventions_trained(const ModelConfig& arch, TrainConfig base,
                                        const std::vector<double>& fractions, int pairs,
                                        uint64_t seed) {
  base.mixed_fractions = fractions;
  base.seed = derive_seed(seed, 0x74726169);
  CsivaModel<Real> model(arch_for(arch, base.data), derive_seed(seed, 0x696e6974));
  train(model, base, nullptr);
  return sweep_interventions(model_predictor(model), base.data, fractions, pairs,
                             derive_seed(seed, 0x7377656f), spec_label(base.data));
}

// Sample-count curve from one model trained at the base dataset size.
template <class Real>
SweepResult sweep_samples_trained(const ModelConfig& arch, TrainConfig base,
                                  const std::vector<int>& sample_counts, int pairs,
                                  uint64_t seed) {
  base.seed = derive_seed(seed, 0x74726169);
  CsivaModel<Real> model(arch_for(arch, base.data), derive_seed(seed, 0x696e6974));
  train(model, base, nullptr);
  return sweep_samples(model_predictor(model), base.data, sample_counts, pairs,
                       derive_seed(seed, 0x7377656f), spec_label(base.data));
}

}  // namespace csiva

#endif  // CSIVA_EVALBENCH_HPP
