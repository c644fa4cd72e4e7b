#ifndef CSIVA_GRAPHGEN_HPP
#define CSIVA_GRAPHGEN_HPP

#include <algorithm>
#include <numeric>

#include "csiva/adjacency.hpp"
#include "csiva/rng.hpp"

namespace csiva {

// Erdos-Renyi DAG family with expected degree d: expected edge count N*d/2.
struct GraphDistributionSpec {
  int n_nodes = 0;
  double er_degree = 1.0;
  uint64_t rng_seed = 0;

  void validate() const {
    if (n_nodes < 1) throw ValidationError("graph spec: n_nodes must be >= 1");
    if (!(er_degree > 0.0)) throw ValidationError("graph spec: er_degree must be > 0");
  }
};

// Samples each strictly-lower-triangular entry Bernoulli(min(1, d/(N-1))),
// which is acyclic by construction, then applies a uniformly random node
// relabeling so the topological order carries no information.
inline AdjacencyMatrix sample_dag(int n_nodes, double er_degree, Rng& rng) {
  GraphDistributionSpec{n_nodes, er_degree, 0}.validate();
  AdjacencyMatrix a(n_nodes);
  if (n_nodes > 1) {
    double p = std::min(1.0, er_degree / (n_nodes - 1));
    for (int k = 1; k < n_nodes; ++k)
      for (int l = 0; l < k; ++l)
        if (rng.bernoulli(p)) a.at(k, l) = 1;
  }
  std::vector<int> perm(static_cast<size_t>(n_nodes));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  return permute_nodes(a, perm);
}

inline AdjacencyMatrix sample_dag(const GraphDistributionSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  return sample_dag(spec.n_nodes, spec.er_degree, rng);
}

}  // namespace csiva

#endif  // CSIVA_GRAPHGEN_HPP
