#ifndef CSIVA_ADJACENCY_HPP
#define CSIVA_ADJACENCY_HPP

#include <cstdint>
#include <cstdlib>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "csiva/common.hpp"

namespace csiva {

// Dense directed-graph adjacency matrix. Entry (k, l) == 1 means there is an
// edge X_l -> X_k, so row k lists the parents of node k.
struct AdjacencyMatrix {
  int n = 0;
  std::vector<uint8_t> bits;  // row-major, n * n

  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int nodes)
      : n(nodes), bits(static_cast<size_t>(nodes) * static_cast<size_t>(nodes), 0) {
    if (nodes < 0) throw ValidationError("adjacency: negative node count");
  }

  uint8_t& at(int k, int l) { return bits[static_cast<size_t>(k) * n + l]; }
  uint8_t at(int k, int l) const { return bits[static_cast<size_t>(k) * n + l]; }

  int edge_count() const {
    int c = 0;
    for (uint8_t b : bits) c += b;
    return c;
  }

  std::vector<int> parents(int k) const {
    std::vector<int> out;
    for (int l = 0; l < n; ++l)
      if (at(k, l)) out.push_back(l);
    return out;
  }

  bool operator==(const AdjacencyMatrix& o) const = default;
};

inline int hamming(const AdjacencyMatrix& a, const AdjacencyMatrix& b) {
  if (a.n != b.n) throw ShapeError("hamming: node counts differ");
  int d = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) d += std::abs(int(a.bits[i]) - int(b.bits[i]));
  return d;
}

// Kahn's algorithm; among ready nodes the smallest index is emitted first.
// Returns empty if the graph has a cycle.
inline std::vector<int> topo_order_or_empty(const AdjacencyMatrix& a) {
  std::vector<int> indeg(a.n, 0);  // number of parents not yet emitted
  for (int k = 0; k < a.n; ++k)
    for (int l = 0; l < a.n; ++l)
      if (a.at(k, l)) ++indeg[k];
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int k = 0; k < a.n; ++k)
    if (indeg[k] == 0) ready.push(k);
  std::vector<int> order;
  order.reserve(a.n);
  while (!ready.empty()) {
    int l = ready.top();
    ready.pop();
    order.push_back(l);
    for (int k = 0; k < a.n; ++k)
      if (a.at(k, l) && --indeg[k] == 0) ready.push(k);
  }
  if (static_cast<int>(order.size()) != a.n) order.clear();
  return order;
}

inline bool is_acyclic(const AdjacencyMatrix& a) {
  return a.n == 0 || !topo_order_or_empty(a).empty();
}

inline std::vector<int> topo_order(const AdjacencyMatrix& a) {
  std::vector<int> order = topo_order_or_empty(a);
  if (a.n > 0 && order.empty()) throw ValidationError("topo_order: graph has a cycle");
  return order;
}

// Relabels nodes: output(perm[k], perm[l]) = input(k, l).
inline AdjacencyMatrix permute_nodes(const AdjacencyMatrix& a, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != a.n)
    throw ValidationError("permute_nodes: permutation size mismatch");
  std::vector<uint8_t> seen(a.n, 0);
  for (int p : perm) {
    if (p < 0 || p >= a.n || seen[p]) throw ValidationError("permute_nodes: not a bijection");
    seen[p] = 1;
  }
  AdjacencyMatrix out(a.n);
  for (int k = 0; k < a.n; ++k)
    for (int l = 0; l < a.n; ++l)
      if (a.at(k, l)) out.at(perm[k], perm[l]) = 1;
  return out;
}

// Text block: first line N, then N lines of N space-separated 0/1 entries,
// row k holding the parent indicators of node k.
inline std::string to_text(const AdjacencyMatrix& a) {
  std::string out = std::to_string(a.n);
  out += '\n';
  for (int k = 0; k < a.n; ++k) {
    for (int l = 0; l < a.n; ++l) {
      if (l) out += ' ';
      out += a.at(k, l) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline AdjacencyMatrix adjacency_from_stream(std::istream& in) {
  int n = -1;
  if (!(in >> n) || n < 0) throw ValidationError("adjacency text: bad node count");
  AdjacencyMatrix a(n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      int v = -1;
      if (!(in >> v) || (v != 0 && v != 1))
        throw ValidationError("adjacency text: entries must be 0 or 1");
      a.at(k, l) = static_cast<uint8_t>(v);
    }
  return a;
}

inline AdjacencyMatrix adjacency_from_text(const std::string& text) {
  std::istringstream in(text);
  return adjacency_from_stream(in);
}

}  // namespace csiva

#endif  // CSIVA_ADJACENCY_HPP
