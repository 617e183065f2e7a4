#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deepnose/geom.hpp"
#include "deepnose/labels.hpp"

namespace deepnose {

// Undirected weighted graph; weights are dissimilarities (> 0, no self-loops).
struct WeightedGraph {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;

  explicit WeightedGraph(std::size_t nodes = 0) : n(nodes), adj(nodes) {}
  void add_edge(std::uint32_t u, std::uint32_t v, double w);
  std::size_t edge_count() const;
};

// Nodes: molecules whose mask includes the dataset block.  Edge iff the two
// molecules share >= 1 positive descriptor in that block; weight 1/shared.
WeightedGraph semantic_graph(const LabelTable& labels, DatasetId block, const DescriptorVocabulary& vocab,
                             std::vector<std::uint32_t>* node_cids = nullptr);

// Symmetrized (union) k-nearest-neighbor graph under Euclidean distance;
// zero distances between duplicate points are lifted to 1e-12.
WeightedGraph knn_graph(const std::vector<std::vector<double>>& features, std::size_t k);

struct GeodesicResult {
  std::vector<std::uint32_t> nodes;  // indices into the input graph, ascending
  std::vector<double> dist;          // [m][m] row-major over `nodes`
  std::vector<std::uint32_t> excluded;  // nodes outside the largest component

  double at(std::size_t i, std::size_t j) const { return dist[i * nodes.size() + j]; }
};

// Keeps each node's k_prune shortest incident edges (union-symmetrized), then
// runs all-pairs shortest paths on the largest connected component.
GeodesicResult geodesic_distances(const WeightedGraph& g, std::size_t k_prune);

struct Embedding3 {
  std::vector<std::array<double, 3>> coords;
  std::array<double, 3> eigenvalues{};  // non-increasing
  double stress = 0;                    // Kruskal stress-1 against the input distances
  std::vector<std::string> warnings;
};

// Classical MDS: double-center B = -1/2 J D^2 J, extract the top three
// eigenpairs by power iteration with deflation (start vector e1, tolerance
// 1e-9, at most 10000 iterations per pair).  Negative eigenvalues among the
// top three are zeroed with a warning.
Embedding3 classical_mds(const std::vector<double>& d, std::size_t n);

// Rotation R (det +1) minimizing ||X R^T - Y||_F after centering both sets.
// DegenerateConfiguration when the cross-covariance has rank < 2.
Mat3 procrustes_rotate(const std::vector<std::array<double, 3>>& x, const std::vector<std::array<double, 3>>& y);

// Frobenius residual ||center(X) R^T - center(Y)||_F for reporting.
double procrustes_residual(const std::vector<std::array<double, 3>>& x,
                           const std::vector<std::array<double, 3>>& y, const Mat3& r);

// CSV rows: cid,x,y,z,source
std::string embedding_csv(const std::vector<std::uint32_t>& cids, const Embedding3& emb, const std::string& source);
std::string alignment_text(const Mat3& r, double residual);

}  // namespace deepnose
