#include "deepnose/odor_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "deepnose/common.hpp"

namespace deepnose {

void WeightedGraph::add_edge(std::uint32_t u, std::uint32_t v, double w) {
  if (u == v) raise(ErrorKind::InvalidConfig, "graph: self loop on node " + std::to_string(u));
  if (u >= n || v >= n) raise(ErrorKind::IndexOutOfRange, "graph: node out of range");
  if (!(w > 0)) raise(ErrorKind::InvalidConfig, "graph: edge weight must be positive");
  adj[u].emplace_back(v, w);
  adj[v].emplace_back(u, w);
}

std::size_t WeightedGraph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& a : adj) twice += a.size();
  return twice / 2;
}

WeightedGraph semantic_graph(const LabelTable& labels, DatasetId block, const DescriptorVocabulary& vocab,
                             std::vector<std::uint32_t>* node_cids) {
  if (labels.n_labels != vocab.total())
    raise(ErrorKind::ShapeMismatch, "semantic graph: label table width does not match vocabulary");
  std::vector<std::uint32_t> cids;
  std::vector<const LabelRow*> rows;
  for (const auto& [cid, row] : labels.rows)
    if (row.dataset_mask[static_cast<std::size_t>(block)]) {
      cids.push_back(cid);
      rows.push_back(&row);
    }
  const std::size_t n = cids.size();
  if (node_cids) *node_cids = cids;

  WeightedGraph g(n);
  if (n == 0) return g;
  const std::size_t off = vocab.offset(block), size = vocab.block_size(block);

  // Shared-descriptor counts via per-descriptor molecule lists; dense upper
  // triangle of counts (block sizes keep this comfortably in memory).
  std::vector<std::uint16_t> shared(n * n, 0);
  for (std::size_t d = off; d < off + size; ++d) {
    std::vector<std::uint32_t> with;
    for (std::size_t i = 0; i < n; ++i)
      if (rows[i]->labels[d]) with.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t a = 0; a < with.size(); ++a)
      for (std::size_t b = a + 1; b < with.size(); ++b) ++shared[with[a] * n + with[b]];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (shared[i * n + j])
        g.add_edge(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                   1.0 / static_cast<double>(shared[i * n + j]));
  return g;
}

WeightedGraph knn_graph(const std::vector<std::vector<double>>& features, std::size_t k) {
  const std::size_t n = features.size();
  if (k < 1) raise(ErrorKind::InvalidConfig, "knn: k must be at least 1");
  if (n < 2) raise(ErrorKind::InvalidConfig, "knn: need at least 2 points");
  const std::size_t dim = features[0].size();
  for (const auto& f : features)
    if (f.size() != dim) raise(ErrorKind::ShapeMismatch, "knn: inconsistent feature dimensions");

  const std::size_t keep = std::min(k, n - 1);
  std::vector<std::vector<std::pair<double, std::uint32_t>>> nearest(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::pair<double, std::uint32_t>> d;
    d.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (std::size_t t = 0; t < dim; ++t) {
        const double diff = features[i][t] - features[j][t];
        s += diff * diff;
      }
      d.emplace_back(std::sqrt(s), static_cast<std::uint32_t>(j));
    }
    std::sort(d.begin(), d.end());
    d.resize(keep);
    nearest[i] = std::move(d);
  });

  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> weight;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [w, j] : nearest[i]) {
      const auto key = std::minmax({static_cast<std::uint32_t>(i), j});
      if (edges.insert({key.first, key.second}).second) weight[{key.first, key.second}] = w;
    }
  WeightedGraph g(n);
  for (const auto& [e, w] : weight) g.add_edge(e.first, e.second, w > 0 ? w : 1e-12);
  return g;
}

GeodesicResult geodesic_distances(const WeightedGraph& g, std::size_t k_prune) {
  if (g.n == 0) raise(ErrorKind::InvalidConfig, "geodesics: empty graph");
  if (k_prune < 1) raise(ErrorKind::InvalidConfig, "geodesics: k_prune must be at least 1");

  // Long-link discarding: union of every node's k_prune shortest edges.
  std::set<std::pair<std::uint32_t, std::uint32_t>> kept;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> weight;
  for (std::uint32_t u = 0; u < g.n; ++u) {
    auto edges = g.adj[u];
    std::sort(edges.begin(), edges.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
    const std::size_t m = std::min(k_prune, edges.size());
    for (std::size_t e = 0; e < m; ++e) {
      const auto key = std::minmax({u, edges[e].first});
      kept.insert({key.first, key.second});
      weight[{key.first, key.second}] = edges[e].second;
    }
  }
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj(g.n);
  for (const auto& e : kept) {
    const double w = weight.at(e);
    adj[e.first].emplace_back(e.second, w);
    adj[e.second].emplace_back(e.first, w);
  }

  // Largest connected component (ties: the one seen first in node order).
  std::vector<std::int32_t> comp(g.n, -1);
  std::int32_t n_comp = 0;
  for (std::uint32_t s = 0; s < g.n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::uint32_t> stack{s};
    comp[s] = n_comp;
    while (!stack.empty()) {
      const std::uint32_t u = stack.back();
      stack.pop_back();
      for (const auto& [v, w] : adj[u])
        if (comp[v] < 0) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
    }
    ++n_comp;
  }
  std::vector<std::size_t> comp_size(static_cast<std::size_t>(n_comp), 0);
  for (std::uint32_t u = 0; u < g.n; ++u) ++comp_size[static_cast<std::size_t>(comp[u])];
  std::int32_t best = 0;
  for (std::int32_t c = 1; c < n_comp; ++c)
    if (comp_size[static_cast<std::size_t>(c)] > comp_size[static_cast<std::size_t>(best)]) best = c;

  GeodesicResult res;
  std::vector<std::uint32_t> local(g.n, 0);
  for (std::uint32_t u = 0; u < g.n; ++u) {
    if (comp[u] == best) {
      local[u] = static_cast<std::uint32_t>(res.nodes.size());
      res.nodes.push_back(u);
    } else {
      res.excluded.push_back(u);
    }
  }

  const std::size_t m = res.nodes.size();
  res.dist.assign(m * m, std::numeric_limits<double>::infinity());
  parallel_for(m, [&](std::size_t si) {
    double* row = res.dist.data() + si * m;
    const std::uint32_t source = res.nodes[si];
    using QE = std::pair<double, std::uint32_t>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
    row[si] = 0;
    pq.push({0.0, source});
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > row[local[u]]) continue;
      for (const auto& [v, w] : adj[u]) {
        const double nd = d + w;
        if (nd < row[local[v]]) {
          row[local[v]] = nd;
          pq.push({nd, v});
        }
      }
    }
  });
  return res;
}

namespace {

// w = B v for a dense symmetric matrix stored row-major.
void matvec(const std::vector<double>& b, std::size_t n, const std::vector<double>& v, std::vector<double>& w) {
  parallel_for(kReductionSlabs, [&](std::size_t s) {
    for (std::size_t i = slab_begin(n, s); i < slab_begin(n, s + 1); ++i) {
      const double* row = b.data() + i * n;
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
      w[i] = acc;
    }
  });
}

}  // namespace

Embedding3 classical_mds(const std::vector<double>& d, std::size_t n) {
  if (d.size() != n * n) raise(ErrorKind::ShapeMismatch, "mds: distance matrix size mismatch");
  if (n == 0) raise(ErrorKind::InvalidConfig, "mds: empty distance matrix");
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i * n + i] != 0) raise(ErrorKind::InvalidConfig, "mds: nonzero diagonal at " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(d[i * n + j] - d[j * n + i]) > 1e-9)
        raise(ErrorKind::InvalidConfig, "mds: asymmetric distances at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
  }

  // B = -1/2 J D^2 J, expressed through row/grand means of D^2.
  std::vector<double> b(n * n);
  {
    std::vector<double> row_mean(n, 0.0);
    double grand = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double q = d[i * n + j] * d[i * n + j];
        s += q;
      }
      row_mean[i] = s / static_cast<double>(n);
      grand += s;
    }
    grand /= static_cast<double>(n) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double q = d[i * n + j] * d[i * n + j];
        b[i * n + j] = -0.5 * (q - row_mean[i] - row_mean[j] + grand);
      }
  }

  Embedding3 emb;
  emb.coords.assign(n, {0.0, 0.0, 0.0});
  std::array<std::vector<double>, 3> vecs;
  std::array<double, 3> vals{};

  constexpr double kTol = 1e-9;
  constexpr std::size_t kMaxIter = 10000;
  for (std::size_t e = 0; e < 3; ++e) {
    std::vector<double> v(n, 0.0), w(n, 0.0);
    v[0] = 1.0;  // canonical start
    double lambda = 0;
    double residual = 0;
    bool converged = false;
    for (std::size_t iter = 0; iter < kMaxIter; ++iter) {
      matvec(b, n, v, w);
      lambda = 0;
      for (std::size_t i = 0; i < n; ++i) lambda += v[i] * w[i];
      residual = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = w[i] - lambda * v[i];
        residual += r * r;
      }
      residual = std::sqrt(residual);
      if (residual <= kTol * std::max(1.0, std::abs(lambda))) {
        converged = true;
        break;
      }
      double nw = 0;
      for (double x : w) nw += x * x;
      nw = std::sqrt(nw);
      if (nw <= 1e-300) {  // v is annihilated; treat as a zero eigenpair
        lambda = 0;
        converged = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    }
    if (!converged)
      raise(ErrorKind::ConvergenceFailure, "mds: power iteration for eigenpair " + std::to_string(e + 1) +
                                               " did not converge; residual " + format_double(residual));
    vals[e] = lambda;
    vecs[e] = v;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) b[i * n + j] -= lambda * v[i] * v[j];
  }

  // Deflation yields pairs in |lambda| order; report in non-increasing order.
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return vals[a] > vals[c]; });
  for (std::size_t e = 0; e < 3; ++e) {
    double lam = vals[idx[e]];
    if (lam < 0) {
      emb.warnings.push_back("eigenvalue " + std::to_string(e + 1) + " negative (" + format_double(lam) +
                             "); zeroed");
      lam = 0;
    }
    emb.eigenvalues[e] = lam;
    const double scale = std::sqrt(lam);
    for (std::size_t i = 0; i < n; ++i) emb.coords[i][e] = vecs[idx[e]][i] * scale;
  }

  // Kruskal stress-1 against the inputs.
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t e = 0; e < 3; ++e) {
        const double diff = emb.coords[i][e] - emb.coords[j][e];
        s += diff * diff;
      }
      const double dij = d[i * n + j];
      const double r = std::sqrt(s) - dij;
      num += r * r;
      den += dij * dij;
    }
  emb.stress = den > 0 ? std::sqrt(num / den) : 0.0;
  return emb;
}

namespace {

// Eigen-decomposition of a symmetric 3x3 by cyclic Jacobi rotations.
// Returns eigenvalues (descending) and matching eigenvector columns in v.
void jacobi3(std::array<double, 9> a, std::array<double, 3>& eig, std::array<double, 9>& v) {
  v = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  auto at = [](std::array<double, 9>& m, int r, int c) -> double& { return m[r * 3 + c]; };
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[1]) + std::abs(a[2]) + std::abs(a[5]);
    if (off < 1e-300) break;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) {
        const double apq = at(a, p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(a, q, q) - at(a, p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int r = 0; r < 3; ++r) {
          const double arp = at(a, r, p), arq = at(a, r, q);
          at(a, r, p) = c * arp - s * arq;
          at(a, r, q) = s * arp + c * arq;
        }
        for (int r = 0; r < 3; ++r) {
          const double apr = at(a, p, r), aqr = at(a, q, r);
          at(a, p, r) = c * apr - s * aqr;
          at(a, q, r) = s * apr + c * aqr;
        }
        for (int r = 0; r < 3; ++r) {
          const double vrp = at(v, r, p), vrq = at(v, r, q);
          at(v, r, p) = c * vrp - s * vrq;
          at(v, r, q) = s * vrp + c * vrq;
        }
      }
  }
  std::array<int, 3> order{0, 1, 2};
  std::array<double, 3> diag{a[0], a[4], a[8]};
  std::sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] > diag[y]; });
  std::array<double, 9> vs{};
  for (int e = 0; e < 3; ++e) {
    eig[e] = diag[order[e]];
    for (int r = 0; r < 3; ++r) vs[r * 3 + e] = v[r * 3 + order[e]];
  }
  v = vs;
}

std::array<double, 3> centroid3(const std::vector<std::array<double, 3>>& p) {
  std::array<double, 3> c{0, 0, 0};
  for (const auto& x : p)
    for (int e = 0; e < 3; ++e) c[e] += x[e];
  for (int e = 0; e < 3; ++e) c[e] /= static_cast<double>(p.size());
  return c;
}

}  // namespace

Mat3 procrustes_rotate(const std::vector<std::array<double, 3>>& x, const std::vector<std::array<double, 3>>& y) {
  if (x.size() != y.size()) raise(ErrorKind::ShapeMismatch, "procrustes: point counts differ");
  if (x.size() < 3) raise(ErrorKind::InvalidConfig, "procrustes: need at least 3 points");
  const auto cx = centroid3(x), cy = centroid3(y);

  // H = sum (x - cx)(y - cy)^T; sought R maximizes tr(R H).
  std::array<double, 9> h{};
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h[r * 3 + c] += (x[i][r] - cx[r]) * (y[i][c] - cy[c]);

  std::array<double, 9> hth{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int t = 0; t < 3; ++t) s += h[t * 3 + r] * h[t * 3 + c];
      hth[r * 3 + c] = s;
    }
  std::array<double, 3> lam{};
  std::array<double, 9> vm{};
  jacobi3(hth, lam, vm);
  std::array<double, 3> sigma{};
  for (int e = 0; e < 3; ++e) sigma[e] = std::sqrt(std::max(lam[e], 0.0));
  if (sigma[1] <= 1e-12 * std::max(sigma[0], 1e-300) || sigma[0] == 0)
    raise(ErrorKind::DegenerateConfiguration, "procrustes: cross-covariance rank below 2");

  // Left singular vectors u_e = H v_e / sigma_e; the smallest one is rebuilt
  // from the cross product so near-planar configurations stay orthonormal.
  std::array<std::array<double, 3>, 3> u{};
  for (int e = 0; e < 2; ++e)
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int t = 0; t < 3; ++t) s += h[r * 3 + t] * vm[t * 3 + e];
      u[e][r] = s / sigma[e];
    }
  u[2] = {u[0][1] * u[1][2] - u[0][2] * u[1][1], u[0][2] * u[1][0] - u[0][0] * u[1][2],
          u[0][0] * u[1][1] - u[0][1] * u[1][0]};
  if (sigma[2] > 1e-9 * sigma[0]) {
    // direct column; flip to match the cross-product orientation if needed
    std::array<double, 3> direct{};
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int t = 0; t < 3; ++t) s += h[r * 3 + t] * vm[t * 3 + 2];
      direct[r] = s / sigma[2];
    }
    double dot = 0;
    for (int r = 0; r < 3; ++r) dot += direct[r] * u[2][r];
    if (dot < 0)
      for (int r = 0; r < 3; ++r) vm[r * 3 + 2] = -vm[r * 3 + 2];
  }

  // det(V U^T) decides whether the smallest direction needs a sign flip.
  Mat3 vmat, umat;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      vmat(r, c) = vm[r * 3 + c];
      umat(r, c) = u[c][r];  // columns u_e
    }
  const double dsign = det(vmat * transpose(umat));
  Mat3 dmat = Mat3::identity();
  dmat(2, 2) = dsign < 0 ? -1.0 : 1.0;
  return vmat * dmat * transpose(umat);
}

double procrustes_residual(const std::vector<std::array<double, 3>>& x,
                           const std::vector<std::array<double, 3>>& y, const Mat3& r) {
  if (x.size() != y.size()) raise(ErrorKind::ShapeMismatch, "procrustes: point counts differ");
  const auto cx = centroid3(x), cy = centroid3(y);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec3 xi{x[i][0] - cx[0], x[i][1] - cx[1], x[i][2] - cx[2]};
    Vec3 rx = r * xi;
    for (int e = 0; e < 3; ++e) {
      const double diff = rx[static_cast<std::size_t>(e)] - (y[i][e] - cy[e]);
      s += diff * diff;
    }
  }
  return std::sqrt(s);
}

std::string embedding_csv(const std::vector<std::uint32_t>& cids, const Embedding3& emb,
                          const std::string& source) {
  if (cids.size() != emb.coords.size()) raise(ErrorKind::ShapeMismatch, "embedding csv: cid count mismatch");
  std::ostringstream out;
  out << "cid,x,y,z,source\n";
  for (std::size_t i = 0; i < cids.size(); ++i)
    out << cids[i] << ',' << format_double(emb.coords[i][0]) << ',' << format_double(emb.coords[i][1]) << ','
        << format_double(emb.coords[i][2]) << ',' << source << '\n';
  return out.str();
}

std::string alignment_text(const Mat3& r, double residual) {
  std::ostringstream out;
  out << "rotation\n";
  for (int row = 0; row < 3; ++row)
    out << format_double(r(row, 0)) << ' ' << format_double(r(row, 1)) << ' ' << format_double(r(row, 2)) << '\n';
  out << "residual " << format_double(residual) << '\n';
  return out.str();
}

}  // namespace deepnose
