#pragma once

// Capsule decomposition graphs: vertices are active capsules (layer, type,
// group element), edges connect a capsule to the capsules it was routed
// into, weighted by the routing coefficients. Built from a ForwardTrace;
// the isomorphism checker verifies the witness map
//   vertex (l, i, g)  ->  (l, i, h_l^-1 * g)
// between the graphs of a transformed and an untransformed input, including
// activation values and edge weights.

#include <string>
#include <vector>

#include "sovnet/group.hpp"
#include "sovnet/network.hpp"

namespace sovnet {

struct CapsuleVertex {
  int layer;  // 0 = primary capsules; last = class capsules
  int type;
  int s, y, x;  // group element: stabilizer slot and pixel
  double activation;
};

struct CapsuleEdge {
  int layer;  // source layer; target layer is layer + 1
  int i, s1, y1, x1;
  int j, s2, y2, x2;
  double weight;
};

struct CapsuleGraph {
  GroupKind kind = GroupKind::p4;
  std::vector<GroupGrid> grids;       // per layer
  std::vector<PoolGeometry> pools;    // pools[l]: how layer l samples layer l-1
  std::vector<int> cum_strides;
  std::vector<CapsuleVertex> vertices;
  std::vector<CapsuleEdge> edges;
};

struct IsomorphismReport {
  bool isomorphic = false;
  double max_activation_diff = 0.0;
  double max_weight_diff = 0.0;
  std::size_t vertices_checked = 0;
  std::size_t edges_checked = 0;
  std::string failure;  // empty when isomorphic
};

// Vertex-structure witness check plus value agreement at `tol`. `h` acts at
// the input scale; per layer its translation is divided by the cumulative
// stride (and must divide evenly).
IsomorphismReport check_isomorphism(const CapsuleGraph& transformed, const CapsuleGraph& base,
                                    const GroupElement& h, double tol);

// Text form: one "V l i s y x activation" line per vertex, one
// "E l i s1 y1 x1 j s2 y2 x2 weight" line per edge, 17 significant digits.
void export_graph(const CapsuleGraph& g, std::ostream& os);
CapsuleGraph import_graph(std::istream& is);

// Expected edge count given the vertex set and pool geometry; the builder's
// output is checked against this combinatorial count in tests.
long long expected_edge_count(const CapsuleGraph& g, double threshold);

template <typename T>
CapsuleGraph build_graph(const ForwardTrace<T>& trace, const ModelConfig& cfg, double threshold) {
  CapsuleGraph g;
  g.kind = cfg.group;
  const int S = stabilizer_size(cfg.group);
  const int L = static_cast<int>(trace.layers.size());

  // Per-capsule activations (pose two-norms), and the active mask.
  std::vector<std::vector<std::vector<double>>> act(L);  // [layer][type][s*H*W]
  for (int l = 0; l < L; ++l) {
    const auto& lt = trace.layers[l];
    g.grids.push_back(lt.grid);
    g.pools.push_back(lt.pool);
    g.cum_strides.push_back(lt.cum_stride);
    const int H = lt.grid.height, W = lt.grid.width;
    act[l].resize(lt.fields.size());
    for (std::size_t i = 0; i < lt.fields.size(); ++i) {
      const auto& v = lt.fields[i].values();
      const int d = static_cast<int>(lt.fields[i].shape()[0]);
      act[l][i].assign(static_cast<std::size_t>(S) * H * W, 0.0);
      for (int s = 0; s < S; ++s)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            double n2 = 0.0;
            for (int p = 0; p < d; ++p) {
              double e = static_cast<double>(v[((static_cast<std::size_t>(p) * S + s) * H + y) * W + x]);
              n2 += e * e;
            }
            double a = std::sqrt(n2);
            act[l][i][(static_cast<std::size_t>(s) * H + y) * W + x] = a;
            if (a > threshold)
              g.vertices.push_back({l, static_cast<int>(i), s, y, x, a});
          }
    }
  }

  // Edges: active source in the receptive set of an active target, weighted
  // by the target's routing coefficient for the source type.
  for (int l = 0; l + 1 < L; ++l) {
    const auto& src = trace.layers[l];
    const auto& dst = trace.layers[l + 1];
    if (dst.weights.empty()) continue;  // no routed connection recorded
    const int H1 = src.grid.height, W1 = src.grid.width;
    const int H2 = dst.grid.height, W2 = dst.grid.width;
    const PoolGeometry& pool = dst.pool;
    const std::size_t n_in = src.fields.size();
    for (std::size_t j = 0; j < dst.fields.size(); ++j) {
      const auto& wv = dst.weights[j].values();
      for (int s2 = 0; s2 < S; ++s2)
        for (int y2 = 0; y2 < H2; ++y2)
          for (int x2 = 0; x2 < W2; ++x2) {
            if (act[l + 1][j][(static_cast<std::size_t>(s2) * H2 + y2) * W2 + x2] <= threshold) continue;
            int ylo = pool.full ? 0 : std::max(0, pool.off_y + pool.stride * y2 - pool.radius);
            int yhi = pool.full ? H1 - 1 : std::min(H1 - 1, pool.off_y + pool.stride * y2 + pool.radius);
            int xlo = pool.full ? 0 : std::max(0, pool.off_x + pool.stride * x2 - pool.radius);
            int xhi = pool.full ? W1 - 1 : std::min(W1 - 1, pool.off_x + pool.stride * x2 + pool.radius);
            for (std::size_t i = 0; i < n_in; ++i) {
              double w = static_cast<double>(
                  wv[((i * S + s2) * H2 + static_cast<std::size_t>(y2)) * W2 + x2]);
              for (int s1 = 0; s1 < S; ++s1)
                for (int y1 = ylo; y1 <= yhi; ++y1)
                  for (int x1 = xlo; x1 <= xhi; ++x1) {
                    if (act[l][i][(static_cast<std::size_t>(s1) * H1 + y1) * W1 + x1] <= threshold)
                      continue;
                    g.edges.push_back({l, static_cast<int>(i), s1, y1, x1, static_cast<int>(j), s2,
                                       y2, x2, w});
                  }
            }
          }
    }
  }
  return g;
}

}  // namespace sovnet
