#include "sovnet/capsgraph.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace sovnet {

namespace {

// Packed vertex key; every coordinate fits comfortably in 12 bits for the
// grids this library runs at.
std::uint64_t vkey(int l, int i, int s, int y, int x) {
  return (static_cast<std::uint64_t>(l) << 48) | (static_cast<std::uint64_t>(i) << 36) |
         (static_cast<std::uint64_t>(s) << 24) | (static_cast<std::uint64_t>(y) << 12) |
         static_cast<std::uint64_t>(x);
}

struct EdgeKey {
  std::uint64_t a, b;
  bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& k) const {
    return std::hash<std::uint64_t>()(k.a * 0x9e3779b97f4a7c15ULL ^ k.b);
  }
};

GroupElement element_at_layer(const GroupElement& h, int cum_stride) {
  if (h.translation.u % cum_stride != 0 || h.translation.v % cum_stride != 0)
    throw ShapeMismatch("check_isomorphism: translation not a multiple of the layer stride");
  GroupElement out = h;
  out.translation = {h.translation.u / cum_stride, h.translation.v / cum_stride};
  return out;
}

}  // namespace

IsomorphismReport check_isomorphism(const CapsuleGraph& transformed, const CapsuleGraph& base,
                                    const GroupElement& h, double tol) {
  IsomorphismReport rep;
  if (transformed.kind != base.kind || h.kind != base.kind)
    throw GroupKindMismatch("check_isomorphism: group mismatch");
  if (transformed.grids.size() != base.grids.size()) {
    rep.failure = "layer count mismatch";
    return rep;
  }
  for (std::size_t l = 0; l < base.grids.size(); ++l)
    if (transformed.grids[l].height != base.grids[l].height ||
        transformed.grids[l].width != base.grids[l].width ||
        transformed.cum_strides[l] != base.cum_strides[l]) {
      rep.failure = "grid geometry mismatch at layer " + std::to_string(l);
      return rep;
    }

  // Per-layer inverse of h at that layer's resolution.
  std::vector<GroupElement> hinv(base.grids.size());
  for (std::size_t l = 0; l < base.grids.size(); ++l)
    hinv[l] = inverse(element_at_layer(h, base.cum_strides[l]));

  auto map_vertex = [&](int l, int i, int s, int y, int x, std::uint64_t& key) {
    const GroupGrid& grid = base.grids[l];
    int sb = stab_compose(base.kind, hinv[l].mirror * 4 + hinv[l].rotation, s);
    Pixel p = act_on_pixel(hinv[l], {y, x}, grid.height, grid.width);
    if (!in_grid(p, grid.height, grid.width)) return false;
    key = vkey(l, i, sb, p.row, p.col);
    return true;
  };

  if (transformed.vertices.size() != base.vertices.size()) {
    rep.failure = "vertex count " + std::to_string(transformed.vertices.size()) + " vs " +
                  std::to_string(base.vertices.size());
    return rep;
  }
  if (transformed.edges.size() != base.edges.size()) {
    rep.failure = "edge count " + std::to_string(transformed.edges.size()) + " vs " +
                  std::to_string(base.edges.size());
    return rep;
  }

  std::unordered_map<std::uint64_t, double> base_verts;
  base_verts.reserve(base.vertices.size());
  for (const auto& v : base.vertices) base_verts[vkey(v.layer, v.type, v.s, v.y, v.x)] = v.activation;

  for (const auto& v : transformed.vertices) {
    std::uint64_t key;
    if (!map_vertex(v.layer, v.type, v.s, v.y, v.x, key)) {
      rep.failure = "active vertex maps off the grid at layer " + std::to_string(v.layer);
      return rep;
    }
    auto it = base_verts.find(key);
    if (it == base_verts.end()) {
      rep.failure = "no counterpart for vertex (layer " + std::to_string(v.layer) + ", type " +
                    std::to_string(v.type) + ")";
      return rep;
    }
    rep.max_activation_diff = std::max(rep.max_activation_diff, std::abs(v.activation - it->second));
    ++rep.vertices_checked;
  }

  std::unordered_map<EdgeKey, double, EdgeKeyHash> base_edges;
  base_edges.reserve(base.edges.size());
  for (const auto& e : base.edges)
    base_edges[{vkey(e.layer, e.i, e.s1, e.y1, e.x1), vkey(e.layer + 1, e.j, e.s2, e.y2, e.x2)}] =
        e.weight;

  for (const auto& e : transformed.edges) {
    std::uint64_t ka, kb;
    if (!map_vertex(e.layer, e.i, e.s1, e.y1, e.x1, ka) ||
        !map_vertex(e.layer + 1, e.j, e.s2, e.y2, e.x2, kb)) {
      rep.failure = "edge endpoint maps off the grid at layer " + std::to_string(e.layer);
      return rep;
    }
    auto it = base_edges.find({ka, kb});
    if (it == base_edges.end()) {
      rep.failure = "no counterpart for an edge at layer " + std::to_string(e.layer);
      return rep;
    }
    rep.max_weight_diff = std::max(rep.max_weight_diff, std::abs(e.weight - it->second));
    ++rep.edges_checked;
  }

  if (rep.max_activation_diff > tol || rep.max_weight_diff > tol) {
    rep.failure = "value mismatch: activation diff " + std::to_string(rep.max_activation_diff) +
                  ", weight diff " + std::to_string(rep.max_weight_diff);
    return rep;
  }
  rep.isomorphic = true;
  return rep;
}

void export_graph(const CapsuleGraph& g, std::ostream& os) {
  os << "# capsule decomposition graph: " << g.vertices.size() << " vertices, " << g.edges.size()
     << " edges\n";
  for (std::size_t l = 0; l < g.grids.size(); ++l)
    os << "# layer " << l << ": " << g.grids[l].stabilizer() << "x" << g.grids[l].height << "x"
       << g.grids[l].width << " (cumulative stride " << g.cum_strides[l] << ")\n";
  os << std::setprecision(17);
  for (const auto& v : g.vertices)
    os << "V " << v.layer << " " << v.type << " " << v.s << " " << v.y << " " << v.x << " "
       << v.activation << "\n";
  for (const auto& e : g.edges)
    os << "E " << e.layer << " " << e.i << " " << e.s1 << " " << e.y1 << " " << e.x1 << " " << e.j
       << " " << e.s2 << " " << e.y2 << " " << e.x2 << " " << e.weight << "\n";
}

CapsuleGraph import_graph(std::istream& is) {
  CapsuleGraph g;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    char tag;
    ss >> tag;
    if (tag == 'V') {
      CapsuleVertex v;
      ss >> v.layer >> v.type >> v.s >> v.y >> v.x >> v.activation;
      if (!ss) throw TruncatedFile("import_graph: bad vertex line: " + line);
      g.vertices.push_back(v);
    } else if (tag == 'E') {
      CapsuleEdge e;
      ss >> e.layer >> e.i >> e.s1 >> e.y1 >> e.x1 >> e.j >> e.s2 >> e.y2 >> e.x2 >> e.weight;
      if (!ss) throw TruncatedFile("import_graph: bad edge line: " + line);
      g.edges.push_back(e);
    } else {
      throw TruncatedFile("import_graph: unknown record: " + line);
    }
  }
  return g;
}

// Pairwise scan over active vertices; intentionally a different code path
// from the window scan in build_graph.
long long expected_edge_count(const CapsuleGraph& g, double threshold) {
  long long n = 0;
  for (const auto& a : g.vertices) {
    if (a.activation <= threshold) continue;
    for (const auto& b : g.vertices) {
      if (b.layer != a.layer + 1 || b.activation <= threshold) continue;
      const PoolGeometry& pool = g.pools[b.layer];
      if (!pool.full) {
        int cy = pool.off_y + pool.stride * b.y;
        int cx = pool.off_x + pool.stride * b.x;
        if (std::abs(a.y - cy) > pool.radius || std::abs(a.x - cx) > pool.radius) continue;
      }
      ++n;
    }
  }
  return n;
}

}  // namespace sovnet
