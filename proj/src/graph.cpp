#include "mmpt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mmpt/errors.hpp"

namespace mmpt {

double edge_distance(const Crystal& crystal, const GraphEdge& edge) {
  size_t n = crystal.size();
  if (edge.src < 0 || edge.dst < 0 || static_cast<size_t>(edge.src) >= n ||
      static_cast<size_t>(edge.dst) >= n)
    throw Error(ErrorKind::IndexOutOfRange, "edge endpoint out of range");
  Vec3 df = crystal.frac[static_cast<size_t>(edge.dst)] - crystal.frac[static_cast<size_t>(edge.src)];
  Vec3 shifted = {df.x + edge.offset.k1, df.y + edge.offset.k2, df.z + edge.offset.k3};
  return norm(frac_to_cart(shifted, crystal.lattice));
}

static bool edge_order(const GraphEdge& a, const GraphEdge& b) {
  if (a.src != b.src) return a.src < b.src;
  if (a.distance != b.distance) return a.distance < b.distance;
  if (a.dst != b.dst) return a.dst < b.dst;
  if (a.offset.k1 != b.offset.k1) return a.offset.k1 < b.offset.k1;
  if (a.offset.k2 != b.offset.k2) return a.offset.k2 < b.offset.k2;
  return a.offset.k3 < b.offset.k3;
}

// Shared cap/sort pass: keeps at most max_neighbors per src in tie-break
// order. Candidates must already be distance-filtered.
static MultiGraph finalize(int num_nodes, std::vector<GraphEdge> candidates, double cutoff,
                           int max_neighbors) {
  std::sort(candidates.begin(), candidates.end(), edge_order);
  MultiGraph g;
  g.num_nodes = num_nodes;
  g.cutoff = cutoff;
  g.max_neighbors = max_neighbors;
  int current_src = -1, kept = 0;
  for (const GraphEdge& e : candidates) {
    if (e.src != current_src) {
      current_src = e.src;
      kept = 0;
    }
    if (kept < max_neighbors) {
      g.edges.push_back(e);
      ++kept;
    }
  }
  return g;
}

static void collect_pair(const Crystal& crystal, int i, int j, int lo1, int hi1, int lo2,
                         int hi2, int lo3, int hi3, double cutoff,
                         std::vector<GraphEdge>& out) {
  Vec3 df = crystal.frac[static_cast<size_t>(j)] - crystal.frac[static_cast<size_t>(i)];
  for (int k1 = lo1; k1 <= hi1; ++k1)
    for (int k2 = lo2; k2 <= hi2; ++k2)
      for (int k3 = lo3; k3 <= hi3; ++k3) {
        Vec3 shifted = {df.x + k1, df.y + k2, df.z + k3};
        double d = norm(frac_to_cart(shifted, crystal.lattice));
        if (d <= cutoff && d > 1e-6)
          out.push_back({i, j, {k1, k2, k3}, d});
      }
}

MultiGraph build_graph(const Crystal& crystal, double cutoff, int max_neighbors) {
  if (cutoff <= 0.0) throw Error(ErrorKind::InvalidArgument, "cutoff must be positive");
  if (max_neighbors < 1) throw Error(ErrorKind::InvalidArgument, "max_neighbors must be >= 1");
  validate(crystal);

  Vec3 widths = perpendicular_widths(crystal.lattice);
  int reach[3];
  for (int m = 0; m < 3; ++m)
    reach[m] = static_cast<int>(std::ceil(cutoff / widths[m])) + 1;

  int n = static_cast<int>(crystal.size());
  std::vector<GraphEdge> candidates;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      // Window centered per pair so coordinates outside [0, 1) stay exact.
      Vec3 df = crystal.frac[static_cast<size_t>(j)] - crystal.frac[static_cast<size_t>(i)];
      int c1 = static_cast<int>(std::lround(-df.x));
      int c2 = static_cast<int>(std::lround(-df.y));
      int c3 = static_cast<int>(std::lround(-df.z));
      collect_pair(crystal, i, j, c1 - reach[0], c1 + reach[0], c2 - reach[1], c2 + reach[1],
                   c3 - reach[2], c3 + reach[2], cutoff, candidates);
    }
  return finalize(n, std::move(candidates), cutoff, max_neighbors);
}

MultiGraph brute_force_neighbors(const Crystal& crystal, double cutoff, int image_range,
                                 int max_neighbors) {
  if (cutoff <= 0.0) throw Error(ErrorKind::InvalidArgument, "cutoff must be positive");
  if (image_range < 0) throw Error(ErrorKind::InvalidArgument, "image_range must be >= 0");
  validate(crystal);
  int n = static_cast<int>(crystal.size());
  std::vector<GraphEdge> candidates;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      collect_pair(crystal, i, j, -image_range, image_range, -image_range, image_range,
                   -image_range, image_range, cutoff, candidates);
  return finalize(n, std::move(candidates), cutoff, max_neighbors);
}

std::string graph_to_json(const MultiGraph& graph) {
  std::string out = "{\"num_nodes\":" + std::to_string(graph.num_nodes) + ",\"edges\":[";
  char buf[160];
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const GraphEdge& g = graph.edges[e];
    std::snprintf(buf, sizeof buf, "%s[%d,%d,%d,%d,%d,%.9f]", e ? "," : "", g.src, g.dst,
                  g.offset.k1, g.offset.k2, g.offset.k3, g.distance);
    out += buf;
  }
  out += "]}";
  return out;
}

}  // namespace mmpt
