#pragma once

#include <string>
#include <vector>

#include "mmpt/crystal.hpp"

namespace mmpt {

// Directed edge src -> dst through lattice image offset; multiple edges may
// join the same atom pair with different offsets, and src == dst self edges
// (nonzero offset) are legal.
struct GraphEdge {
  int src = 0, dst = 0;
  ImageOffset offset;
  double distance = 0.0;
};

// Edges are grouped by src; within a group ordering is (distance, dst,
// k1, k2, k3) ascending, which is also the tie-break when the neighbor cap
// truncates a distance tie.
struct MultiGraph {
  int num_nodes = 0;
  std::vector<GraphEdge> edges;
  double cutoff = 0.0;
  int max_neighbors = 0;
};

// k-nearest periodic neighbors: candidates within `cutoff` are kept, then
// each node keeps its `max_neighbors` best. The per-axis image window is
// derived from perpendicular cell widths so no candidate inside the cutoff
// is missed.
MultiGraph build_graph(const Crystal& crystal, double cutoff = 8.0, int max_neighbors = 12);

// Reference builder scanning a fixed image window; the caller is responsible
// for choosing image_range wide enough for the cell.
MultiGraph brute_force_neighbors(const Crystal& crystal, double cutoff, int image_range,
                                 int max_neighbors = 12);

// Recomputed Cartesian length of the edge vector.
double edge_distance(const Crystal& crystal, const GraphEdge& edge);

// {"num_nodes": N, "edges": [[src, dst, k1, k2, k3, distance], ...]} with
// distances printed to 9 decimal places.
std::string graph_to_json(const MultiGraph& graph);

}  // namespace mmpt
