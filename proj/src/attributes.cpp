#include "mmpt/attributes.hpp"

#include <cstdio>

#include "mmpt/errors.hpp"

namespace mmpt {

static int sign_of(int k) { return k > 0 ? 1 : (k < 0 ? -1 : 0); }

int direction_class(const ImageOffset& offset) {
  return (sign_of(offset.k1) + 1) * 9 + (sign_of(offset.k2) + 1) * 3 +
         (sign_of(offset.k3) + 1);
}

ImageOffset direction_signs(int direction_class) {
  if (direction_class < 0 || direction_class >= kNumDirectionClasses)
    throw Error(ErrorKind::InvalidArgument, "direction class out of range");
  return {direction_class / 9 - 1, (direction_class / 3) % 3 - 1, direction_class % 3 - 1};
}

int unit_cell_label(const ImageOffset& offset) {
  return offset.k1 == 0 && offset.k2 == 0 && offset.k3 == 0 ? 1 : 0;
}

std::vector<AttributeLabels> label_edges(const Crystal& crystal, const MultiGraph& graph) {
  std::vector<AttributeLabels> labels;
  labels.reserve(graph.edges.size());
  for (const GraphEdge& e : graph.edges) {
    (void)edge_distance(crystal, e);  // bounds check endpoints against the crystal
    labels.push_back({direction_class(e.offset), unit_cell_label(e.offset), e.distance});
  }
  return labels;
}

std::string labels_to_csv(const MultiGraph& graph, const std::vector<AttributeLabels>& labels) {
  if (labels.size() != graph.edges.size())
    throw Error(ErrorKind::InvalidArgument, "label/edge count mismatch");
  std::string out = "src,dst,k1,k2,k3,direction_class,unit_cell,distance\n";
  char buf[160];
  for (size_t i = 0; i < labels.size(); ++i) {
    const GraphEdge& e = graph.edges[i];
    const AttributeLabels& l = labels[i];
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%d,%d,%.9f\n", e.src, e.dst, e.offset.k1,
                  e.offset.k2, e.offset.k3, l.direction_class, l.unit_cell, l.distance);
    out += buf;
  }
  return out;
}

}  // namespace mmpt
