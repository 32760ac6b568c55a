#pragma once

#include <string>
#include <vector>

#include "mmpt/graph.hpp"

namespace mmpt {

inline constexpr int kNumDirectionClasses = 27;

// Per-edge self-supervision targets derived from the image offset and
// geometry alone.
struct AttributeLabels {
  int direction_class = 0;  // 0..26, ternary code of offset signs
  int unit_cell = 0;        // 1 internal (zero offset), 0 external
  double distance = 0.0;
};

// (sign(k1)+1)*9 + (sign(k2)+1)*3 + (sign(k3)+1); zero offset maps to 13.
int direction_class(const ImageOffset& offset);

// Sign triple encoded by a direction class.
ImageOffset direction_signs(int direction_class);

int unit_cell_label(const ImageOffset& offset);

// Labels in graph edge order.
std::vector<AttributeLabels> label_edges(const Crystal& crystal, const MultiGraph& graph);

// CSV with header src,dst,k1,k2,k3,direction_class,unit_cell,distance.
std::string labels_to_csv(const MultiGraph& graph, const std::vector<AttributeLabels>& labels);

}  // namespace mmpt
