#pragma once

#include <vector>

#include "mmpt/rng.hpp"

namespace mmpt {

// Disjoint exhaustive partition of 0..n-1: |m| = floor(n/2), complement in
// m_bar; both sorted ascending.
struct MutexMasks {
  std::vector<int> m;
  std::vector<int> m_bar;
  int num_atoms = 0;
};

MutexMasks sample_mutex_masks(int num_atoms, Rng& rng);

}  // namespace mmpt
