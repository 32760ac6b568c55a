#include "mmpt/masking.hpp"

#include <algorithm>

#include "mmpt/errors.hpp"

namespace mmpt {

MutexMasks sample_mutex_masks(int num_atoms, Rng& rng) {
  if (num_atoms < 1) throw Error(ErrorKind::InvalidArgument, "num_atoms must be >= 1");
  MutexMasks masks;
  masks.num_atoms = num_atoms;
  masks.m = sample_without_replacement(rng, num_atoms, num_atoms / 2);
  std::sort(masks.m.begin(), masks.m.end());
  std::vector<char> in_m(static_cast<size_t>(num_atoms), 0);
  for (int i : masks.m) in_m[static_cast<size_t>(i)] = 1;
  for (int i = 0; i < num_atoms; ++i)
    if (!in_m[static_cast<size_t>(i)]) masks.m_bar.push_back(i);
  return masks;
}

}  // namespace mmpt
