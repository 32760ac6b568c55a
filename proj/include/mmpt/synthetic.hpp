#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmpt/crystal.hpp"

namespace mmpt {

// Families: "rocksalt" (8-atom conventional cell, two species),
// "perovskite" (5-atom ABX3 cell, three species), "perturbed_cubic"
// (2x2x2 simple-cubic motif, species drawn from the pool, jittered).
struct SyntheticParams {
  std::string family = "perturbed_cubic";
  double cell_min = 2.0;           // cubic edge range, angstroms
  double cell_max = 8.0;
  double perturbation = 0.0;       // max fractional jitter per axis, <= 0.1
  std::vector<int> species = {11, 17, 20, 22, 8, 14};  // Na Cl Ca Ti O Si
};

Crystal generate_synthetic(const SyntheticParams& params, uint64_t seed);

// Count crystals with per-sample seeds seed ^ index.
std::vector<Crystal> generate_batch(const SyntheticParams& params, uint64_t seed, int count);

}  // namespace mmpt
