#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmpt/lattice.hpp"

namespace mmpt {

inline constexpr int kMaxAtomicNumber = 118;
// One-hot width: index 0 is reserved, elements occupy 1..118.
inline constexpr int kNumClasses = 119;

struct PropertyLabel {
  std::string name;
  double value = 0.0;

  bool operator==(const PropertyLabel&) const = default;
};

struct Crystal {
  std::vector<int> atoms;       // atomic numbers, 1..118
  std::vector<Vec3> frac;       // fractional coordinates, one per atom
  Lattice lattice;
  std::optional<PropertyLabel> property;

  size_t size() const { return atoms.size(); }
  Vec3 cart(size_t i) const { return frac_to_cart(frac[i], lattice); }
};

// Throws on: empty atom list, out-of-range atomic number, non-finite
// coordinates, singular lattice, or two atoms closer than 1e-6 A under
// periodicity.
void validate(const Crystal& crystal);

// Minimum periodic distance between distinct atoms; +inf for N = 1.
double min_pairwise_distance(const Crystal& crystal);

std::array<double, kNumClasses> one_hot(int atomic_number);

// Standard atomic weight (amu, 4 significant figures).
double atomic_mass(int atomic_number);

// Rigid motion applied to the structure: lattice rows and Cartesian
// positions rotate/translate together, preserving all interatomic
// distances; fractional coordinates shift uniformly by the translation
// expressed in the rotated basis.
Crystal apply_euclidean(const Crystal& crystal, const EuclideanTransform& t);

// Integer scaling (alpha1, alpha2, alpha3) of the cell with replicated
// atoms; replica block for source atom i occupies indices
// [i*a1*a2*a3, (i+1)*a1*a2*a3).
Crystal make_supercell(const Crystal& crystal, const std::array<int, 3>& alpha);

// Shift fractional coordinates by beta and wrap into [0, 1).
Crystal wrap_to_cell(const Crystal& crystal, const Vec3& beta);

// One JSON record per crystal: {"atoms": [...], "frac_coords" | "cart_coords":
// [[...]], "lattice": [[...]x3], "property": {"name":..., "value":...}?}.
Crystal parse_crystal(const std::string& text);
std::string serialize_crystal(const Crystal& crystal);

// number_density | mean_nn_distance | mass_density.
double toy_property(const Crystal& crystal, const std::string& name);

}  // namespace mmpt
