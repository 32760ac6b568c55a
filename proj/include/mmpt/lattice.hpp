#pragma once

#include <vector>

#include "mmpt/geometry.hpp"

namespace mmpt {

// Lattice rows are the three basis vectors; Cartesian = fractional * rows.
struct Lattice {
  Mat3 rows = Mat3::identity();

  double volume() const { return std::fabs(det(rows)); }
};

// Cell lengths in angstroms, angles in radians (alpha between rows 1 and 2,
// beta between 0 and 2, gamma between 0 and 1).
struct SixParams {
  double a = 0, b = 0, c = 0;
  double alpha = 0, beta = 0, gamma = 0;
};

struct ImageOffset {
  int k1 = 0, k2 = 0, k3 = 0;

  bool operator==(const ImageOffset&) const = default;
};

// Rigid motion x -> R x + t with orthogonal R (improper allowed).
struct EuclideanTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation{};
};

Vec3 frac_to_cart(const Vec3& frac, const Lattice& lattice);
Vec3 cart_to_frac(const Vec3& cart, const Lattice& lattice);

SixParams six_params(const Lattice& lattice);

// Distance between neighboring lattice planes of constant fractional
// coordinate, per axis: volume / |l_p x l_q|.
Vec3 perpendicular_widths(const Lattice& lattice);

// Converged Niggli cell plus its parameters. The reduced basis is an integer
// unimodular combination of the input rows.
struct NiggliResult {
  Lattice reduced;
  SixParams params;
  Mat3 transform;  // reduced.rows = transform * input.rows, det = +/-1
};

NiggliResult niggli_reduce(const Lattice& lattice);

}  // namespace mmpt
