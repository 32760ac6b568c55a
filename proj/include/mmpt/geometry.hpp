#pragma once

#include <array>
#include <cmath>

#include "mmpt/errors.hpp"

namespace mmpt {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// 3x3 matrix, row-major. Rows are basis vectors where a lattice is meant.
struct Mat3 {
  std::array<Vec3, 3> row{};

  Mat3() = default;
  Mat3(const Vec3& r0, const Vec3& r1, const Vec3& r2) : row{r0, r1, r2} {}

  Vec3& operator[](int i) { return row[static_cast<size_t>(i)]; }
  const Vec3& operator[](int i) const { return row[static_cast<size_t>(i)]; }

  static Mat3 identity() {
    return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  }
};

inline double det(const Mat3& m) {
  return dot(m[0], cross(m[1], m[2]));
}

inline Mat3 transpose(const Mat3& m) {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
  return t;
}

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

// Row vector times matrix: r * M.
inline Vec3 rowmul(const Vec3& r, const Mat3& m) {
  return {r.x * m[0][0] + r.y * m[1][0] + r.z * m[2][0],
          r.x * m[0][1] + r.y * m[1][1] + r.z * m[2][1],
          r.x * m[0][2] + r.y * m[1][2] + r.z * m[2][2]};
}

// Matrix times column vector: M * c.
inline Vec3 colmul(const Mat3& m, const Vec3& c) {
  return {dot(m[0], c), dot(m[1], c), dot(m[2], c)};
}

inline Mat3 inverse(const Mat3& m) {
  double d = det(m);
  if (std::fabs(d) < 1e-12) throw Error(ErrorKind::SingularLattice, "degenerate cell");
  Vec3 r0 = cross(m[1], m[2]);
  Vec3 r1 = cross(m[2], m[0]);
  Vec3 r2 = cross(m[0], m[1]);
  // inverse = adj / det; adj rows are the cross products transposed.
  Mat3 inv;
  for (int j = 0; j < 3; ++j) {
    inv[j][0] = r0[j] / d;
    inv[j][1] = r1[j] / d;
    inv[j][2] = r2[j] / d;
  }
  return inv;
}

}  // namespace mmpt
