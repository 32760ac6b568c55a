#include "mmpt/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "mmpt/errors.hpp"

namespace mmpt {

Vec3 frac_to_cart(const Vec3& frac, const Lattice& lattice) {
  return rowmul(frac, lattice.rows);
}

Vec3 cart_to_frac(const Vec3& cart, const Lattice& lattice) {
  return rowmul(cart, inverse(lattice.rows));
}

static double angle_between(const Vec3& u, const Vec3& v) {
  double c = dot(u, v) / (norm(u) * norm(v));
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

SixParams six_params(const Lattice& lattice) {
  const Mat3& m = lattice.rows;
  SixParams p;
  p.a = norm(m[0]);
  p.b = norm(m[1]);
  p.c = norm(m[2]);
  if (p.a == 0.0 || p.b == 0.0 || p.c == 0.0)
    throw Error(ErrorKind::SingularLattice, "degenerate cell");
  p.alpha = angle_between(m[1], m[2]);
  p.beta = angle_between(m[0], m[2]);
  p.gamma = angle_between(m[0], m[1]);
  return p;
}

Vec3 perpendicular_widths(const Lattice& lattice) {
  double vol = lattice.volume();
  if (vol < 1e-12) throw Error(ErrorKind::SingularLattice, "degenerate cell");
  const Mat3& m = lattice.rows;
  return {vol / norm(cross(m[1], m[2])), vol / norm(cross(m[2], m[0])),
          vol / norm(cross(m[0], m[1]))};
}

namespace {

// Reduction state in metric form: A = a.a, B = b.b, C = c.c,
// xi = 2 b.c, eta = 2 a.c, zeta = 2 a.b. Basis changes are accumulated as a
// column-convention integer matrix and applied to the row lattice at the end.
struct GruberState {
  double A, B, C, xi, eta, zeta;
  double eps;
  int m[3][3];  // column convention: new basis columns = old columns * m

  explicit GruberState(const Lattice& lat) {
    const Mat3& r = lat.rows;
    A = dot(r[0], r[0]);
    B = dot(r[1], r[1]);
    C = dot(r[2], r[2]);
    xi = 2.0 * dot(r[1], r[2]);
    eta = 2.0 * dot(r[0], r[2]);
    zeta = 2.0 * dot(r[0], r[1]);
    double vol = std::fabs(det(r));
    if (vol < 1e-12) throw Error(ErrorKind::SingularLattice, "degenerate cell");
    eps = 1e-5 * std::cbrt(vol);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = (i == j) ? 1 : 0;
  }

  bool gt(double x, double y) const { return x > y + eps; }
  bool lt(double x, double y) const { return y > x + eps; }
  bool eq(double x, double y) const { return !gt(x, y) && !lt(x, y); }

  void apply(const int t[3][3]) {
    int r[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        r[i][j] = 0;
        for (int k = 0; k < 3; ++k) r[i][j] += m[i][k] * t[k][j];
      }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = r[i][j];
  }

  // Step 1: order A <= B (swap a, b).
  bool step1() {
    if (gt(A, B) || (eq(A, B) && gt(std::fabs(xi), std::fabs(eta)))) {
      static const int t[3][3] = {{0, -1, 0}, {-1, 0, 0}, {0, 0, -1}};
      apply(t);
      std::swap(A, B);
      std::swap(xi, eta);
      return true;
    }
    return false;
  }

  // Step 2: order B <= C (swap b, c).
  bool step2() {
    if (gt(B, C) || (eq(B, C) && gt(std::fabs(eta), std::fabs(zeta)))) {
      static const int t[3][3] = {{-1, 0, 0}, {0, 0, -1}, {0, -1, 0}};
      apply(t);
      std::swap(B, C);
      std::swap(eta, zeta);
      return true;
    }
    return false;
  }

  int sign_of(double v) const { return gt(v, 0) ? 1 : (lt(v, 0) ? -1 : 0); }

  // Steps 3/4: fix the signs of (xi, eta, zeta) with a diagonal +/-1 basis
  // change. The 8 sign patterns are scanned for the first that realises the
  // target (all positive when the sign product is positive, else all
  // non-positive).
  void normalize_signs() {
    int sx = sign_of(xi), se = sign_of(eta), sz = sign_of(zeta);
    bool all_positive = sx * se * sz > 0;
    static const int diags[8][3] = {{1, 1, 1},    {1, -1, -1}, {-1, 1, -1},
                                    {-1, -1, 1},  {-1, -1, -1}, {-1, 1, 1},
                                    {1, -1, 1},   {1, 1, -1}};
    for (const int* d : diags) {
      double nx = d[1] * d[2] * xi;
      double ne = d[0] * d[2] * eta;
      double nz = d[0] * d[1] * zeta;
      bool ok = all_positive ? (!lt(nx, 0) && !lt(ne, 0) && !lt(nz, 0))
                             : (!gt(nx, 0) && !gt(ne, 0) && !gt(nz, 0));
      if (ok) {
        int t[3][3] = {{d[0], 0, 0}, {0, d[1], 0}, {0, 0, d[2]}};
        apply(t);
        xi = nx;
        eta = ne;
        zeta = nz;
        return;
      }
    }
    throw Error(ErrorKind::NiggliDivergence, "niggli divergence");
  }

  // Step 5: |xi| <= B.
  bool step5() {
    if (gt(std::fabs(xi), B) || (eq(xi, B) && lt(2 * eta, zeta)) ||
        (eq(xi, -B) && lt(zeta, 0))) {
      int s = xi > 0 ? 1 : -1;
      int t[3][3] = {{1, 0, 0}, {0, 1, -s}, {0, 0, 1}};
      apply(t);
      C += B - s * xi;
      eta -= s * zeta;
      xi -= 2 * s * B;
      return true;
    }
    return false;
  }

  // Step 6: |eta| <= A.
  bool step6() {
    if (gt(std::fabs(eta), A) || (eq(eta, A) && lt(2 * xi, zeta)) ||
        (eq(eta, -A) && lt(zeta, 0))) {
      int s = eta > 0 ? 1 : -1;
      int t[3][3] = {{1, 0, -s}, {0, 1, 0}, {0, 0, 1}};
      apply(t);
      C += A - s * eta;
      xi -= s * zeta;
      eta -= 2 * s * A;
      return true;
    }
    return false;
  }

  // Step 7: |zeta| <= A.
  bool step7() {
    if (gt(std::fabs(zeta), A) || (eq(zeta, A) && lt(2 * xi, eta)) ||
        (eq(zeta, -A) && lt(eta, 0))) {
      int s = zeta > 0 ? 1 : -1;
      int t[3][3] = {{1, -s, 0}, {0, 1, 0}, {0, 0, 1}};
      apply(t);
      B += A - s * zeta;
      xi -= s * eta;
      zeta -= 2 * s * A;
      return true;
    }
    return false;
  }

  // Step 8: final body-diagonal shortening.
  bool step8() {
    double sum = A + B + xi + eta + zeta;
    if (lt(sum, 0) || (eq(sum, 0) && gt(2 * (A + eta) + zeta, 0))) {
      static const int t[3][3] = {{1, 0, 1}, {0, 1, 1}, {0, 0, 1}};
      apply(t);
      C += sum;
      xi += 2 * B + zeta;
      eta += 2 * A + zeta;
      return true;
    }
    return false;
  }
};

}  // namespace

NiggliResult niggli_reduce(const Lattice& lattice) {
  GruberState s(lattice);
  const int max_iter = 10000;
  int iter = 0;
  for (;;) {
    if (++iter > max_iter) throw Error(ErrorKind::NiggliDivergence, "niggli divergence");
    s.step1();
    if (s.step2()) continue;
    s.normalize_signs();
    if (s.step5()) continue;
    if (s.step6()) continue;
    if (s.step7()) continue;
    if (s.step8()) continue;
    break;
  }

  NiggliResult out;
  // Column-convention accumulated matrix maps to rows as rows' = m^T * rows.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.transform[i][j] = static_cast<double>(s.m[j][i]);
  out.reduced.rows = matmul(out.transform, lattice.rows);
  int tdet = static_cast<int>(std::lround(det(out.transform)));
  if (tdet != 1 && tdet != -1)
    throw Error(ErrorKind::NiggliDivergence, "niggli divergence");
  out.params = six_params(out.reduced);
  return out;
}

}  // namespace mmpt
