#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "mmpt/lattice.hpp"
#include "mmpt/rng.hpp"

using namespace mmpt;

namespace {

constexpr double kHalfPi = 1.5707963267948966;

std::array<double, 6> param_array(const SixParams& p) {
  return {p.a, p.b, p.c, p.alpha, p.beta, p.gamma};
}

void check_params_close(const SixParams& got, const SixParams& want, double tol) {
  auto g = param_array(got), w = param_array(want);
  for (int i = 0; i < 6; ++i) CHECK(std::fabs(g[i] - w[i]) <= tol);
}

// Random integer matrix with det +/-1 and entries bounded by 3, built by
// composing elementary row operations that each preserve unimodularity.
Mat3 random_unimodular(Rng& rng) {
  Mat3 t = Mat3::identity();
  for (int step = 0; step < 24; ++step) {
    int op = static_cast<int>(uniform_int(rng, 3));
    int i = static_cast<int>(uniform_int(rng, 3));
    int j = static_cast<int>(uniform_int(rng, 2));
    if (j >= i) ++j;  // distinct row
    if (op == 0) {
      std::swap(t[i], t[j]);
    } else if (op == 1) {
      t[i] = -t[i];
    } else {
      double s = uniform_int(rng, 2) ? 1.0 : -1.0;
      Vec3 cand = t[i] + t[j] * s;
      if (std::fabs(cand.x) <= 3 && std::fabs(cand.y) <= 3 && std::fabs(cand.z) <= 3)
        t[i] = cand;
    }
  }
  return t;
}

Lattice random_lattice(Rng& rng) {
  for (;;) {
    Lattice l;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        l.rows[i][j] = (i == j ? uniform(rng, 2.5, 7.0) : uniform(rng, -1.5, 1.5));
    if (l.volume() > 8.0) return l;
  }
}

bool is_integer_matrix(const Mat3& m, double tol) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::fabs(m[i][j] - std::round(m[i][j])) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("six params of simple cells") {
  Lattice cube;
  cube.rows = {{4, 0, 0}, {0, 4, 0}, {0, 0, 4}};
  check_params_close(six_params(cube), {4, 4, 4, kHalfPi, kHalfPi, kHalfPi}, 1e-12);

  // Hexagonal-style cell: gamma between rows 0 and 1 is 60 degrees.
  Lattice hex;
  hex.rows = {{2, 0, 0}, {1, std::sqrt(3.0), 0}, {0, 0, 3}};
  check_params_close(six_params(hex), {2, 2, 3, kHalfPi, kHalfPi, 1.0471975511965976}, 1e-12);
}

TEST_CASE("frac cart round trip") {
  Rng rng = make_rng(7, 1);
  for (int t = 0; t < 20; ++t) {
    Lattice l = random_lattice(rng);
    Vec3 f{uniform01(rng), uniform01(rng), uniform01(rng)};
    Vec3 back = cart_to_frac(frac_to_cart(f, l), l);
    CHECK(norm(back - f) < 1e-12);
  }
}

TEST_CASE("perpendicular widths") {
  Lattice cube;
  cube.rows = {{3, 0, 0}, {0, 3, 0}, {0, 0, 3}};
  Vec3 w = perpendicular_widths(cube);
  CHECK(w.x == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(w.y == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(w.z == doctest::Approx(3.0).epsilon(1e-12));

  // Shearing row 0 along row 1 leaves every width unchanged.
  Lattice sheared = cube;
  sheared.rows[0] = sheared.rows[0] + sheared.rows[1] * 0.5;
  Vec3 ws = perpendicular_widths(sheared);
  CHECK(ws.x == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("niggli reduces the unit shear to the cube") {
  Lattice l;
  l.rows = {{1, 0, 0}, {1, 1, 0}, {0, 0, 1}};
  NiggliResult r = niggli_reduce(l);
  check_params_close(r.params, {1, 1, 1, kHalfPi, kHalfPi, kHalfPi}, 1e-9);

  CHECK(is_integer_matrix(r.transform, 1e-9));
  CHECK(std::fabs(std::fabs(det(r.transform)) - 1.0) < 1e-9);
  Mat3 rebuilt = matmul(r.transform, l.rows);
  for (int i = 0; i < 3; ++i) CHECK(norm(rebuilt[i] - r.reduced.rows[i]) < 1e-9);

  // Exhaustive oracle: no unimodular recombination with entries in {-1,0,1}
  // yields lexicographically smaller sorted lengths than the reduced cell.
  std::array<double, 3> best{r.params.a, r.params.b, r.params.c};
  int cells = 0;
  std::array<int, 9> e{};
  for (e[0] = -1; e[0] <= 1; ++e[0])
    for (e[1] = -1; e[1] <= 1; ++e[1])
      for (e[2] = -1; e[2] <= 1; ++e[2])
        for (e[3] = -1; e[3] <= 1; ++e[3])
          for (e[4] = -1; e[4] <= 1; ++e[4])
            for (e[5] = -1; e[5] <= 1; ++e[5])
              for (e[6] = -1; e[6] <= 1; ++e[6])
                for (e[7] = -1; e[7] <= 1; ++e[7])
                  for (e[8] = -1; e[8] <= 1; ++e[8]) {
                    Mat3 t;
                    t[0] = {double(e[0]), double(e[1]), double(e[2])};
                    t[1] = {double(e[3]), double(e[4]), double(e[5])};
                    t[2] = {double(e[6]), double(e[7]), double(e[8])};
                    double d = det(t);
                    if (std::fabs(std::fabs(d) - 1.0) > 1e-9) continue;
                    ++cells;
                    Mat3 m = matmul(t, l.rows);
                    std::array<double, 3> len{norm(m[0]), norm(m[1]), norm(m[2])};
                    std::sort(len.begin(), len.end());
                    CHECK(len >= best);
                  }
  CHECK(cells > 1000);  // the unimodular family is genuinely enumerated
}

TEST_CASE("niggli idempotence") {
  Rng rng = make_rng(11, 2);
  for (int t = 0; t < 50; ++t) {
    Lattice l = random_lattice(rng);
    NiggliResult once = niggli_reduce(l);
    NiggliResult twice = niggli_reduce(once.reduced);
    auto a = param_array(once.params), b = param_array(twice.params);
    for (int i = 0; i < 6; ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-8);
  }
}

TEST_CASE("niggli invariant under unimodular basis changes") {
  Rng rng = make_rng(13, 3);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    Lattice base = random_lattice(rng);
    SixParams ref = niggli_reduce(base).params;
    Mat3 u = random_unimodular(rng);
    Lattice changed;
    changed.rows = matmul(u, base.rows);
    SixParams got = niggli_reduce(changed).params;
    auto a = param_array(ref), b = param_array(got);
    for (int i = 0; i < 6; ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-6);
    CHECK(std::fabs(changed.volume() - base.volume()) < 1e-9 * base.volume());
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("niggli cell conventions") {
  Rng rng = make_rng(17, 4);
  for (int t = 0; t < 50; ++t) {
    NiggliResult r = niggli_reduce(random_lattice(rng));
    CHECK(r.params.a <= r.params.b + 1e-9);
    CHECK(r.params.b <= r.params.c + 1e-9);
    // Niggli type: the three angles are all acute or all non-acute.
    bool all_acute = r.params.alpha < kHalfPi + 1e-9 && r.params.beta < kHalfPi + 1e-9 &&
                     r.params.gamma < kHalfPi + 1e-9;
    bool all_obtuse = r.params.alpha >= kHalfPi - 1e-9 && r.params.beta >= kHalfPi - 1e-9 &&
                      r.params.gamma >= kHalfPi - 1e-9;
    CHECK((all_acute || all_obtuse));
    CHECK(std::fabs(r.reduced.volume() - std::fabs(det(matmul(r.transform, r.reduced.rows))) /
                                             std::fabs(det(r.transform))) < 1e-6);
  }
}

TEST_CASE("degenerate lattice is rejected") {
  Lattice flat;
  flat.rows = {{1, 0, 0}, {2, 0, 0}, {0, 0, 1}};
  CHECK_THROWS_AS(niggli_reduce(flat), Error);
  CHECK_THROWS_AS(cart_to_frac({1, 1, 1}, flat), Error);
}
