#include "mmpt/synthetic.hpp"

#include "mmpt/errors.hpp"
#include "mmpt/rng.hpp"

namespace mmpt {

static Lattice cubic(double a) {
  Lattice l;
  l.rows = {{a, 0, 0}, {0, a, 0}, {0, 0, a}};
  return l;
}

static int pick_species(const SyntheticParams& p, Rng& rng, size_t slot) {
  if (p.species.empty()) throw Error(ErrorKind::InvalidArgument, "empty species pool");
  if (slot < p.species.size() && p.family != "perturbed_cubic")
    return p.species[slot];
  return p.species[uniform_int(rng, p.species.size())];
}

Crystal generate_synthetic(const SyntheticParams& params, uint64_t seed) {
  if (params.perturbation < 0.0 || params.perturbation > 0.1)
    throw Error(ErrorKind::InvalidArgument, "perturbation must be in [0, 0.1]");
  if (params.cell_min < 2.0 || params.cell_max > 8.0 || params.cell_min > params.cell_max)
    throw Error(ErrorKind::InvalidArgument, "cell edge range must lie in [2, 8]");

  Rng rng = make_rng(seed);
  double a = uniform(rng, params.cell_min, params.cell_max);

  Crystal c;
  c.lattice = cubic(a);
  auto add = [&](int z, double x, double y, double zz) {
    c.atoms.push_back(z);
    c.frac.push_back({x, y, zz});
  };

  if (params.family == "rocksalt") {
    int za = pick_species(params, rng, 0);
    int zb = pick_species(params, rng, 1);
    add(za, 0.0, 0.0, 0.0);
    add(za, 0.5, 0.5, 0.0);
    add(za, 0.5, 0.0, 0.5);
    add(za, 0.0, 0.5, 0.5);
    add(zb, 0.5, 0.0, 0.0);
    add(zb, 0.0, 0.5, 0.0);
    add(zb, 0.0, 0.0, 0.5);
    add(zb, 0.5, 0.5, 0.5);
  } else if (params.family == "perovskite") {
    int za = pick_species(params, rng, 0);
    int zb = pick_species(params, rng, 1);
    int zx = pick_species(params, rng, 2);
    add(za, 0.0, 0.0, 0.0);
    add(zb, 0.5, 0.5, 0.5);
    add(zx, 0.5, 0.5, 0.0);
    add(zx, 0.5, 0.0, 0.5);
    add(zx, 0.0, 0.5, 0.5);
  } else if (params.family == "perturbed_cubic") {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          add(pick_species(params, rng, 0), 0.25 + 0.5 * i, 0.25 + 0.5 * j, 0.25 + 0.5 * k);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown family: " + params.family);
  }

  if (params.perturbation > 0.0) {
    double amp = params.perturbation;
    for (Vec3& f : c.frac)
      f = {f.x + uniform(rng, -amp, amp), f.y + uniform(rng, -amp, amp),
           f.z + uniform(rng, -amp, amp)};
  }

  validate(c);
  return c;
}

std::vector<Crystal> generate_batch(const SyntheticParams& params, uint64_t seed, int count) {
  std::vector<Crystal> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(generate_synthetic(params, seed ^ static_cast<uint64_t>(i)));
  return out;
}

}  // namespace mmpt
