#include "mmpt/crystal.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "mmpt/errors.hpp"

namespace mmpt {

using nlohmann::json;

// IUPAC standard atomic weights to 4 significant figures; radioactive
// elements carry the mass number of the most stable isotope.
static constexpr double kAtomicMass[kNumClasses] = {
    0.0,    1.008,  4.003,  6.941,  9.012,  10.81,  12.01,  14.01,  16.00,
    19.00,  20.18,  22.99,  24.31,  26.98,  28.09,  30.97,  32.07,  35.45,
    39.95,  39.10,  40.08,  44.96,  47.87,  50.94,  52.00,  54.94,  55.85,
    58.93,  58.69,  63.55,  65.38,  69.72,  72.63,  74.92,  78.97,  79.90,
    83.80,  85.47,  87.62,  88.91,  91.22,  92.91,  95.95,  98.00,  101.1,
    102.9,  106.4,  107.9,  112.4,  114.8,  118.7,  121.8,  127.6,  126.9,
    131.3,  132.9,  137.3,  138.9,  140.1,  140.9,  144.2,  145.0,  150.4,
    152.0,  157.3,  158.9,  162.5,  164.9,  167.3,  168.9,  173.0,  175.0,
    178.5,  180.9,  183.8,  186.2,  190.2,  192.2,  195.1,  197.0,  200.6,
    204.4,  207.2,  209.0,  209.0,  210.0,  222.0,  223.0,  226.0,  227.0,
    232.0,  231.0,  238.0,  237.0,  244.0,  243.0,  247.0,  247.0,  251.0,
    252.0,  257.0,  258.0,  259.0,  266.0,  267.0,  268.0,  269.0,  270.0,
    277.0,  278.0,  281.0,  282.0,  285.0,  286.0,  289.0,  290.0,  293.0,
    294.0,  294.0};

double atomic_mass(int atomic_number) {
  if (atomic_number < 1 || atomic_number > kMaxAtomicNumber)
    throw Error(ErrorKind::AtomOutOfRange, "atomic number out of range");
  return kAtomicMass[atomic_number];
}

std::array<double, kNumClasses> one_hot(int atomic_number) {
  if (atomic_number < 1 || atomic_number > kMaxAtomicNumber)
    throw Error(ErrorKind::AtomOutOfRange, "atomic number out of range");
  std::array<double, kNumClasses> v{};
  v[static_cast<size_t>(atomic_number)] = 1.0;
  return v;
}

static double reduce_to_half(double d) {
  d -= std::round(d);
  return d;
}

double min_pairwise_distance(const Crystal& crystal) {
  double best = std::numeric_limits<double>::infinity();
  size_t n = crystal.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      Vec3 df = crystal.frac[j] - crystal.frac[i];
      df = {reduce_to_half(df.x), reduce_to_half(df.y), reduce_to_half(df.z)};
      // Scan the image shell around the reduced difference; exact for any
      // separation small enough to matter for duplicate detection.
      for (int k1 = -1; k1 <= 1; ++k1)
        for (int k2 = -1; k2 <= 1; ++k2)
          for (int k3 = -1; k3 <= 1; ++k3) {
            Vec3 shifted = {df.x + k1, df.y + k2, df.z + k3};
            best = std::min(best, norm(frac_to_cart(shifted, crystal.lattice)));
          }
    }
  }
  return best;
}

void validate(const Crystal& crystal) {
  if (crystal.atoms.empty())
    throw Error(ErrorKind::MalformedRecord, "crystal has no atoms");
  if (crystal.frac.size() != crystal.atoms.size())
    throw Error(ErrorKind::MalformedRecord, "atom/coordinate count mismatch");
  for (int z : crystal.atoms)
    if (z < 1 || z > kMaxAtomicNumber)
      throw Error(ErrorKind::AtomOutOfRange, "atomic number out of range");
  for (const Vec3& f : crystal.frac)
    if (!std::isfinite(f.x) || !std::isfinite(f.y) || !std::isfinite(f.z))
      throw Error(ErrorKind::MalformedRecord, "non-finite coordinate");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!std::isfinite(crystal.lattice.rows[i][j]))
        throw Error(ErrorKind::MalformedRecord, "non-finite lattice entry");
  if (crystal.lattice.volume() < 1e-9)
    throw Error(ErrorKind::SingularLattice, "degenerate cell");
  if (crystal.size() > 1 && min_pairwise_distance(crystal) <= 1e-6)
    throw Error(ErrorKind::DuplicateAtoms, "atoms closer than 1e-6 A");
}

Crystal apply_euclidean(const Crystal& crystal, const EuclideanTransform& t) {
  const Mat3& r = t.rotation;
  Mat3 rtr = matmul(transpose(r), r);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::fabs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > 1e-10)
        throw Error(ErrorKind::InvalidArgument, "rotation is not orthogonal");

  Crystal out = crystal;
  for (int i = 0; i < 3; ++i) out.lattice.rows[i] = colmul(r, crystal.lattice.rows[i]);
  for (size_t i = 0; i < crystal.size(); ++i) {
    Vec3 moved = colmul(r, crystal.cart(i)) + t.translation;
    out.frac[i] = cart_to_frac(moved, out.lattice);
  }
  return out;
}

Crystal make_supercell(const Crystal& crystal, const std::array<int, 3>& alpha) {
  for (int a : alpha)
    if (a < 1) throw Error(ErrorKind::InvalidArgument, "supercell factors must be >= 1");
  Crystal out;
  out.lattice = crystal.lattice;
  for (int i = 0; i < 3; ++i) out.lattice.rows[i] = crystal.lattice.rows[i] * static_cast<double>(alpha[static_cast<size_t>(i)]);
  out.property = crystal.property;
  double a1 = alpha[0], a2 = alpha[1], a3 = alpha[2];
  for (size_t i = 0; i < crystal.size(); ++i) {
    for (int k1 = 0; k1 < alpha[0]; ++k1)
      for (int k2 = 0; k2 < alpha[1]; ++k2)
        for (int k3 = 0; k3 < alpha[2]; ++k3) {
          out.atoms.push_back(crystal.atoms[i]);
          out.frac.push_back({(crystal.frac[i].x + k1) / a1,
                              (crystal.frac[i].y + k2) / a2,
                              (crystal.frac[i].z + k3) / a3});
        }
  }
  return out;
}

Crystal wrap_to_cell(const Crystal& crystal, const Vec3& beta) {
  auto wrap01 = [](double v) {
    double w = v - std::floor(v);
    return w < 1.0 ? w : 0.0;  // guard against floor rounding at the seam
  };
  Crystal out = crystal;
  for (Vec3& f : out.frac)
    f = {wrap01(f.x + beta.x), wrap01(f.y + beta.y), wrap01(f.z + beta.z)};
  return out;
}

static Vec3 parse_triple(const json& arr, const char* what) {
  if (!arr.is_array() || arr.size() != 3)
    throw Error(ErrorKind::MalformedRecord, std::string(what) + " must be a 3-vector");
  for (const auto& v : arr)
    if (!v.is_number())
      throw Error(ErrorKind::MalformedRecord, std::string(what) + " must be numeric");
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

Crystal parse_crystal(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorKind::MalformedRecord, "malformed JSON record");

  Crystal c;
  if (!j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty())
    throw Error(ErrorKind::MalformedRecord, "missing atoms array");
  for (const auto& a : j["atoms"]) {
    if (!a.is_number_integer())
      throw Error(ErrorKind::MalformedRecord, "atoms must be integers");
    c.atoms.push_back(a.get<int>());
  }

  if (!j.contains("lattice") || !j["lattice"].is_array() || j["lattice"].size() != 3)
    throw Error(ErrorKind::MalformedRecord, "missing 3x3 lattice");
  for (int i = 0; i < 3; ++i) c.lattice.rows[i] = parse_triple(j["lattice"][static_cast<size_t>(i)], "lattice row");

  bool has_frac = j.contains("frac_coords");
  bool has_cart = j.contains("cart_coords");
  if (has_frac == has_cart)
    throw Error(ErrorKind::MalformedRecord, "exactly one of frac_coords/cart_coords required");
  const json& coords = has_frac ? j["frac_coords"] : j["cart_coords"];
  if (!coords.is_array() || coords.size() != c.atoms.size())
    throw Error(ErrorKind::MalformedRecord, "coordinate count must match atoms");
  for (const auto& row : coords) {
    Vec3 v = parse_triple(row, "coordinate");
    c.frac.push_back(has_frac ? v : cart_to_frac(v, c.lattice));
  }

  if (j.contains("property")) {
    const json& p = j["property"];
    if (!p.is_object() || !p.contains("name") || !p["name"].is_string() ||
        !p.contains("value") || !p["value"].is_number())
      throw Error(ErrorKind::MalformedRecord, "property must be {name, value}");
    c.property = PropertyLabel{p["name"].get<std::string>(), p["value"].get<double>()};
  }

  validate(c);
  return c;
}

std::string serialize_crystal(const Crystal& crystal) {
  json j;
  j["atoms"] = crystal.atoms;
  json coords = json::array();
  for (const Vec3& f : crystal.frac) coords.push_back({f.x, f.y, f.z});
  j["frac_coords"] = coords;
  json lat = json::array();
  for (int i = 0; i < 3; ++i) {
    const Vec3& r = crystal.lattice.rows[i];
    lat.push_back({r.x, r.y, r.z});
  }
  j["lattice"] = lat;
  if (crystal.property)
    j["property"] = {{"name", crystal.property->name}, {"value", crystal.property->value}};
  return j.dump();
}

// Periodic nearest-neighbor distance for one atom over all atoms and images.
// A +/-1 shell around the reduced difference gives an upper bound; the scan
// is then widened so every image that could beat the bound is covered, which
// keeps the result exact for skewed cells.
static double nearest_neighbor_distance(const Crystal& crystal, size_t i) {
  size_t n = crystal.size();
  Vec3 widths = perpendicular_widths(crystal.lattice);

  auto scan = [&](const std::array<int, 3>& reach) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < n; ++j) {
      Vec3 df = crystal.frac[j] - crystal.frac[i];
      Vec3 base = {reduce_to_half(df.x), reduce_to_half(df.y), reduce_to_half(df.z)};
      for (int k1 = -reach[0]; k1 <= reach[0]; ++k1)
        for (int k2 = -reach[1]; k2 <= reach[1]; ++k2)
          for (int k3 = -reach[2]; k3 <= reach[2]; ++k3) {
            Vec3 shifted = {base.x + k1, base.y + k2, base.z + k3};
            double d = norm(frac_to_cart(shifted, crystal.lattice));
            if (d > 1e-9) best = std::min(best, d);
          }
    }
    return best;
  };

  double bound = scan({1, 1, 1});
  std::array<int, 3> reach;
  for (int m = 0; m < 3; ++m)
    reach[static_cast<size_t>(m)] = static_cast<int>(std::ceil(bound / widths[m])) + 1;
  if (reach[0] <= 1 && reach[1] <= 1 && reach[2] <= 1) return bound;
  return scan(reach);
}

double toy_property(const Crystal& crystal, const std::string& name) {
  validate(crystal);
  double n = static_cast<double>(crystal.size());
  if (name == "number_density") return n / crystal.lattice.volume();
  if (name == "mass_density") {
    double mass = 0.0;
    for (int z : crystal.atoms) mass += atomic_mass(z);
    return mass / crystal.lattice.volume();
  }
  if (name == "mean_nn_distance") {
    double total = 0.0;
    for (size_t i = 0; i < crystal.size(); ++i) total += nearest_neighbor_distance(crystal, i);
    return total / n;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown toy property: " + name);
}

}  // namespace mmpt
