// Acceptance gate: prints one pass/fail line per criterion and exits with the
// number of failures. Training criteria write artifacts under a scratch
// directory (argv[1] if given, otherwise <tmp>/mmpt_acceptance, wiped first).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmpt/attributes.hpp"
#include "mmpt/dataset.hpp"
#include "mmpt/graph.hpp"
#include "mmpt/lattice.hpp"
#include "mmpt/losses.hpp"
#include "mmpt/masking.hpp"
#include "mmpt/network.hpp"
#include "mmpt/pipeline.hpp"
#include "mmpt/rng.hpp"
#include "mmpt/synthetic.hpp"

using namespace mmpt;
namespace fs = std::filesystem;

namespace {

// Tolerances enforced directly by this binary. The check_* suites pin their
// own internally: invariance rel 1e-8, oracle distance 1e-9, mask frequency
// 0.5 +- 0.02, gradient rel err 1e-4.
constexpr double kNiggliInvarianceTol = 1e-6;
constexpr double kNiggliIdempotenceTol = 1e-8;
constexpr double kNiggliShearTol = 1e-9;
constexpr double kZeroLossTol = 1e-12;
constexpr double kEntropyTol = 1e-9;
constexpr double kBarlowTol = 1e-9;
constexpr double kLabelTol = 1e-12;
constexpr double kHalvingRatio = 0.5;
constexpr double kTrendNoise = 0.02;  // slack for per-seed gap comparisons
constexpr int kCellWinsNeeded = 4;    // of 5 seeds at 32 labels
constexpr int kTrendSeedsNeeded = 3;  // of 5 seeds with a non-increasing gap chain

template <class... Args>
std::string strf(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return std::string(buf);
}

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;
};

int g_failures = 0;

void run_criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = fn();
  } catch (const std::exception& e) {
    out.pass = false;
    out.notes.push_back(std::string("exception: ") + e.what());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool in_time = limit_s <= 0.0 || secs < limit_s;
  if (!(out.pass && in_time)) ++g_failures;
  std::printf("[%s] criterion %02d  %s%s%s  [%.1fs", out.pass && in_time ? "PASS" : "FAIL", id,
              name, out.detail.empty() ? "" : ": ", out.detail.c_str(), secs);
  if (limit_s > 0.0) std::printf(" / limit %.0fs", limit_s);
  std::printf("]\n");
  if (out.pass && !in_time) std::printf("    checks passed but the run exceeded its time limit\n");
  for (const std::string& n : out.notes) std::printf("    %s\n", n.c_str());
  std::fflush(stdout);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// epoch plus the eight report columns per pretraining CSV row.
std::vector<std::array<double, 9>> read_report_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::array<double, 9>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 9> row{};
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < 9 && std::getline(ss, cell, ','); ++i) row[i] = std::stod(cell);
    rows.push_back(row);
  }
  return rows;
}

std::array<double, 6> param_array(const SixParams& p) {
  return {p.a, p.b, p.c, p.alpha, p.beta, p.gamma};
}

// Random integer matrix with det +/-1 and entries bounded by 3, composed from
// elementary row operations.
Mat3 random_unimodular(Rng& rng) {
  Mat3 t = Mat3::identity();
  for (int step = 0; step < 24; ++step) {
    int op = static_cast<int>(uniform_int(rng, 3));
    int i = static_cast<int>(uniform_int(rng, 3));
    int j = static_cast<int>(uniform_int(rng, 2));
    if (j >= i) ++j;
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

Tensor winning_logits(const std::vector<int>& labels, int num_classes) {
  std::vector<double> v(labels.size() * static_cast<size_t>(num_classes), 0.0);
  for (size_t i = 0; i < labels.size(); ++i)
    v[i * static_cast<size_t>(num_classes) + static_cast<size_t>(labels[i])] = 200.0;
  return Tensor::constant({labels.size(), static_cast<size_t>(num_classes)}, std::move(v));
}

// 200 crystals: three families with jittered fractional coordinates so the
// nearest-neighbor property is not a linear readout of the cell parameters.
Dataset fixture_corpus() {
  std::vector<Crystal> recs;
  auto add = [&](const char* family, uint64_t seed, int count) {
    SyntheticParams p;
    p.family = family;
    p.cell_min = 3.0;
    p.cell_max = 7.0;
    p.perturbation = 0.08;
    std::vector<Crystal> batch = generate_batch(p, seed, count);
    recs.insert(recs.end(), batch.begin(), batch.end());
  };
  add("rocksalt", 11, 70);
  add("perovskite", 12, 70);
  add("perturbed_cubic", 13, 60);
  Dataset d;
  d.splits = default_splits(recs.size(), 0);
  d.records = std::move(recs);
  return d;
}

bool cols_zero(const std::vector<std::array<double, 9>>& rows, std::initializer_list<int> idx) {
  for (const auto& r : rows)
    for (int i : idx)
      if (r[static_cast<size_t>(i)] != 0.0) return false;
  return !rows.empty();
}

bool cols_positive(const std::vector<std::array<double, 9>>& rows, std::initializer_list<int> idx) {
  for (const auto& r : rows)
    for (int i : idx)
      if (!(r[static_cast<size_t>(i)] > 0.0)) return false;
  return !rows.empty();
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "mmpt_acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);
  std::printf("mmpt acceptance gate (scratch: %s)\n", work.string().c_str());
  std::fflush(stdout);

  Dataset corpus = fixture_corpus();

  // Both invariance criteria run the full suite (each trial exercises the
  // periodic re-wrap and a rigid motion) under independent seeds.
  run_criterion(1, "periodic invariance: re-wrapped cells keep sorted neighbor lists and encoder outputs (rel 1e-8)",
                60.0, [&] {
    CheckReport r = check_invariance(20260816, 100);
    Outcome o;
    o.pass = r.ok && r.cases_run == 100;
    o.detail = strf("%d crystals", r.cases_run);
    if (!r.ok) o.notes.push_back(r.counterexample);
    return o;
  });

  run_criterion(2, "euclidean invariance: rotations (det +/-1) plus translations keep h_S, h_L, predictions (rel 1e-8)",
                60.0, [&] {
    CheckReport r = check_invariance(909090, 100);
    Outcome o;
    o.pass = r.ok && r.cases_run == 100;
    o.detail = strf("%d crystals", r.cases_run);
    if (!r.ok) o.notes.push_back(r.counterexample);
    return o;
  });

  run_criterion(3, "graph oracle: cutoff graphs match the exhaustive +-3 image search exactly (distances 1e-9)",
                120.0, [&] {
    CheckReport r = check_oracle(20260816, 500);
    Outcome o;
    o.pass = r.ok && r.cases_run == 500;
    o.detail = strf("%d crystals", r.cases_run);
    if (!r.ok) o.notes.push_back(r.counterexample);
    return o;
  });

  run_criterion(4, "niggli reduction: unimodular invariance, idempotence, unit shear vs exhaustive oracle",
                60.0, [&] {
    Outcome o;
    Rng rng = make_rng(20260816, 4);
    double worst_inv = 0.0, worst_idem = 0.0;
    for (int t = 0; t < 200; ++t) {
      Lattice base = random_lattice(rng);
      NiggliResult ref = niggli_reduce(base);
      Mat3 u = random_unimodular(rng);
      Lattice changed;
      changed.rows = matmul(u, base.rows);
      auto a = param_array(ref.params);
      auto b = param_array(niggli_reduce(changed).params);
      auto c = param_array(niggli_reduce(ref.reduced).params);
      for (int i = 0; i < 6; ++i) {
        worst_inv = std::max(worst_inv, std::fabs(a[i] - b[i]));
        worst_idem = std::max(worst_idem, std::fabs(a[i] - c[i]));
      }
    }

    Lattice shear;
    shear.rows = {{1, 0, 0}, {1, 1, 0}, {0, 0, 1}};
    NiggliResult r = niggli_reduce(shear);
    auto got = param_array(r.params);
    std::array<double, 6> cube{1, 1, 1, 1.5707963267948966, 1.5707963267948966,
                               1.5707963267948966};
    bool shear_ok = true;
    for (int i = 0; i < 6; ++i) shear_ok &= std::fabs(got[i] - cube[i]) <= kNiggliShearTol;

    // Oracle: no unimodular recombination with entries in {-1,0,1} beats the
    // reduced cell's sorted lengths lexicographically.
    std::array<double, 3> best{r.params.a, r.params.b, r.params.c};
    auto lex_smaller = [](const std::array<double, 3>& x, const std::array<double, 3>& y,
                          double eps) {
      for (int i = 0; i < 3; ++i) {
        if (x[i] < y[i] - eps) return true;
        if (x[i] > y[i] + eps) return false;
      }
      return false;
    };
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
                      if (std::fabs(std::fabs(det(t)) - 1.0) > 1e-9) continue;
                      ++cells;
                      Mat3 m = matmul(t, shear.rows);
                      std::array<double, 3> len{norm(m[0]), norm(m[1]), norm(m[2])};
                      std::sort(len.begin(), len.end());
                      if (lex_smaller(len, best, kNiggliShearTol)) shear_ok = false;
                    }
    shear_ok &= cells > 1000;

    o.pass = worst_inv <= kNiggliInvarianceTol && worst_idem <= kNiggliIdempotenceTol && shear_ok;
    o.detail = strf("200 basis changes, worst drift %.2e (tol 1e-6), idempotence %.2e (tol 1e-8), "
                    "shear beats %d enumerated cells",
                    worst_inv, worst_idem, cells);
    return o;
  });

  run_criterion(5, "mutex masks: partition sizes, disjointness, coverage, inclusion frequency 0.5 +- 0.02",
                10.0, [&] {
    CheckReport r = check_masks(20260816, 10000);
    Outcome o;
    o.pass = r.ok;
    o.detail = strf("%d draws over sizes 1..9", r.cases_run);
    if (!r.ok) o.notes.push_back(r.counterexample);
    return o;
  });

  run_criterion(6, "gradients: analytic vs central finite differences through the full objective (rel 1e-4)",
                120.0, [&] {
    CheckReport r = check_gradients(20260816);
    Outcome o;
    o.pass = r.ok;
    nlohmann::json j = nlohmann::json::parse(r.counterexample, nullptr, false);
    double max_err = j.is_object() ? j.value("max_rel_err", -1.0) : -1.0;
    o.detail = strf("%d parameter components, max rel err %.2e", r.cases_run, max_err);
    if (!r.ok) o.notes.push_back(r.counterexample);
    return o;
  });

  run_criterion(7, "loss fixed points: perfect 0 (1e-12), uniform ln119/ln27/ln2 (1e-9), barlow I -> 0 and all-ones -> 2 lambda (1e-9)",
                0.0, [&] {
    Outcome o;
    SyntheticParams pv;
    pv.family = "perovskite";
    pv.cell_min = 3.5;
    pv.cell_max = 5.0;
    SyntheticParams rs;
    rs.family = "rocksalt";
    rs.cell_min = 4.0;
    rs.cell_max = 5.5;
    std::vector<Crystal> crystals{generate_synthetic(pv, 21), generate_synthetic(rs, 22)};
    std::vector<MultiGraph> graphs;
    for (const Crystal& c : crystals) graphs.push_back(build_graph(c, 5.0, 8));
    BatchGraph batch = make_batch({&crystals[0], &crystals[1]}, {&graphs[0], &graphs[1]});
    std::vector<MutexMasks> masks = {{{0, 2}, {1, 3, 4}, 5}, {{0, 1, 2, 3}, {4, 5, 6, 7}, 8}};

    double worst_zero = 0.0;
    Tensor atom = winning_logits(batch.atom_z, kNumClasses);
    worst_zero = std::max(worst_zero, loss_atom(atom, atom, batch, masks).item());
    Tensor coord = Tensor::constant({batch.num_nodes, 1}, batch.center_distance);
    worst_zero = std::max(worst_zero, loss_coord(coord, coord, batch, masks).item());
    Tensor lat = Tensor::constant({batch.num_crystals, 6}, batch.six_reduced);
    worst_zero = std::max(worst_zero, loss_lattice(lat, batch).item());
    Tensor dir = winning_logits(batch.edge_direction_label, kNumDirectionClasses);
    worst_zero = std::max(worst_zero, loss_direction(dir, dir, batch).item());
    Tensor unit = winning_logits(batch.edge_unit_label, 2);
    worst_zero = std::max(worst_zero, loss_unit_cell(unit, unit, batch).item());
    Tensor dist = Tensor::constant({batch.edge_distance.size(), 1}, batch.edge_distance);
    worst_zero = std::max(worst_zero, loss_distance(dist, dist, batch).item());

    size_t e = batch.edge_distance.size();
    Tensor ua = Tensor::zeros({batch.num_nodes, static_cast<size_t>(kNumClasses)});
    Tensor ud = Tensor::zeros({e, static_cast<size_t>(kNumDirectionClasses)});
    Tensor uu = Tensor::zeros({e, 2});
    double worst_uniform = std::fabs(loss_atom(ua, ua, batch, masks).item() - std::log(119.0));
    worst_uniform = std::max(worst_uniform,
                             std::fabs(loss_direction(ud, ud, batch).item() - std::log(27.0)));
    worst_uniform = std::max(worst_uniform,
                             std::fabs(loss_unit_cell(uu, uu, batch).item() - std::log(2.0)));

    LossConfig cfg;
    Tensor ortho = Tensor::constant({3, 2}, {1.0, 2.0, -1.0, 2.0, 2.0, 0.0});
    Tensor ones_c = Tensor::constant({3, 2}, {1.0, 1.0, 2.0, 2.0, 3.0, 3.0});
    double worst_barlow = loss_barlow(ortho, ortho, cfg).item();
    worst_barlow = std::max(worst_barlow, std::fabs(loss_barlow(ones_c, ones_c, cfg).item() -
                                                    2.0 * cfg.barlow_lambda));

    o.pass = worst_zero <= kZeroLossTol && worst_uniform <= kEntropyTol &&
             worst_barlow <= kBarlowTol;
    o.detail = strf("perfect worst %.1e, uniform worst %.1e, barlow worst %.1e", worst_zero,
                    worst_uniform, worst_barlow);
    return o;
  });

  run_criterion(8, "attribute labels: 27-class direction bijection, unit-cell equivalence on 100 graphs, cubic enumeration",
                0.0, [&] {
    Outcome o;
    bool bijection = true;
    std::set<int> seen;
    for (int s1 = -1; s1 <= 1; ++s1)
      for (int s2 = -1; s2 <= 1; ++s2)
        for (int s3 = -1; s3 <= 1; ++s3) {
          int cls = direction_class({s1, s2, s3});
          bijection &= cls >= 0 && cls < kNumDirectionClasses;
          ImageOffset back = direction_signs(cls);
          bijection &= back.k1 == s1 && back.k2 == s2 && back.k3 == s3;
          seen.insert(cls);
        }
    bijection &= seen.size() == 27 && direction_class({0, 0, 0}) == 13;

    bool equivalence = true;
    size_t edges_checked = 0;
    SyntheticParams p;
    p.cell_min = 3.0;
    p.cell_max = 6.5;
    p.perturbation = 0.04;
    const char* families[] = {"rocksalt", "perovskite", "perturbed_cubic"};
    for (int t = 0; t < 100 && equivalence; ++t) {
      p.family = families[t % 3];
      Crystal c = generate_synthetic(p, 1000 + static_cast<uint64_t>(t));
      MultiGraph g = build_graph(c, 8.0, 12);
      std::vector<AttributeLabels> labels = label_edges(c, g);
      equivalence &= labels.size() == g.edges.size();
      for (size_t i = 0; i < labels.size() && equivalence; ++i) {
        bool zero_offset = g.edges[i].offset == ImageOffset{0, 0, 0};
        equivalence &= labels[i].unit_cell == (zero_offset ? 1 : 0);
        equivalence &= (labels[i].direction_class == 13) == zero_offset;
        equivalence &= std::fabs(labels[i].distance - g.edges[i].distance) <= kLabelTol;
        ++edges_checked;
      }
    }

    Crystal cube;
    cube.atoms = {6};
    cube.frac = {{0.0, 0.0, 0.0}};
    cube.lattice.rows = {{2, 0, 0}, {0, 2, 0}, {0, 0, 2}};
    MultiGraph g = build_graph(cube, 2.5, 12);
    std::vector<AttributeLabels> labels = label_edges(cube, g);
    bool enumeration = labels.size() == 6;
    std::multiset<int> got, want;
    for (const AttributeLabels& l : labels) {
      got.insert(l.direction_class);
      enumeration &= l.unit_cell == 0;
      enumeration &= std::fabs(l.distance - 2.0) <= kLabelTol;
    }
    for (ImageOffset off : {ImageOffset{1, 0, 0}, ImageOffset{-1, 0, 0}, ImageOffset{0, 1, 0},
                            ImageOffset{0, -1, 0}, ImageOffset{0, 0, 1}, ImageOffset{0, 0, -1}})
      want.insert(direction_class(off));
    enumeration &= got == want;

    o.pass = bijection && equivalence && enumeration;
    o.detail = strf("bijection %s, %zu edges consistent, a=2 cube labels %s",
                    bijection ? "ok" : "BROKEN", edges_checked, enumeration ? "ok" : "BROKEN");
    return o;
  });

  run_criterion(9, "pretraining: 200 crystals, 50 epochs, default config halves the loss and repeats byte-identically",
                600.0, [&] {
    Outcome o;
    RunConfig pc;
    pc.seed = 7;
    auto run = [&](const char* tag) {
      fs::path ck = work / strf("c9_%s.mmpt", tag);
      fs::path csv = work / strf("c9_%s.csv", tag);
      PretrainResult r = pretrain(corpus, pc, ck.string(), csv.string());
      return std::tuple<PretrainResult, std::string, std::string, std::string>(
          r, file_bytes(ck), file_bytes(csv), file_bytes(ck.string() + ".state"));
    };
    auto [r1, ck1, csv1, st1] = run("a");
    auto [r2, ck2, csv2, st2] = run("b");
    double first = r1.epoch_means.front().total;
    double last = r1.epoch_means.back().total;
    bool halved = last <= kHalvingRatio * first;
    bool identical = ck1 == ck2 && csv1 == csv2 && st1 == st2 && !ck1.empty();
    o.pass = halved && identical && r1.epoch_means.size() == 50;
    o.detail = strf("epoch means %.3f -> %.3f (ratio %.3f, need <= 0.5), repeat byte-identical: %s",
                    first, last, last / first, identical ? "yes" : "NO");
    return o;
  });

  run_criterion(10, "transfer: 32-label fine-tuning beats scratch in >= 4/5 seeds, gap non-increasing over label fractions",
                1800.0, [&] {
    Outcome o;
    RunConfig pc;
    pc.seed = 7;
    pc.epochs = 200;
    fs::path ck = work / "c10_pretrained.mmpt";
    pretrain(corpus, pc, ck.string(), (work / "c10_pretrain.csv").string());

    auto best_val = [&](uint64_t seed, double frac, bool pretrained) {
      RunConfig fc;
      fc.seed = seed;
      fc.epochs = 15;
      fc.batch_size = 8;
      fc.label_fraction = frac;
      std::string tag = strf("c10_%s_s%llu_f%g", pretrained ? "p" : "s",
                             static_cast<unsigned long long>(seed), frac);
      FinetuneResult r =
          finetune(corpus, fc, pretrained ? ck.string() : "", "mean_nn_distance",
                   (work / (tag + ".mmpt")).string(), (work / (tag + ".csv")).string());
      return r.best_val_mae;
    };

    int wins = 0;
    double cell_p[5], cell_s[5];
    for (int s = 1; s <= 5; ++s) {
      cell_p[s - 1] = best_val(static_cast<uint64_t>(s), 0.2, true);
      cell_s[s - 1] = best_val(static_cast<uint64_t>(s), 0.2, false);
      if (cell_p[s - 1] <= cell_s[s - 1]) ++wins;
    }

    const double fracs[3] = {0.1, 0.5, 1.0};
    double gaps[3][5];
    for (int fi = 0; fi < 3; ++fi)
      for (int s = 1; s <= 5; ++s)
        gaps[fi][s - 1] = best_val(static_cast<uint64_t>(s), fracs[fi], false) -
                          best_val(static_cast<uint64_t>(s), fracs[fi], true);

    int trend = 0;
    for (int s = 0; s < 5; ++s) {
      bool chain = gaps[0][s] >= gaps[1][s] - kTrendNoise && gaps[1][s] >= gaps[2][s] - kTrendNoise;
      if (chain) ++trend;
      o.notes.push_back(strf(
          "seed %d: 32-label val MAE %.4f pretrained vs %.4f scratch; gap by fraction "
          "%.4f / %.4f / %.4f%s",
          s + 1, cell_p[s], cell_s[s], gaps[0][s], gaps[1][s], gaps[2][s],
          chain ? "" : " (chain broken)"));
    }
    o.pass = wins >= kCellWinsNeeded && trend >= kTrendSeedsNeeded;
    o.detail = strf("pretrained wins %d/5 at 32 labels (need >= %d), gap chain holds in %d/5 "
                    "seeds (need >= %d, slack %.2g)",
                    wins, kCellWinsNeeded, trend, kTrendSeedsNeeded, kTrendNoise);
    return o;
  });

  run_criterion(11, "ablations: each flag zeroes exactly its designated report columns, loss level and 5-epoch runs",
                300.0, [&] {
    Outcome o;

    // Loss-level exactness on one fixed batch and parameter draw.
    ModelConfig mc;
    mc.d_a = 16;
    mc.d_s = 8;
    mc.d_l = 4;
    mc.mp_layers = 2;
    mc.rbf_count = 4;
    mc.rbf_cutoff = 5.0;
    mc.cutoff = 5.0;
    mc.max_neighbors = 8;
    mc.decoder_layers = 1;
    mc.decoder_fc_layers = 3;
    mc.head_layers = 2;
    SyntheticParams sp;
    sp.family = "rocksalt";
    sp.cell_min = 4.0;
    sp.cell_max = 5.5;
    Crystal ca = generate_synthetic(sp, 41);
    sp.family = "perovskite";
    Crystal cb = generate_synthetic(sp, 42);
    MultiGraph ga = build_graph(ca, mc.cutoff, mc.max_neighbors);
    MultiGraph gb = build_graph(cb, mc.cutoff, mc.max_neighbors);
    BatchGraph bg = make_batch({&ca, &cb}, {&ga, &gb});
    Rng mrng = make_rng(5, 0);
    std::vector<MutexMasks> masks = {
        sample_mutex_masks(static_cast<int>(ca.size()), mrng),
        sample_mutex_masks(static_cast<int>(cb.size()), mrng)};
    RunConfig rc;
    rc.model = mc;
    ModelParams params = init_params(mc, 3);
    LossReport base = batch_loss(bg, masks, params, rc).report;
    auto flagged = [&](void (*set)(RunConfig&)) {
      RunConfig c = rc;
      set(c);
      return batch_loss(bg, masks, params, c).report;
    };
    LossReport nr = flagged([](RunConfig& c) { c.no_reconstruction = true; });
    LossReport np = flagged([](RunConfig& c) { c.no_pal = true; });
    LossReport nb = flagged([](RunConfig& c) { c.no_bt = true; });
    LossReport sm = flagged([](RunConfig& c) { c.single_mask = true; });
    LossReport na = flagged([](RunConfig& c) { c.no_pimg_attention = true; });
    bool exact = nr.l_a == 0.0 && nr.l_x == 0.0 && nr.l_l == 0.0 && nr.l_bt == base.l_bt &&
                 nr.l_die == base.l_die && nr.l_unit == base.l_unit && nr.l_dis == base.l_dis;
    exact &= np.l_die == 0.0 && np.l_unit == 0.0 && np.l_dis == 0.0 && np.l_a == base.l_a &&
             np.l_x == base.l_x && np.l_l == base.l_l && np.l_bt == base.l_bt;
    exact &= nb.l_bt == 0.0 && nb.l_a == base.l_a && nb.l_x == base.l_x && nb.l_l == base.l_l &&
             nb.l_die == base.l_die && nb.l_unit == base.l_unit && nb.l_dis == base.l_dis;
    exact &= sm.l_bt == 0.0 && sm.l_a > 0.0 && sm.l_a != base.l_a;
    exact &= na.l_bt > 0.0 && na.l_a > 0.0 && na.total != base.total;

    // Smoke runs: 40 jittered crystals, 5 epochs per flag.
    SyntheticParams cp;
    cp.cell_min = 3.0;
    cp.cell_max = 7.0;
    cp.perturbation = 0.08;
    Dataset small;
    small.records = generate_batch(cp, 13, 40);
    small.splits = default_splits(small.records.size(), 0);
    auto smoke = [&](const char* tag, void (*set)(RunConfig&)) {
      RunConfig c;
      c.seed = 99;
      c.epochs = 5;
      if (set) set(c);
      fs::path csv = work / strf("c11_%s.csv", tag);
      pretrain(small, c, (work / strf("c11_%s.mmpt", tag)).string(), csv.string());
      return read_report_csv(csv);
    };
    auto rows_base = smoke("base", nullptr);
    auto rows_nr = smoke("no_reconstruction", [](RunConfig& c) { c.no_reconstruction = true; });
    auto rows_np = smoke("no_pal", [](RunConfig& c) { c.no_pal = true; });
    auto rows_nb = smoke("no_bt", [](RunConfig& c) { c.no_bt = true; });
    auto rows_sm = smoke("single_mask", [](RunConfig& c) { c.single_mask = true; });
    auto rows_na = smoke("no_pimg_attention", [](RunConfig& c) { c.no_pimg_attention = true; });

    // Columns: 1 l_A, 2 l_X, 3 l_L, 4 l_BT, 5 l_Die, 6 l_Unit, 7 l_Dis, 8 total.
    bool runs = cols_positive(rows_base, {1, 2, 3, 4, 5, 6, 7});
    runs &= cols_zero(rows_nr, {1, 2, 3}) && cols_positive(rows_nr, {4, 5, 6, 7});
    runs &= cols_zero(rows_np, {5, 6, 7}) && cols_positive(rows_np, {1, 2, 3, 4});
    runs &= cols_zero(rows_nb, {4}) && cols_positive(rows_nb, {1, 2, 3, 5, 6, 7});
    runs &= cols_zero(rows_sm, {4}) && cols_positive(rows_sm, {1, 2, 3, 5, 6, 7});
    runs &= rows_sm[0][1] != rows_base[0][1];  // single view changes the reconstruction path
    runs &= cols_positive(rows_na, {1, 2, 3, 4, 5, 6, 7});
    runs &= rows_na[0][8] != rows_base[0][8];  // attention removal moves the objective

    o.pass = exact && runs;
    o.detail = strf("loss-level columns %s, 5-epoch runs %s", exact ? "exact" : "WRONG",
                    runs ? "consistent" : "WRONG");
    return o;
  });

  std::printf("acceptance: %d/11 criteria passed\n", 11 - g_failures);
  return g_failures;
}
