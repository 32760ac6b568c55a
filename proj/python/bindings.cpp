// Python surface over the engine: crystal data model, Niggli reduction,
// periodic graphs, mutex masks, attribute labels, losses, and the training
// pipelines. Heavy array plumbing stays in C++; everything crosses the
// boundary as plain lists, tuples, and dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmpt/attributes.hpp"
#include "mmpt/checkpoint.hpp"
#include "mmpt/dataset.hpp"
#include "mmpt/errors.hpp"
#include "mmpt/graph.hpp"
#include "mmpt/lattice.hpp"
#include "mmpt/masking.hpp"
#include "mmpt/network.hpp"
#include "mmpt/pipeline.hpp"
#include "mmpt/rng.hpp"
#include "mmpt/synthetic.hpp"

namespace py = pybind11;
using namespace mmpt;

namespace {

using Rows3 = std::array<std::array<double, 3>, 3>;

Lattice lattice_from_rows(const Rows3& rows) {
  Lattice l;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) l.rows[i][j] = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return l;
}

Rows3 rows_from_mat(const Mat3& m) {
  Rows3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[static_cast<size_t>(i)][static_cast<size_t>(j)] = m[i][j];
  return out;
}

std::vector<std::array<double, 3>> frac_list(const Crystal& c) {
  std::vector<std::array<double, 3>> out;
  out.reserve(c.frac.size());
  for (const Vec3& v : c.frac) out.push_back({v.x, v.y, v.z});
  return out;
}

RunConfig config_from_json(const std::string& config) {
  return config.empty() ? RunConfig{} : parse_run_config(config);
}

py::dict report_dict(const LossReport& r) {
  py::dict d;
  d["l_A"] = r.l_a;
  d["l_X"] = r.l_x;
  d["l_L"] = r.l_l;
  d["l_BT"] = r.l_bt;
  d["l_Die"] = r.l_die;
  d["l_Unit"] = r.l_unit;
  d["l_Dis"] = r.l_dis;
  d["total"] = r.total;
  return d;
}

// Config, attention flag, and parameters frozen together for inference.
struct Model {
  ModelConfig config;
  bool use_attention = true;
  ModelParams params;

  static Model fresh(const std::string& config, uint64_t seed) {
    RunConfig rc = config_from_json(config);
    validate_config(rc.model);
    return Model{rc.model, !rc.no_pimg_attention, init_params(rc.model, seed)};
  }

  static Model from_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    auto it = ck.meta.find("config");
    if (it == ck.meta.end())
      throw Error(ErrorKind::BadCheckpoint, "checkpoint carries no config");
    RunConfig rc = parse_run_config(it->second);
    Model m{rc.model, !rc.no_pimg_attention, init_params(rc.model, 0)};
    for (auto& [name, t] : m.params) {
      auto found = ck.tensors.find(name);
      if (found == ck.tensors.end())
        throw Error(ErrorKind::BadCheckpoint, "checkpoint missing tensor " + name);
      t = found->second;
    }
    return m;
  }

  std::pair<std::vector<std::vector<double>>, std::vector<double>> encode(
      const Crystal& c) const {
    MultiGraph g = build_graph(c, config.cutoff, config.max_neighbors);
    BatchGraph b = make_batch({&c}, {&g});
    Tensor hs = encode_structure(b, params, config, use_attention);
    Tensor hl = encode_lattice(b, params, config);
    std::vector<std::vector<double>> atoms(c.size(), std::vector<double>(config.d_s));
    for (size_t i = 0; i < c.size(); ++i)
      for (size_t j = 0; j < config.d_s; ++j) atoms[i][j] = hs.value()[i * config.d_s + j];
    std::vector<double> lat(hl.value().begin(), hl.value().end());
    return {std::move(atoms), std::move(lat)};
  }

  double predict_one(const Crystal& c) const {
    return predict({&c}, params, config, use_attention)[0];
  }
};

py::dict check_dict(const CheckReport& r) {
  py::dict d;
  d["ok"] = r.ok;
  d["cases"] = r.cases_run;
  d["counterexample"] = r.counterexample;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mutex-masked pre-training engine for periodic crystals";

  py::register_exception<Error>(m, "EngineError");

  py::class_<Crystal>(m, "Crystal")
      .def(py::init([](std::vector<int> atoms, std::vector<std::array<double, 3>> frac,
                       Rows3 lattice, std::optional<std::pair<std::string, double>> property) {
             Crystal c;
             c.atoms = std::move(atoms);
             for (const auto& f : frac) c.frac.push_back({f[0], f[1], f[2]});
             c.lattice = lattice_from_rows(lattice);
             if (property) c.property = PropertyLabel{property->first, property->second};
             validate(c);
             return c;
           }),
           py::arg("atoms"), py::arg("frac"), py::arg("lattice"),
           py::arg("property") = py::none())
      .def_property_readonly("atoms", [](const Crystal& c) { return c.atoms; })
      .def_property_readonly("frac", &frac_list)
      .def_property_readonly("lattice",
                             [](const Crystal& c) { return rows_from_mat(c.lattice.rows); })
      .def_property_readonly("property",
                             [](const Crystal& c) -> std::optional<std::pair<std::string, double>> {
                               if (!c.property) return std::nullopt;
                               return std::make_pair(c.property->name, c.property->value);
                             })
      .def("__len__", &Crystal::size)
      .def("__repr__", [](const Crystal& c) {
        return "Crystal(" + std::to_string(c.size()) + " atoms, volume " +
               std::to_string(c.lattice.volume()) + ")";
      });

  m.def("generate",
        [](const std::string& family, int count, uint64_t seed, double cell_min, double cell_max,
           double perturbation, std::optional<std::vector<int>> species) {
          SyntheticParams p;
          p.family = family;
          p.cell_min = cell_min;
          p.cell_max = cell_max;
          p.perturbation = perturbation;
          if (species) p.species = *species;
          return generate_batch(p, seed, count);
        },
        py::arg("family") = "perturbed_cubic", py::arg("count") = 1, py::arg("seed") = 0,
        py::arg("cell_min") = 3.0, py::arg("cell_max") = 7.0, py::arg("perturbation") = 0.0,
        py::arg("species") = py::none(),
        "Synthetic crystals: rocksalt, perovskite, or perturbed_cubic.");

  m.def("niggli",
        [](const Rows3& rows) {
          NiggliResult r = niggli_reduce(lattice_from_rows(rows));
          py::dict d;
          d["a"] = r.params.a;
          d["b"] = r.params.b;
          d["c"] = r.params.c;
          d["alpha"] = r.params.alpha;
          d["beta"] = r.params.beta;
          d["gamma"] = r.params.gamma;
          d["rows"] = rows_from_mat(r.reduced.rows);
          d["transform"] = rows_from_mat(r.transform);
          return d;
        },
        py::arg("lattice"), "Niggli-reduced cell parameters (angles in radians).");

  m.def("build_graph",
        [](const Crystal& c, double cutoff, int max_neighbors) {
          MultiGraph g = build_graph(c, cutoff, max_neighbors);
          std::vector<std::tuple<int, int, std::array<int, 3>, double>> edges;
          edges.reserve(g.edges.size());
          for (const GraphEdge& e : g.edges)
            edges.emplace_back(e.src, e.dst,
                               std::array<int, 3>{e.offset.k1, e.offset.k2, e.offset.k3},
                               e.distance);
          return edges;
        },
        py::arg("crystal"), py::arg("cutoff") = 8.0, py::arg("max_neighbors") = 12,
        "Periodic neighbor edges as (src, dst, (k1, k2, k3), distance).");

  m.def("edge_labels",
        [](const Crystal& c, double cutoff, int max_neighbors) {
          MultiGraph g = build_graph(c, cutoff, max_neighbors);
          std::vector<std::tuple<int, int, double>> out;
          out.reserve(g.edges.size());
          for (const AttributeLabels& l : label_edges(c, g))
            out.emplace_back(l.direction_class, l.unit_cell, l.distance);
          return out;
        },
        py::arg("crystal"), py::arg("cutoff") = 8.0, py::arg("max_neighbors") = 12,
        "Per-edge (direction_class, unit_cell, distance) self-supervision targets.");

  m.def("direction_class",
        [](const std::array<int, 3>& k) { return direction_class({k[0], k[1], k[2]}); },
        py::arg("offset"), "Ternary sign class of an image offset, 0..26.");
  m.def("direction_signs",
        [](int cls) {
          ImageOffset o = direction_signs(cls);
          return std::array<int, 3>{o.k1, o.k2, o.k3};
        },
        py::arg("direction_class"), "Sign triple encoded by a direction class.");

  m.def("sample_masks",
        [](int num_atoms, uint64_t seed) {
          Rng rng = make_rng(seed, 0x6d61736bull);
          MutexMasks mm = sample_mutex_masks(num_atoms, rng);
          return std::make_pair(mm.m, mm.m_bar);
        },
        py::arg("num_atoms"), py::arg("seed") = 0,
        "One mutex mask draw: (M, M_bar) partitioning 0..num_atoms-1 with |M| = n // 2.");

  m.def("property_label", &property_label, py::arg("crystal"), py::arg("name"),
        "Stored property when the name matches, else the derived toy property.");

  m.def("save_dataset",
        [](const std::vector<Crystal>& records, const std::string& path) {
          save_records(records, path);
        },
        py::arg("records"), py::arg("path"), "Newline-delimited JSON records.");
  m.def("load_dataset", &load_records, py::arg("path"),
        "Crystals from a newline-delimited JSON file.");

  m.def("default_config", [] { return run_config_json(RunConfig{}); },
        "Default run config as a JSON string (edit fields, pass back as `config`).");

  m.def("loss_report",
        [](const std::vector<Crystal>& crystals, const std::string& config, uint64_t seed,
           uint64_t mask_seed) {
          if (crystals.empty()) throw Error(ErrorKind::InvalidArgument, "no crystals");
          RunConfig rc = config_from_json(config);
          ModelParams params = init_params(rc.model, seed);
          std::vector<MultiGraph> graphs;
          std::vector<const Crystal*> cp;
          std::vector<const MultiGraph*> gp;
          for (const Crystal& c : crystals)
            graphs.push_back(build_graph(c, rc.model.cutoff, rc.model.max_neighbors));
          for (size_t i = 0; i < crystals.size(); ++i) {
            cp.push_back(&crystals[i]);
            gp.push_back(&graphs[i]);
          }
          BatchGraph batch = make_batch(cp, gp);
          Rng rng = make_rng(mask_seed, 0x6d61736bull);
          std::vector<MutexMasks> masks;
          for (const Crystal& c : crystals)
            masks.push_back(sample_mutex_masks(static_cast<int>(c.size()), rng));
          return report_dict(batch_loss(batch, masks, params, rc).report);
        },
        py::arg("crystals"), py::arg("config") = "", py::arg("seed") = 0,
        py::arg("mask_seed") = 0,
        "All loss columns for one batch under a fresh seeded model.");

  m.def("pretrain",
        [](const std::string& data, const std::string& out, const std::string& metrics_csv,
           const std::string& config, bool resume) {
          PretrainResult r = pretrain(load_dataset(data), config_from_json(config), out,
                                      metrics_csv, resume);
          py::dict d;
          d["best_epoch"] = r.best_epoch;
          d["best_mean"] = r.best_mean;
          py::list epochs;
          for (const LossReport& rep : r.epoch_means) epochs.append(report_dict(rep));
          d["epoch_means"] = epochs;
          return d;
        },
        py::arg("data"), py::arg("out"), py::arg("metrics_csv"), py::arg("config") = "",
        py::arg("resume") = false,
        "Self-supervised pre-training over the train split of a dataset file.");

  m.def("finetune",
        [](const std::string& data, const std::string& property, const std::string& out,
           const std::string& metrics_csv, const std::string& ckpt, const std::string& config) {
          FinetuneResult r =
              finetune(load_dataset(data), config_from_json(config), ckpt, property, out,
                       metrics_csv);
          py::dict d;
          d["best_epoch"] = r.best_epoch;
          d["best_val_mae"] = r.best_val_mae;
          d["test_at_best"] = r.test_at_best;
          d["train_mae"] = r.train_mae;
          d["val_mae"] = r.val_mae;
          d["test_mae"] = r.test_mae;
          return d;
        },
        py::arg("data"), py::arg("property"), py::arg("out"), py::arg("metrics_csv"),
        py::arg("ckpt") = "", py::arg("config") = "",
        "Supervised fine-tuning; an empty ckpt trains from scratch.");

  m.def("evaluate",
        [](const std::string& data, const std::string& model, const std::string& property,
           const std::string& split) { return evaluate(load_dataset(data), model, property, split); },
        py::arg("data"), py::arg("model"), py::arg("property") = "", py::arg("split") = "test",
        "MAE of a saved fine-tuned model over one dataset split.");

  m.def("check",
        [](const std::string& suite, uint64_t seed, int trials) {
          if (suite == "invariance") return check_dict(check_invariance(seed, trials > 0 ? trials : 100));
          if (suite == "gradients") return check_dict(check_gradients(seed));
          if (suite == "oracle") return check_dict(check_oracle(seed, trials > 0 ? trials : 500));
          if (suite == "masks") return check_dict(check_masks(seed, trials > 0 ? trials : 10000));
          throw Error(ErrorKind::InvalidArgument, "unknown suite: " + suite);
        },
        py::arg("suite"), py::arg("seed") = 20240817ull, py::arg("trials") = 0,
        "Verification suites: invariance, gradients, oracle, masks.");

  py::class_<Model>(m, "Model")
      .def(py::init(&Model::fresh), py::arg("config") = "", py::arg("seed") = 0)
      .def_static("load", &Model::from_checkpoint, py::arg("path"),
                  "Rebuild a model from a pre-training or fine-tuning checkpoint.")
      .def("encode", &Model::encode, py::arg("crystal"),
           "Per-atom structure embeddings and the lattice embedding: (h_S, h_L).")
      .def("predict", &Model::predict_one, py::arg("crystal"),
           "Scalar property prediction from the pooled head.")
      .def_property_readonly("d_s", [](const Model& m) { return m.config.d_s; })
      .def_property_readonly("d_l", [](const Model& m) { return m.config.d_l; });
}
