#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmpt/attributes.hpp"
#include "mmpt/checkpoint.hpp"
#include "mmpt/dataset.hpp"
#include "mmpt/errors.hpp"
#include "mmpt/graph.hpp"
#include "mmpt/lattice.hpp"
#include "mmpt/pipeline.hpp"
#include "mmpt/synthetic.hpp"

namespace {

using namespace mmpt;

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::InvalidArgument ? 1 : 2;
}

std::vector<int> parse_species(const std::string& list) {
  std::vector<int> out;
  std::string cur;
  for (char ch : list + ",") {
    if (ch == ',') {
      if (!cur.empty()) {
        try {
          out.push_back(std::stoi(cur));
        } catch (const std::exception&) {
          throw Error(ErrorKind::InvalidArgument, "bad species entry: " + cur);
        }
        cur.clear();
      }
    } else {
      cur += ch;
    }
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "species list is empty");
  return out;
}

Crystal load_single_record(const std::string& path) {
  std::vector<Crystal> records = load_records(path);
  if (records.size() != 1)
    throw Error(ErrorKind::DataError,
                path + ": expected exactly one record, found " + std::to_string(records.size()));
  return records[0];
}

int run_gen(const std::string& family, int count, uint64_t seed, const std::string& out,
            const std::string& species, double perturb, double cell_min, double cell_max) {
  SyntheticParams sp;
  sp.family = family;
  sp.perturbation = perturb;
  sp.cell_min = cell_min;
  sp.cell_max = cell_max;
  if (!species.empty()) sp.species = parse_species(species);
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "count must be at least 1");
  std::vector<Crystal> records = generate_batch(sp, seed, count);
  save_records(records, out);
  save_splits(default_splits(records.size(), seed), splits_path(out));
  std::printf("wrote %d records to %s\n", count, out.c_str());
  return 0;
}

int run_niggli(const std::string& in) {
  std::vector<Crystal> records = load_records(in);
  for (const Crystal& c : records) {
    NiggliResult r = niggli_reduce(c.lattice);
    std::printf("%.9f %.9f %.9f %.9f %.9f %.9f\n", r.params.a, r.params.b, r.params.c,
                r.params.alpha, r.params.beta, r.params.gamma);
  }
  return 0;
}

int run_graph(const std::string& in, double cutoff, int max_neighbors, const std::string& out) {
  Crystal c = load_single_record(in);
  MultiGraph g = build_graph(c, cutoff, max_neighbors);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw Error(ErrorKind::DataError, "cannot open output file: " + out);
  f << graph_to_json(g) << '\n';
  std::printf("wrote %zu edges to %s\n", g.edges.size(), out.c_str());
  return 0;
}

int run_labels(const std::string& in, const std::string& out) {
  Crystal c = load_single_record(in);
  MultiGraph g = build_graph(c);
  std::vector<AttributeLabels> labels = label_edges(c, g);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw Error(ErrorKind::DataError, "cannot open output file: " + out);
  f << labels_to_csv(g, labels);
  std::printf("wrote %zu labeled edges to %s\n", labels.size(), out.c_str());
  return 0;
}

struct CommonTrainArgs {
  std::string data, config_path, out;
  std::string metrics;
  uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;
  bool epochs_set = false;
  int batch_size = 0;
  bool batch_set = false;
};

RunConfig assemble_config(const CommonTrainArgs& a) {
  RunConfig c;
  if (!a.config_path.empty()) c = load_run_config(a.config_path);
  if (a.seed_set) c.seed = a.seed;
  if (a.epochs_set) c.epochs = a.epochs;
  if (a.batch_set) c.batch_size = a.batch_size;
  return c;
}

int run_pretrain(const CommonTrainArgs& args, bool no_reconstruction, bool single_mask,
                 bool no_bt, bool no_pimg_attention, bool no_pal, bool resume) {
  RunConfig config = assemble_config(args);
  config.no_reconstruction |= no_reconstruction;
  config.single_mask |= single_mask;
  config.no_bt |= no_bt;
  config.no_pimg_attention |= no_pimg_attention;
  config.no_pal |= no_pal;
  Dataset data = load_dataset(args.data);
  std::string metrics = args.metrics.empty() ? args.out + ".metrics.csv" : args.metrics;
  PretrainResult r = pretrain(data, config, args.out, metrics, resume);
  std::printf("pretrain done: best epoch %d mean loss %.12g\n", r.best_epoch, r.best_mean);
  std::printf("checkpoint: %s\nmetrics: %s\n", args.out.c_str(), metrics.c_str());
  return 0;
}

int run_finetune(const CommonTrainArgs& args, const std::string& property_name,
                 const std::string& ckpt, double label_fraction, bool fraction_set) {
  RunConfig config = assemble_config(args);
  if (!args.epochs_set && args.config_path.empty()) config.epochs = 15;
  if (!args.batch_set && args.config_path.empty()) config.batch_size = 8;
  if (fraction_set) config.label_fraction = label_fraction;
  Dataset data = load_dataset(args.data);
  std::string metrics = args.metrics.empty() ? args.out + ".metrics.csv" : args.metrics;
  FinetuneResult r = finetune(data, config, ckpt, property_name, args.out, metrics);
  std::printf("finetune done: best epoch %d val MAE %.12g test MAE %.12g\n", r.best_epoch,
              r.best_val_mae, r.test_at_best);
  std::printf("checkpoint: %s\nmetrics: %s\n", args.out.c_str(), metrics.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_path, const std::string& split,
             const std::string& property_name) {
  Dataset data = load_dataset(data_path);
  double v = evaluate(data, ckpt, property_name, split);
  std::printf("%.12g\n", v);
  return 0;
}

int run_check(const std::string& suite, uint64_t seed, int trials) {
  CheckReport rep;
  if (suite == "invariance") {
    rep = check_invariance(seed, trials > 0 ? trials : 100);
  } else if (suite == "gradients") {
    rep = check_gradients(seed);
  } else if (suite == "oracle") {
    rep = check_oracle(seed, trials > 0 ? trials : 500);
  } else if (suite == "masks") {
    rep = check_masks(seed, trials > 0 ? trials : 10000);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown suite: " + suite);
  }
  if (!rep.ok) {
    std::fprintf(stderr, "check failed after %d cases\n%s\n", rep.cases_run,
                 rep.counterexample.c_str());
    return 3;
  }
  std::printf("ok: %s (%d cases)\n", suite.c_str(), rep.cases_run);
  if (suite == "gradients") std::printf("%s\n", rep.counterexample.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mutex-masked pretraining for periodic crystals"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic crystal dataset");
  std::string gen_family = "perturbed_cubic", gen_out, gen_species;
  int gen_count = 0;
  uint64_t gen_seed = 0;
  double gen_perturb = 0.0, gen_cell_min = 3.0, gen_cell_max = 7.0;
  gen->add_option("--family", gen_family, "rocksalt | perovskite | perturbed_cubic");
  gen->add_option("--count", gen_count, "number of crystals")->required();
  gen->add_option("--seed", gen_seed, "generation seed")->required();
  gen->add_option("--out", gen_out, "output NDJSON path")->required();
  gen->add_option("--species", gen_species, "comma-separated atomic numbers");
  gen->add_option("--perturb", gen_perturb, "fractional jitter amplitude");
  gen->add_option("--cell-min", gen_cell_min, "minimum cubic cell edge");
  gen->add_option("--cell-max", gen_cell_max, "maximum cubic cell edge");

  // niggli
  auto* nig = app.add_subcommand("niggli", "print reduced cell parameters");
  std::string nig_in;
  nig->add_option("--in", nig_in, "crystal NDJSON path")->required();

  // graph
  auto* gra = app.add_subcommand("graph", "build the periodic neighbor multi-graph");
  std::string gra_in, gra_out;
  double gra_cutoff = 8.0;
  int gra_max = 12;
  gra->add_option("--in", gra_in, "single-record NDJSON path")->required();
  gra->add_option("--cutoff", gra_cutoff, "neighbor cutoff in angstroms");
  gra->add_option("--max-neighbors", gra_max, "neighbor cap per atom");
  gra->add_option("--out", gra_out, "output JSON path")->required();

  // labels
  auto* lab = app.add_subcommand("labels", "emit periodic attribute labels as CSV");
  std::string lab_in, lab_out;
  lab->add_option("--in", lab_in, "single-record NDJSON path")->required();
  lab->add_option("--out", lab_out, "output CSV path")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "self-supervised pre-training");
  CommonTrainArgs pre_args;
  bool f_norecon = false, f_single = false, f_nobt = false, f_noatt = false, f_nopal = false;
  bool f_resume = false;
  pre->add_option("--data", pre_args.data, "NDJSON dataset path")->required();
  pre->add_option("--config", pre_args.config_path, "run config JSON path");
  pre->add_option("--out", pre_args.out, "checkpoint output path")->required();
  pre->add_option("--metrics", pre_args.metrics, "metrics CSV path (default <out>.metrics.csv)");
  auto* pre_seed = pre->add_option("--seed", pre_args.seed, "override config seed");
  auto* pre_epochs = pre->add_option("--epochs", pre_args.epochs, "override config epochs");
  auto* pre_batch = pre->add_option("--batch-size", pre_args.batch_size,
                                    "override config batch size");
  pre->add_flag("--no-reconstruction", f_norecon, "drop the three reconstruction losses");
  pre->add_flag("--single-mask", f_single, "train one masked view, no Barlow term");
  pre->add_flag("--no-bt", f_nobt, "drop the Barlow Twins loss");
  pre->add_flag("--no-pimg-attention", f_noatt, "bypass periodic-image attention");
  pre->add_flag("--no-pal", f_nopal, "drop the periodic attribute losses");
  pre->add_flag("--resume", f_resume, "continue from <out>.state");

  // finetune
  auto* fin = app.add_subcommand("finetune", "supervised property fine-tuning");
  CommonTrainArgs fin_args;
  std::string fin_property, fin_ckpt;
  double fin_fraction = 1.0;
  fin->add_option("--data", fin_args.data, "NDJSON dataset path")->required();
  fin->add_option("--property", fin_property, "property name to fit")->required();
  fin->add_option("--ckpt", fin_ckpt, "pre-trained encoder checkpoint");
  auto* fin_frac = fin->add_option("--label-fraction", fin_fraction,
                                   "fraction of train labels used");
  fin->add_option("--config", fin_args.config_path, "run config JSON path");
  fin->add_option("--out", fin_args.out, "checkpoint output path")->required();
  fin->add_option("--metrics", fin_args.metrics, "metrics CSV path (default <out>.metrics.csv)");
  auto* fin_seed = fin->add_option("--seed", fin_args.seed, "override config seed");
  auto* fin_epochs = fin->add_option("--epochs", fin_args.epochs, "epochs (default 15)");
  auto* fin_batch = fin->add_option("--batch-size", fin_args.batch_size, "batch size (default 8)");

  // eval
  auto* eva = app.add_subcommand("eval", "MAE of a saved model on one split");
  std::string eva_ckpt, eva_data, eva_split = "test", eva_property;
  eva->add_option("--ckpt", eva_ckpt, "model checkpoint path")->required();
  eva->add_option("--data", eva_data, "NDJSON dataset path")->required();
  eva->add_option("--split", eva_split, "train | val | test");
  eva->add_option("--property", eva_property, "property override (default: from checkpoint)");

  // check
  auto* chk = app.add_subcommand("check", "run a property suite");
  std::string chk_suite;
  uint64_t chk_seed = 20240817ull;
  int chk_trials = 0;
  chk->add_option("--suite", chk_suite, "invariance | gradients | oracle | masks")->required();
  chk->add_option("--seed", chk_seed, "suite seed");
  chk->add_option("--trials", chk_trials, "override case count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return run_gen(gen_family, gen_count, gen_seed, gen_out, gen_species, gen_perturb,
                     gen_cell_min, gen_cell_max);
    if (nig->parsed()) return run_niggli(nig_in);
    if (gra->parsed()) return run_graph(gra_in, gra_cutoff, gra_max, gra_out);
    if (lab->parsed()) return run_labels(lab_in, lab_out);
    if (pre->parsed()) {
      pre_args.seed_set = pre_seed->count() > 0;
      pre_args.epochs_set = pre_epochs->count() > 0;
      pre_args.batch_set = pre_batch->count() > 0;
      return run_pretrain(pre_args, f_norecon, f_single, f_nobt, f_noatt, f_nopal, f_resume);
    }
    if (fin->parsed()) {
      fin_args.seed_set = fin_seed->count() > 0;
      fin_args.epochs_set = fin_epochs->count() > 0;
      fin_args.batch_set = fin_batch->count() > 0;
      return run_finetune(fin_args, fin_property, fin_ckpt, fin_fraction,
                          fin_frac->count() > 0);
    }
    if (eva->parsed()) return run_eval(eva_ckpt, eva_data, eva_split, eva_property);
    if (chk->parsed()) return run_check(chk_suite, chk_seed, chk_trials);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
