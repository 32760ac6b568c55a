#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mmpt/checkpoint.hpp"
#include "mmpt/errors.hpp"
#include "mmpt/graph.hpp"
#include "mmpt/pipeline.hpp"
#include "mmpt/rng.hpp"
#include "mmpt/synthetic.hpp"

using namespace mmpt;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run(int epochs) {
  RunConfig rc;
  rc.seed = 77;
  rc.epochs = epochs;
  rc.batch_size = 4;
  rc.model.d_a = 12;
  rc.model.d_s = 8;
  rc.model.d_l = 4;
  rc.model.mp_layers = 1;
  rc.model.rbf_count = 4;
  rc.model.rbf_cutoff = 5.0;
  rc.model.cutoff = 5.0;
  rc.model.max_neighbors = 8;
  rc.model.decoder_layers = 1;
  rc.model.decoder_fc_layers = 3;
  rc.model.head_layers = 2;
  return rc;
}

Dataset tiny_dataset() {
  SyntheticParams sp;
  sp.family = "perturbed_cubic";
  sp.cell_min = 3.6;
  sp.cell_max = 5.2;
  sp.perturbation = 0.05;
  Dataset d;
  d.records = generate_batch(sp, 31, 12);
  d.splits.train = {0, 1, 2, 3, 4, 5, 6, 7};
  d.splits.val = {8, 9};
  d.splits.test = {10, 11};
  return d;
}

fs::path work_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "mmpt_pipeline_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

void check_report_sum(const LossReport& r) {
  double expected =
      5.0 * r.l_a + r.l_x + r.l_l + 0.5 * r.l_bt + r.l_die + r.l_unit + r.l_dis;
  CHECK(std::fabs(r.total - expected) < 1e-12);
}

}  // namespace

TEST_CASE("run config round trips and rejects bad input") {
  RunConfig d;
  CHECK(d.epochs == 50);
  CHECK(d.lr == 1e-5);
  CHECK(d.lr_encoder == 1e-3);
  CHECK(d.lr_head == 5e-3);

  RunConfig c = tiny_run(9);
  c.no_bt = true;
  c.label_fraction = 0.25;
  c.loss.barlow_lambda = 0.01;
  RunConfig back = parse_run_config(run_config_json(c));
  CHECK(back.seed == c.seed);
  CHECK(back.epochs == 9);
  CHECK(back.batch_size == 4);
  CHECK(back.no_bt);
  CHECK(back.label_fraction == 0.25);
  CHECK(back.loss.barlow_lambda == 0.01);
  CHECK(back.model.d_s == 8);
  CHECK(back.model.cutoff == 5.0);

  CHECK_THROWS_AS(parse_run_config("{\"learning_rate\": 1.0}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"model\": {\"width\": 3}}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"epochs\": 1.5}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"epochs\": 0}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"seed\": -4}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"label_fraction\": 0.0}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"label_fraction\": 1.5}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"lr\": 0.0}"), Error);
  CHECK_THROWS_AS(parse_run_config("{\"no_bt\": 1}"), Error);
  CHECK_THROWS_AS(parse_run_config("not json"), Error);
  CHECK_THROWS_AS(parse_run_config("[1, 2]"), Error);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), Error);

  fs::path dir = work_dir("config");
  std::ofstream(dir / "c.json") << "{\"epochs\": 3, \"model\": {\"d_s\": 16}}";
  RunConfig loaded = load_run_config((dir / "c.json").string());
  CHECK(loaded.epochs == 3);
  CHECK(loaded.model.d_s == 16);
  CHECK(loaded.lr == 1e-5);
}

TEST_CASE("adam drives a convex quadratic to its minimum deterministically") {
  std::vector<double> target = {1.5, -2.0, 0.25, 3.0};
  auto run = [&]() {
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor::parameter({4}, {0.0, 0.0, 0.0, 0.0}));
    Tensor w_star = Tensor::constant({4}, target);
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.05;
    for (int step = 0; step < 300; ++step) {
      Tensor& w = params.at("w");
      Tensor diff = sub(w, w_star);
      Tensor loss = sum(mul(diff, diff));
      w.zero_grad();
      loss.backward();
      adam_step(params, state, cfg);
    }
    CHECK(state.step == 300);
    return params.at("w").value();
  };
  std::vector<double> w1 = run(), w2 = run();
  CHECK(w1 == w2);
  for (size_t i = 0; i < 4; ++i) CHECK(std::fabs(w1[i] - target[i]) < 1e-3);
}

TEST_CASE("batch_loss ablation flags silence exactly their columns") {
  Dataset data = tiny_dataset();
  RunConfig rc = tiny_run(1);
  ModelParams params = init_params(rc.model, rc.seed);

  std::vector<const Crystal*> crystals;
  std::vector<MultiGraph> graphs;
  for (int i = 0; i < 3; ++i)
    graphs.push_back(build_graph(data.records[static_cast<size_t>(i)], rc.model.cutoff,
                                 rc.model.max_neighbors));
  for (int i = 0; i < 3; ++i) crystals.push_back(&data.records[static_cast<size_t>(i)]);
  std::vector<const MultiGraph*> gp = {&graphs[0], &graphs[1], &graphs[2]};
  BatchGraph batch = make_batch(crystals, gp);
  Rng rng = make_rng(5, 99);
  std::vector<MutexMasks> masks;
  for (const Crystal* c : crystals)
    masks.push_back(sample_mutex_masks(static_cast<int>(c->size()), rng));

  LossReport base = batch_loss(batch, masks, params, rc).report;
  CHECK(base.l_a > 0.0);
  CHECK(base.l_x > 0.0);
  CHECK(base.l_l > 0.0);
  CHECK(base.l_bt > 0.0);
  CHECK(base.l_die > 0.0);
  CHECK(base.l_unit > 0.0);
  CHECK(base.l_dis > 0.0);
  check_report_sum(base);

  RunConfig nr = rc;
  nr.no_reconstruction = true;
  LossReport r = batch_loss(batch, masks, params, nr).report;
  CHECK(r.l_a == 0.0);
  CHECK(r.l_x == 0.0);
  CHECK(r.l_l == 0.0);
  CHECK(r.l_bt == base.l_bt);
  CHECK(r.l_die == base.l_die);
  CHECK(r.l_unit == base.l_unit);
  CHECK(r.l_dis == base.l_dis);
  check_report_sum(r);

  RunConfig np = rc;
  np.no_pal = true;
  r = batch_loss(batch, masks, params, np).report;
  CHECK(r.l_die == 0.0);
  CHECK(r.l_unit == 0.0);
  CHECK(r.l_dis == 0.0);
  CHECK(r.l_a == base.l_a);
  CHECK(r.l_bt == base.l_bt);
  check_report_sum(r);

  RunConfig nb = rc;
  nb.no_bt = true;
  r = batch_loss(batch, masks, params, nb).report;
  CHECK(r.l_bt == 0.0);
  CHECK(r.l_a == base.l_a);
  CHECK(r.l_die == base.l_die);
  check_report_sum(r);

  RunConfig sm = rc;
  sm.single_mask = true;
  r = batch_loss(batch, masks, params, sm).report;
  CHECK(r.l_bt == 0.0);
  CHECK(r.l_a > 0.0);
  CHECK(r.l_a != base.l_a);  // one view instead of the view average
  check_report_sum(r);

  RunConfig na = rc;
  na.no_pimg_attention = true;
  r = batch_loss(batch, masks, params, na).report;
  CHECK(r.l_a > 0.0);
  CHECK(r.l_bt > 0.0);
  CHECK(r.l_die > 0.0);
  CHECK(r.total != base.total);
  check_report_sum(r);
}

TEST_CASE("pretraining is byte-deterministic and resumes from saved state") {
  Dataset data = tiny_dataset();
  RunConfig rc = tiny_run(4);
  fs::path dir = work_dir("pretrain");

  fs::path ck_a = dir / "a.mmpt", csv_a = dir / "a.csv";
  PretrainResult ra = pretrain(data, rc, ck_a.string(), csv_a.string());
  CHECK(ra.epoch_means.size() == 4);
  CHECK(ra.best_epoch >= 1);
  CHECK(ra.best_epoch <= 4);
  CHECK(line_count(csv_a) == 5);
  for (const LossReport& m : ra.epoch_means) check_report_sum(m);

  Checkpoint ck = load_checkpoint(ck_a.string());
  CHECK(ck.meta.at("kind") == "pretrain");
  CHECK(ck.meta.at("epoch") == std::to_string(ra.best_epoch));
  RunConfig stored = parse_run_config(ck.meta.at("config"));
  CHECK(stored.model.d_s == rc.model.d_s);

  fs::path ck_b = dir / "b.mmpt", csv_b = dir / "b.csv";
  pretrain(data, rc, ck_b.string(), csv_b.string());
  CHECK(file_bytes(ck_a) == file_bytes(ck_b));
  CHECK(file_bytes(csv_a) == file_bytes(csv_b));

  // Interrupting after epoch 2 leaves a state whose only difference from a
  // crashed 4-epoch run is the epochs field recorded in its config.
  RunConfig rc2 = rc;
  rc2.epochs = 2;
  fs::path ck_c = dir / "c.mmpt", csv_c = dir / "c.csv";
  pretrain(data, rc2, ck_c.string(), csv_c.string());
  Checkpoint st = load_checkpoint(ck_c.string() + ".state");
  st.meta["config"] = run_config_json(rc);
  save_checkpoint(st, ck_c.string() + ".state");

  PretrainResult rr = pretrain(data, rc, ck_c.string(), csv_c.string(), true);
  CHECK(rr.epoch_means.size() == 2);  // only the remaining epochs
  CHECK(file_bytes(csv_c) == file_bytes(csv_a));
  CHECK(file_bytes(ck_c.string() + ".state") == file_bytes(ck_a.string() + ".state"));
  CHECK(rr.best_epoch == ra.best_epoch);
  CHECK(rr.best_mean == ra.best_mean);

  // Resume demands the state's config.
  RunConfig other = rc;
  other.batch_size = 2;
  CHECK_THROWS_AS(pretrain(data, other, ck_c.string(), csv_c.string(), true), Error);

  Dataset empty_train = data;
  empty_train.splits.train.clear();
  CHECK_THROWS_AS(pretrain(empty_train, rc, (dir / "d.mmpt").string(),
                           (dir / "d.csv").string()),
                  Error);
}

TEST_CASE("finetune reports per-epoch error and adopts checkpoint architecture") {
  Dataset data = tiny_dataset();
  RunConfig rc = tiny_run(3);
  rc.label_fraction = 0.5;
  fs::path dir = work_dir("finetune");

  fs::path ck = dir / "ft.mmpt", csv = dir / "ft.csv";
  FinetuneResult res =
      finetune(data, rc, "", "mean_nn_distance", ck.string(), csv.string());
  CHECK(res.train_mae.size() == 3);
  CHECK(res.val_mae.size() == 3);
  CHECK(res.test_mae.size() == 3);
  double best = res.val_mae[0];
  for (double v : res.val_mae) best = std::min(best, v);
  CHECK(res.best_val_mae == best);
  CHECK(res.val_mae[static_cast<size_t>(res.best_epoch - 1)] == best);
  CHECK(res.test_at_best == res.test_mae[static_cast<size_t>(res.best_epoch - 1)]);
  CHECK(line_count(csv) == 4);

  Checkpoint saved = load_checkpoint(ck.string());
  CHECK(saved.meta.at("kind") == "finetune");
  CHECK(saved.meta.at("property") == "mean_nn_distance");

  // The exported model scores the val split exactly as the recorded best.
  double val = evaluate(data, ck.string(), "mean_nn_distance", "val");
  CHECK(std::fabs(val - res.best_val_mae) < 1e-12);
  double val_default = evaluate(data, ck.string(), "", "val");
  CHECK(val == val_default);
  CHECK_THROWS_AS(evaluate(data, ck.string(), "", "holdout"), Error);

  // Same seed, same bytes.
  fs::path csv2 = dir / "ft2.csv";
  finetune(data, rc, "", "mean_nn_distance", (dir / "ft2.mmpt").string(), csv2.string());
  CHECK(file_bytes(csv) == file_bytes(csv2));

  // A pretrained encoder dictates the architecture even if the caller asks
  // for different widths.
  fs::path pre = dir / "pre.mmpt";
  pretrain(data, tiny_run(2), pre.string(), (dir / "pre.csv").string());
  RunConfig big = rc;
  big.model = ModelConfig{};  // defaults differ from the checkpoint
  FinetuneResult warm = finetune(data, big, pre.string(), "mean_nn_distance",
                                 (dir / "warm.mmpt").string(), (dir / "warm.csv").string());
  CHECK(warm.val_mae.size() == 3);
  Checkpoint wck = load_checkpoint((dir / "warm.mmpt").string());
  CHECK(parse_run_config(wck.meta.at("config")).model.d_s == 8);

  CHECK_THROWS_AS(finetune(data, rc, (dir / "missing.mmpt").string(), "mean_nn_distance",
                           (dir / "x.mmpt").string(), (dir / "x.csv").string()),
                  Error);
}

TEST_CASE("property labels prefer stored values and reject unknown names") {
  Crystal c;
  c.atoms = {11};
  c.frac = {{0.0, 0.0, 0.0}};
  c.lattice.rows = Mat3::identity();
  for (int i = 0; i < 3; ++i) c.lattice.rows.row[i][i] = 2.0;
  c.property = PropertyLabel{"band_gap", 1.5};
  CHECK(property_label(c, "band_gap") == 1.5);
  CHECK(property_label(c, "mean_nn_distance") == 2.0);
  CHECK(property_label(c, "number_density") == 0.125);
  CHECK_THROWS_AS(property_label(c, "formation_energy"), Error);

  CHECK(mae({1.0, 2.0}, {2.0, 4.0}) == 1.5);
  CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(mae({}, {}), Error);
}

TEST_CASE("bundled check suites pass at reduced sizes") {
  CheckReport masks = check_masks(3, 3000);
  CHECK(masks.ok);
  CHECK(masks.cases_run == 9 * 3000);

  CheckReport oracle = check_oracle(3, 24);
  CHECK(oracle.ok);
  CHECK(oracle.cases_run == 24);

  CheckReport inv = check_invariance(3, 6);
  CHECK(inv.ok);
  CHECK(inv.cases_run == 6);

  CheckReport grad = check_gradients(5);
  CHECK(grad.ok);
  CHECK(grad.cases_run > 1000);
}
