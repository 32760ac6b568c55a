#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmpt/adam.hpp"
#include "mmpt/dataset.hpp"
#include "mmpt/losses.hpp"
#include "mmpt/network.hpp"

namespace mmpt {

struct RunConfig {
  uint64_t seed = 123;
  int epochs = 50;
  int batch_size = 1;
  double lr = 1e-5;          // pre-training rate
  double lr_encoder = 1e-3;  // fine-tuning, loaded encoder group
  double lr_head = 5e-3;     // fine-tuning, fresh head group
  double weight_decay = 0.0;
  double label_fraction = 1.0;
  bool no_reconstruction = false;
  bool single_mask = false;
  bool no_bt = false;
  bool no_pimg_attention = false;
  bool no_pal = false;
  ModelConfig model;
  LossConfig loss;
};

// Strict JSON with top-level RunConfig field names plus nested "model" and
// "loss" objects; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_json(const RunConfig& config);
RunConfig load_run_config(const std::string& path);

// One full forward for a batch under the config's ablation flags: encode,
// mask both views, decode, and assemble the weighted objective.
TotalLoss batch_loss(const BatchGraph& batch, const std::vector<MutexMasks>& masks,
                     const ModelParams& params, const RunConfig& config);

struct PretrainResult {
  std::vector<LossReport> epoch_means;
  int best_epoch = 0;  // 1-based
  double best_mean = 0.0;
};

// Trains on the train split; appends one CSV row per epoch to metrics_csv,
// keeps the lowest epoch-mean parameters at out_path, and writes the full
// optimizer state to out_path + ".state" so an interrupted run can resume.
PretrainResult pretrain(const Dataset& data, const RunConfig& config,
                        const std::string& out_path, const std::string& metrics_csv,
                        bool resume = false);

struct FinetuneResult {
  std::vector<double> train_mae;  // per epoch, on the labeled subset
  std::vector<double> val_mae;
  std::vector<double> test_mae;
  int best_epoch = 0;  // 1-based, lowest val MAE
  double best_val_mae = 0.0;
  double test_at_best = 0.0;
};

// Supervised L1 training of encoder plus head on the named property. An empty
// encoder_ckpt trains from scratch; otherwise encoder weights are loaded and
// the architecture is taken from the checkpoint. Saves the best-val model to
// out_path and per-epoch MAE rows to metrics_csv.
FinetuneResult finetune(const Dataset& data, const RunConfig& config,
                        const std::string& encoder_ckpt, const std::string& property_name,
                        const std::string& out_path, const std::string& metrics_csv);

// MAE of a saved fine-tuned model over one split of the dataset.
double evaluate(const Dataset& data, const std::string& model_ckpt,
                const std::string& property_name, const std::string& split);

// Label for one crystal: the stored property when its name matches,
// otherwise the named derived quantity.
double property_label(const Crystal& crystal, const std::string& property_name);

double mae(const std::vector<double>& predictions, const std::vector<double>& labels);

// Model predictions for a list of crystals (no masking), returned per crystal.
std::vector<double> predict(const std::vector<const Crystal*>& crystals,
                            const ModelParams& params, const ModelConfig& model,
                            bool use_attention);

struct CheckReport {
  bool ok = true;
  int cases_run = 0;
  std::string counterexample;  // first failure, serialized
};

CheckReport check_invariance(uint64_t seed, int trials = 100);
CheckReport check_gradients(uint64_t seed);
CheckReport check_oracle(uint64_t seed, int trials = 500);
CheckReport check_masks(uint64_t seed, int draws = 10000);

}  // namespace mmpt
