#include "mmpt/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmpt/checkpoint.hpp"
#include "mmpt/errors.hpp"
#include "mmpt/graph.hpp"
#include "mmpt/rng.hpp"
#include "mmpt/synthetic.hpp"

namespace mmpt {

namespace {

using json = nlohmann::json;

constexpr uint64_t kEpochStream = 0x45504f43ull;   // pretrain epoch shuffling + masks
constexpr uint64_t kFtEpochStream = 0x46545550ull; // finetune epoch shuffling
constexpr uint64_t kLabelStream = 0x4c41424cull;   // label subsampling

std::string fmt_g(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.12g", v);
  return b;
}

std::string fmt_exact(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

void require_known_keys(const json& j, const std::set<std::string>& known,
                        const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key()))
      throw Error(ErrorKind::InvalidArgument, "unknown config key: " + scope + it.key());
  }
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number())
    throw Error(ErrorKind::InvalidArgument, std::string("config key must be a number: ") + key);
  return j[key].get<double>();
}

long get_integer(const json& j, const char* key, long fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() && !j[key].is_number_unsigned())
    throw Error(ErrorKind::InvalidArgument, std::string("config key must be an integer: ") + key);
  return j[key].get<long>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean())
    throw Error(ErrorKind::InvalidArgument, std::string("config key must be a boolean: ") + key);
  return j[key].get<bool>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string())
    throw Error(ErrorKind::InvalidArgument, std::string("config key must be a string: ") + key);
  return j[key].get<std::string>();
}

std::vector<int> mask_rows(const std::vector<MutexMasks>& masks, const BatchGraph& batch,
                           bool m_view) {
  std::vector<int> rows;
  for (size_t b = 0; b < masks.size(); ++b) {
    const std::vector<int>& subset = m_view ? masks[b].m : masks[b].m_bar;
    for (int local : subset) rows.push_back(static_cast<int>(batch.node_offset[b]) + local);
  }
  return rows;
}

struct ForwardViews {
  ViewOutputs m, mbar;
};

ForwardViews forward_views(const BatchGraph& batch, const std::vector<MutexMasks>& masks,
                           const ModelParams& params, const RunConfig& config) {
  const ModelConfig& mc = config.model;
  bool use_attention = !config.no_pimg_attention;
  bool recon = !config.no_reconstruction;
  bool pal = !config.no_pal;
  bool barlow = !config.no_bt && !config.single_mask;
  bool need_trunk = recon || pal || barlow;

  Tensor h_s = encode_structure(batch, params, mc, use_attention);
  Tensor h_l = encode_lattice(batch, params, mc);
  Tensor token = mask_token(params, mc);
  Tensor lat_pred;
  if (recon) lat_pred = decode_lattice(h_l, params, mc);

  ForwardViews views;
  int view_count = config.single_mask ? 1 : 2;
  for (int v = 0; v < view_count; ++v) {
    ViewOutputs& out = v == 0 ? views.m : views.mbar;
    Tensor masked = apply_mask_rows(h_s, mask_rows(masks, batch, v == 0), token);
    if (need_trunk) {
      AtomDecode ad = decode_atoms(masked, batch, params, mc);
      out.projection = ad.p_a;
      if (recon) out.atom_logits = ad.logits;
      if (pal) {
        PalOutputs po = pal_heads(ad.p_a, batch, params, mc);
        out.dir_logits = po.direction_logits;
        out.unit_logits = po.unit_logits;
        out.dist_pred = po.distance;
      }
    }
    if (recon) {
      out.coord_pred = decode_coords(masked, batch, params, mc);
      out.lattice_pred = lat_pred;
    }
  }
  return views;
}

LossWeights weights_for(const RunConfig& config) {
  LossWeights w;
  if (config.no_reconstruction) w.atom = w.coord = w.lattice = 0.0;
  if (config.no_pal) w.direction = w.unit_cell = w.distance = 0.0;
  return w;
}

void zero_all_grads(ModelParams& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

std::vector<MutexMasks> sample_batch_masks(const std::vector<const Crystal*>& crystals,
                                           Rng& rng) {
  std::vector<MutexMasks> masks;
  masks.reserve(crystals.size());
  for (const Crystal* c : crystals)
    masks.push_back(sample_mutex_masks(static_cast<int>(c->size()), rng));
  return masks;
}

Checkpoint params_checkpoint(const ModelParams& params,
                             std::map<std::string, std::string> meta) {
  Checkpoint ck;
  for (const auto& [name, t] : params) ck.tensors.emplace(name, t);
  ck.meta = std::move(meta);
  return ck;
}

void load_params_into(ModelParams& params, const Checkpoint& ck, bool encoder_only) {
  for (auto& [name, t] : params) {
    if (encoder_only && !is_encoder_param(name)) continue;
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw Error(ErrorKind::BadCheckpoint, "checkpoint missing parameter: " + name);
    if (it->second.shape() != t.shape())
      throw Error(ErrorKind::BadCheckpoint, "checkpoint shape mismatch for: " + name);
    t.mutable_value() = it->second.value();
  }
}

std::string meta_value(const Checkpoint& ck, const std::string& key) {
  auto it = ck.meta.find(key);
  if (it == ck.meta.end())
    throw Error(ErrorKind::BadCheckpoint, "checkpoint missing meta field: " + key);
  return it->second;
}

Tensor property_forward(const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& mc, bool use_attention) {
  Tensor h_s = encode_structure(batch, params, mc, use_attention);
  Tensor h_l = encode_lattice(batch, params, mc);
  return finetune_head(h_s, h_l, batch, params, mc);
}

json crystal_json(const Crystal& c) { return json::parse(serialize_crystal(c)); }

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorKind::InvalidArgument, "malformed config JSON");
  require_known_keys(j, {"seed", "epochs", "batch_size", "lr", "lr_encoder", "lr_head",
                         "weight_decay", "label_fraction", "no_reconstruction", "single_mask",
                         "no_bt", "no_pimg_attention", "no_pal", "model", "loss"},
                     "");
  RunConfig c;
  long seed = get_integer(j, "seed", static_cast<long>(c.seed));
  if (seed < 0) throw Error(ErrorKind::InvalidArgument, "seed must be non-negative");
  c.seed = static_cast<uint64_t>(seed);
  c.epochs = static_cast<int>(get_integer(j, "epochs", c.epochs));
  c.batch_size = static_cast<int>(get_integer(j, "batch_size", c.batch_size));
  c.lr = get_number(j, "lr", c.lr);
  c.lr_encoder = get_number(j, "lr_encoder", c.lr_encoder);
  c.lr_head = get_number(j, "lr_head", c.lr_head);
  c.weight_decay = get_number(j, "weight_decay", c.weight_decay);
  c.label_fraction = get_number(j, "label_fraction", c.label_fraction);
  c.no_reconstruction = get_bool(j, "no_reconstruction", false);
  c.single_mask = get_bool(j, "single_mask", false);
  c.no_bt = get_bool(j, "no_bt", false);
  c.no_pimg_attention = get_bool(j, "no_pimg_attention", false);
  c.no_pal = get_bool(j, "no_pal", false);

  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) throw Error(ErrorKind::InvalidArgument, "model must be an object");
    require_known_keys(m, {"d_a", "d_s", "d_l", "mp_layers", "rbf_count", "rbf_cutoff",
                           "cutoff", "max_neighbors", "decoder_layers", "decoder_fc_layers",
                           "head_layers", "attention_heads", "attention_literal_self",
                           "mask_token_mode"},
                       "model.");
    ModelConfig& mc = c.model;
    mc.d_a = static_cast<size_t>(get_integer(m, "d_a", static_cast<long>(mc.d_a)));
    mc.d_s = static_cast<size_t>(get_integer(m, "d_s", static_cast<long>(mc.d_s)));
    mc.d_l = static_cast<size_t>(get_integer(m, "d_l", static_cast<long>(mc.d_l)));
    mc.mp_layers = static_cast<int>(get_integer(m, "mp_layers", mc.mp_layers));
    mc.rbf_count = static_cast<int>(get_integer(m, "rbf_count", mc.rbf_count));
    mc.rbf_cutoff = get_number(m, "rbf_cutoff", mc.rbf_cutoff);
    mc.cutoff = get_number(m, "cutoff", mc.cutoff);
    mc.max_neighbors = static_cast<int>(get_integer(m, "max_neighbors", mc.max_neighbors));
    mc.decoder_layers = static_cast<int>(get_integer(m, "decoder_layers", mc.decoder_layers));
    mc.decoder_fc_layers =
        static_cast<int>(get_integer(m, "decoder_fc_layers", mc.decoder_fc_layers));
    mc.head_layers = static_cast<int>(get_integer(m, "head_layers", mc.head_layers));
    mc.attention_heads =
        static_cast<int>(get_integer(m, "attention_heads", mc.attention_heads));
    mc.attention_literal_self =
        get_bool(m, "attention_literal_self", mc.attention_literal_self);
    mc.mask_token_mode = get_string(m, "mask_token_mode", mc.mask_token_mode);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    if (!l.is_object()) throw Error(ErrorKind::InvalidArgument, "loss must be an object");
    require_known_keys(l, {"barlow_lambda", "barlow_centered"}, "loss.");
    c.loss.barlow_lambda = get_number(l, "barlow_lambda", c.loss.barlow_lambda);
    c.loss.barlow_centered = get_bool(l, "barlow_centered", c.loss.barlow_centered);
  }

  if (c.epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be at least 1");
  if (c.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be at least 1");
  if (!(c.lr > 0.0) || !(c.lr_encoder > 0.0) || !(c.lr_head > 0.0))
    throw Error(ErrorKind::InvalidArgument, "learning rates must be positive");
  if (c.weight_decay < 0.0)
    throw Error(ErrorKind::InvalidArgument, "weight_decay must be non-negative");
  if (!(c.label_fraction > 0.0) || c.label_fraction > 1.0)
    throw Error(ErrorKind::InvalidArgument, "label_fraction must be in (0, 1]");
  if (!(c.loss.barlow_lambda >= 0.0))
    throw Error(ErrorKind::InvalidArgument, "barlow_lambda must be non-negative");
  validate_config(c.model);
  return c;
}

std::string run_config_json(const RunConfig& c) {
  json m{{"d_a", c.model.d_a},
         {"d_s", c.model.d_s},
         {"d_l", c.model.d_l},
         {"mp_layers", c.model.mp_layers},
         {"rbf_count", c.model.rbf_count},
         {"rbf_cutoff", c.model.rbf_cutoff},
         {"cutoff", c.model.cutoff},
         {"max_neighbors", c.model.max_neighbors},
         {"decoder_layers", c.model.decoder_layers},
         {"decoder_fc_layers", c.model.decoder_fc_layers},
         {"head_layers", c.model.head_layers},
         {"attention_heads", c.model.attention_heads},
         {"attention_literal_self", c.model.attention_literal_self},
         {"mask_token_mode", c.model.mask_token_mode}};
  json l{{"barlow_lambda", c.loss.barlow_lambda}, {"barlow_centered", c.loss.barlow_centered}};
  json j{{"seed", c.seed},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"lr_encoder", c.lr_encoder},
         {"lr_head", c.lr_head},
         {"weight_decay", c.weight_decay},
         {"label_fraction", c.label_fraction},
         {"no_reconstruction", c.no_reconstruction},
         {"single_mask", c.single_mask},
         {"no_bt", c.no_bt},
         {"no_pimg_attention", c.no_pimg_attention},
         {"no_pal", c.no_pal},
         {"model", m},
         {"loss", l}};
  return j.dump();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataError, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

TotalLoss batch_loss(const BatchGraph& batch, const std::vector<MutexMasks>& masks,
                     const ModelParams& params, const RunConfig& config) {
  ForwardViews views = forward_views(batch, masks, params, config);
  return total_loss(views.m, views.mbar, batch, masks, config.loss, weights_for(config),
                    config.single_mask, !config.no_bt);
}

PretrainResult pretrain(const Dataset& data, const RunConfig& config,
                        const std::string& out_path, const std::string& metrics_csv,
                        bool resume) {
  validate_config(config.model);
  if (data.records.empty()) throw Error(ErrorKind::DataError, "dataset is empty");
  const std::vector<int>& train = data.splits.train;
  if (train.empty()) throw Error(ErrorKind::DataError, "train split is empty");

  std::vector<MultiGraph> graphs(data.records.size());
  for (int idx : train)
    graphs[static_cast<size_t>(idx)] = build_graph(data.records[static_cast<size_t>(idx)],
                                                   config.model.cutoff,
                                                   config.model.max_neighbors);

  ModelParams params = init_params(config.model, config.seed);
  AdamState opt;
  AdamConfig opt_cfg;
  opt_cfg.lr = config.lr;
  opt_cfg.weight_decay = config.weight_decay;
  opt_cfg.decoupled = false;

  std::string config_json = run_config_json(config);
  std::string state_path = out_path + ".state";
  int start_epoch = 0;
  int best_epoch = 0;
  double best_mean = std::numeric_limits<double>::infinity();

  if (resume) {
    Checkpoint st = load_checkpoint(state_path);
    if (meta_value(st, "kind") != "pretrain_state")
      throw Error(ErrorKind::BadCheckpoint, "not a pretrain state checkpoint");
    if (meta_value(st, "config") != config_json)
      throw Error(ErrorKind::InvalidArgument, "resume config differs from saved state");
    load_params_into(params, st, false);
    for (auto& [name, t] : params) {
      auto mit = st.tensors.find("adam_m/" + name);
      auto vit = st.tensors.find("adam_v/" + name);
      if (mit == st.tensors.end() || vit == st.tensors.end())
        throw Error(ErrorKind::BadCheckpoint, "state missing optimizer moments for: " + name);
      if (mit->second.numel() != t.numel() || vit->second.numel() != t.numel())
        throw Error(ErrorKind::BadCheckpoint, "optimizer moment size mismatch for: " + name);
      opt.moments[name] = {mit->second.value(), vit->second.value()};
    }
    opt.step = std::stol(meta_value(st, "adam_step"));
    start_epoch = std::stoi(meta_value(st, "next_epoch"));
    best_epoch = std::stoi(meta_value(st, "best_epoch"));
    best_mean = std::stod(meta_value(st, "best_mean"));
  }

  std::ofstream csv;
  if (resume && start_epoch > 0) {
    csv.open(metrics_csv, std::ios::app);
  } else {
    csv.open(metrics_csv, std::ios::trunc);
    csv << "epoch,l_A,l_X,l_L,l_BT,l_Die,l_Unit,l_Dis,total\n";
  }
  if (!csv) throw Error(ErrorKind::DataError, "cannot open metrics file: " + metrics_csv);

  PretrainResult result;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, kEpochStream + static_cast<uint64_t>(epoch));
    std::vector<int> order = train;
    shuffle(rng, order);

    LossReport acc;
    int steps = 0;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), i + static_cast<size_t>(config.batch_size));
      std::vector<const Crystal*> crystals;
      std::vector<const MultiGraph*> batch_graphs;
      for (size_t k = i; k < end; ++k) {
        crystals.push_back(&data.records[static_cast<size_t>(order[k])]);
        batch_graphs.push_back(&graphs[static_cast<size_t>(order[k])]);
      }
      std::vector<MutexMasks> masks = sample_batch_masks(crystals, rng);
      try {
        BatchGraph bg = make_batch(crystals, batch_graphs);
        TotalLoss tl = batch_loss(bg, masks, params, config);
        zero_all_grads(params);
        tl.total.backward();
        adam_step(params, opt, opt_cfg);
        acc.l_a += tl.report.l_a;
        acc.l_x += tl.report.l_x;
        acc.l_l += tl.report.l_l;
        acc.l_bt += tl.report.l_bt;
        acc.l_die += tl.report.l_die;
        acc.l_unit += tl.report.l_unit;
        acc.l_dis += tl.report.l_dis;
        acc.total += tl.report.total;
      } catch (const Error& e) {
        throw Error(e.kind(), "pretrain epoch " + std::to_string(epoch + 1) + " step " +
                                  std::to_string(steps + 1) + ": " + e.what());
      }
      ++steps;
    }
    double inv = 1.0 / static_cast<double>(steps);
    LossReport mean{acc.l_a * inv,  acc.l_x * inv,    acc.l_l * inv,   acc.l_bt * inv,
                    acc.l_die * inv, acc.l_unit * inv, acc.l_dis * inv, acc.total * inv};
    result.epoch_means.push_back(mean);

    csv << epoch + 1 << ',' << fmt_g(mean.l_a) << ',' << fmt_g(mean.l_x) << ','
        << fmt_g(mean.l_l) << ',' << fmt_g(mean.l_bt) << ',' << fmt_g(mean.l_die) << ','
        << fmt_g(mean.l_unit) << ',' << fmt_g(mean.l_dis) << ',' << fmt_g(mean.total) << '\n';
    csv.flush();

    if (mean.total < best_mean) {
      best_mean = mean.total;
      best_epoch = epoch + 1;
      save_checkpoint(params_checkpoint(params, {{"kind", "pretrain"},
                                                 {"config", config_json},
                                                 {"epoch", std::to_string(best_epoch)},
                                                 {"mean_loss", fmt_exact(best_mean)}}),
                      out_path);
    }

    Checkpoint st = params_checkpoint(params, {{"kind", "pretrain_state"},
                                               {"config", config_json},
                                               {"next_epoch", std::to_string(epoch + 1)},
                                               {"best_epoch", std::to_string(best_epoch)},
                                               {"best_mean", fmt_exact(best_mean)},
                                               {"adam_step", std::to_string(opt.step)}});
    for (const auto& [name, mom] : opt.moments) {
      st.tensors.emplace("adam_m/" + name, Tensor::constant({mom.m.size()}, mom.m));
      st.tensors.emplace("adam_v/" + name, Tensor::constant({mom.v.size()}, mom.v));
    }
    save_checkpoint(st, state_path);
  }

  result.best_epoch = best_epoch;
  result.best_mean = best_mean;
  return result;
}

double property_label(const Crystal& crystal, const std::string& property_name) {
  if (crystal.property && crystal.property->name == property_name)
    return crystal.property->value;
  return toy_property(crystal, property_name);
}

double mae(const std::vector<double>& predictions, const std::vector<double>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw Error(ErrorKind::InvalidArgument, "prediction/label size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) acc += std::abs(predictions[i] - labels[i]);
  return acc / static_cast<double>(predictions.size());
}

std::vector<double> predict(const std::vector<const Crystal*>& crystals,
                            const ModelParams& params, const ModelConfig& model,
                            bool use_attention) {
  std::vector<double> out;
  out.reserve(crystals.size());
  constexpr size_t kChunk = 16;
  for (size_t i = 0; i < crystals.size(); i += kChunk) {
    size_t end = std::min(crystals.size(), i + kChunk);
    std::vector<const Crystal*> chunk(crystals.begin() + static_cast<long>(i),
                                      crystals.begin() + static_cast<long>(end));
    std::vector<MultiGraph> graphs;
    graphs.reserve(chunk.size());
    for (const Crystal* c : chunk) graphs.push_back(build_graph(*c, model.cutoff,
                                                                model.max_neighbors));
    std::vector<const MultiGraph*> gp;
    for (const MultiGraph& g : graphs) gp.push_back(&g);
    BatchGraph bg = make_batch(chunk, gp);
    Tensor pred = property_forward(bg, params, model, use_attention);
    for (size_t r = 0; r < pred.rows(); ++r) out.push_back(pred.value()[r]);
  }
  return out;
}

FinetuneResult finetune(const Dataset& data, const RunConfig& config_in,
                        const std::string& encoder_ckpt, const std::string& property_name,
                        const std::string& out_path, const std::string& metrics_csv) {
  if (data.records.empty()) throw Error(ErrorKind::DataError, "dataset is empty");
  RunConfig config = config_in;
  Checkpoint enc;
  bool pretrained = !encoder_ckpt.empty();
  if (pretrained) {
    enc = load_checkpoint(encoder_ckpt);
    RunConfig from_ckpt = parse_run_config(meta_value(enc, "config"));
    config.model = from_ckpt.model;
    config.no_pimg_attention = from_ckpt.no_pimg_attention;
  }
  validate_config(config.model);
  if (!(config.label_fraction > 0.0) || config.label_fraction > 1.0)
    throw Error(ErrorKind::InvalidArgument, "label_fraction must be in (0, 1]");
  const Splits& sp = data.splits;
  if (sp.train.empty()) throw Error(ErrorKind::DataError, "train split is empty");
  if (sp.val.empty()) throw Error(ErrorKind::DataError, "val split is empty");
  if (sp.test.empty()) throw Error(ErrorKind::DataError, "test split is empty");

  std::vector<double> labels(data.records.size());
  for (size_t i = 0; i < data.records.size(); ++i)
    labels[i] = property_label(data.records[i], property_name);

  int want = static_cast<int>(
      std::ceil(config.label_fraction * static_cast<double>(sp.train.size())));
  want = std::max(1, std::min<int>(want, static_cast<int>(sp.train.size())));
  Rng label_rng = make_rng(config.seed, kLabelStream);
  std::vector<int> positions =
      sample_without_replacement(label_rng, static_cast<int>(sp.train.size()), want);
  std::vector<int> labeled;
  labeled.reserve(positions.size());
  for (int p : positions) labeled.push_back(sp.train[static_cast<size_t>(p)]);
  std::sort(labeled.begin(), labeled.end());

  std::vector<MultiGraph> graphs(data.records.size());
  std::vector<char> built(data.records.size(), 0);
  auto ensure_graph = [&](int idx) {
    size_t u = static_cast<size_t>(idx);
    if (!built[u]) {
      graphs[u] = build_graph(data.records[u], config.model.cutoff, config.model.max_neighbors);
      built[u] = 1;
    }
  };
  for (int idx : labeled) ensure_graph(idx);
  for (int idx : sp.val) ensure_graph(idx);
  for (int idx : sp.test) ensure_graph(idx);

  ModelParams params = init_params(config.model, config.seed);
  if (pretrained) load_params_into(params, enc, true);

  // Pre-training can drift the representation scale, which would skew the
  // freshly initialized head; rescale its first layer to unit-RMS inputs
  // measured on a fixed probe of the labeled subset.
  {
    size_t probe_n = std::min<size_t>(16, labeled.size());
    std::vector<const Crystal*> probe;
    std::vector<const MultiGraph*> pg;
    for (size_t i = 0; i < probe_n; ++i) {
      probe.push_back(&data.records[static_cast<size_t>(labeled[i])]);
      pg.push_back(&graphs[static_cast<size_t>(labeled[i])]);
    }
    BatchGraph bg = make_batch(probe, pg);
    Tensor hs = encode_structure(bg, params, config.model, !config.no_pimg_attention);
    Tensor hl = encode_lattice(bg, params, config.model);
    Tensor x = head_input(hs, hl, bg);
    double sq = 0.0;
    for (double v : x.value()) sq += v * v;
    double rms = std::sqrt(sq / static_cast<double>(x.numel()));
    if (rms > 1e-8) {
      Tensor& w0 = params.at("head.fc0.w");
      for (double& v : w0.mutable_value()) v /= rms;
    }
  }

  ModelParams enc_group, head_group;
  for (auto& [name, t] : params) {
    if (is_encoder_param(name)) enc_group.emplace(name, t);
    if (name.rfind("head.", 0) == 0) head_group.emplace(name, t);
  }
  AdamState enc_state, head_state;
  AdamConfig enc_cfg, head_cfg;
  enc_cfg.lr = config.lr_encoder;
  enc_cfg.weight_decay = config.weight_decay;
  enc_cfg.decoupled = true;
  head_cfg.lr = config.lr_head;
  head_cfg.weight_decay = config.weight_decay;
  head_cfg.decoupled = true;

  bool use_attention = !config.no_pimg_attention;
  auto split_mae = [&](const std::vector<int>& idxs) {
    double acc = 0.0;
    constexpr size_t kChunk = 16;
    for (size_t i = 0; i < idxs.size(); i += kChunk) {
      size_t end = std::min(idxs.size(), i + kChunk);
      std::vector<const Crystal*> chunk;
      std::vector<const MultiGraph*> gp;
      for (size_t k = i; k < end; ++k) {
        chunk.push_back(&data.records[static_cast<size_t>(idxs[k])]);
        gp.push_back(&graphs[static_cast<size_t>(idxs[k])]);
      }
      BatchGraph bg = make_batch(chunk, gp);
      Tensor pred = property_forward(bg, params, config.model, use_attention);
      for (size_t r = 0; r < pred.rows(); ++r)
        acc += std::abs(pred.value()[r] - labels[static_cast<size_t>(idxs[i + r])]);
    }
    return acc / static_cast<double>(idxs.size());
  };

  std::ofstream csv(metrics_csv, std::ios::trunc);
  if (!csv) throw Error(ErrorKind::DataError, "cannot open metrics file: " + metrics_csv);
  csv << "epoch,train_mae,val_mae,test_mae\n";

  std::string config_json = run_config_json(config);
  FinetuneResult result;
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, kFtEpochStream + static_cast<uint64_t>(epoch));
    std::vector<int> order = labeled;
    shuffle(rng, order);

    double train_abs = 0.0;
    size_t train_n = 0;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), i + static_cast<size_t>(config.batch_size));
      std::vector<const Crystal*> chunk;
      std::vector<const MultiGraph*> gp;
      std::vector<double> target;
      for (size_t k = i; k < end; ++k) {
        chunk.push_back(&data.records[static_cast<size_t>(order[k])]);
        gp.push_back(&graphs[static_cast<size_t>(order[k])]);
        target.push_back(labels[static_cast<size_t>(order[k])]);
      }
      try {
        BatchGraph bg = make_batch(chunk, gp);
        Tensor pred = property_forward(bg, params, config.model, use_attention);
        Tensor truth = Tensor::constant({target.size(), 1}, target);
        Tensor loss = mean(tabs(sub(pred, truth)));
        zero_all_grads(params);
        loss.backward();
        adam_step(enc_group, enc_state, enc_cfg);
        adam_step(head_group, head_state, head_cfg);
        train_abs += loss.item() * static_cast<double>(target.size());
        train_n += target.size();
      } catch (const Error& e) {
        throw Error(e.kind(),
                    "finetune epoch " + std::to_string(epoch + 1) + " step " +
                        std::to_string(i / static_cast<size_t>(config.batch_size) + 1) + ": " +
                        e.what());
      }
    }
    double train_mae = train_abs / static_cast<double>(train_n);
    double val_mae = split_mae(sp.val);
    double test_mae = split_mae(sp.test);
    result.train_mae.push_back(train_mae);
    result.val_mae.push_back(val_mae);
    result.test_mae.push_back(test_mae);

    csv << epoch + 1 << ',' << fmt_g(train_mae) << ',' << fmt_g(val_mae) << ','
        << fmt_g(test_mae) << '\n';
    csv.flush();

    if (val_mae < best_val) {
      best_val = val_mae;
      result.best_epoch = epoch + 1;
      result.best_val_mae = val_mae;
      result.test_at_best = test_mae;
      save_checkpoint(
          params_checkpoint(params, {{"kind", "finetune"},
                                     {"config", config_json},
                                     {"property", property_name},
                                     {"epoch", std::to_string(epoch + 1)},
                                     {"val_mae", fmt_exact(val_mae)},
                                     {"test_mae", fmt_exact(test_mae)}}),
          out_path);
    }
  }
  return result;
}

double evaluate(const Dataset& data, const std::string& model_ckpt,
                const std::string& property_name, const std::string& split) {
  Checkpoint ck = load_checkpoint(model_ckpt);
  RunConfig config = parse_run_config(meta_value(ck, "config"));
  std::string prop = property_name;
  if (prop.empty()) {
    auto it = ck.meta.find("property");
    if (it == ck.meta.end() || it->second.empty())
      throw Error(ErrorKind::DataError, "property name not recorded in checkpoint");
    prop = it->second;
  }
  const std::vector<int>* idxs = nullptr;
  if (split == "train") idxs = &data.splits.train;
  else if (split == "val") idxs = &data.splits.val;
  else if (split == "test") idxs = &data.splits.test;
  else throw Error(ErrorKind::InvalidArgument, "unknown split: " + split);
  if (idxs->empty()) throw Error(ErrorKind::DataError, "split is empty: " + split);

  ModelParams params = init_params(config.model, 0);
  load_params_into(params, ck, false);

  std::vector<const Crystal*> crystals;
  std::vector<double> truth;
  for (int idx : *idxs) {
    crystals.push_back(&data.records[static_cast<size_t>(idx)]);
    truth.push_back(property_label(data.records[static_cast<size_t>(idx)], prop));
  }
  std::vector<double> preds =
      predict(crystals, params, config.model, !config.no_pimg_attention);
  return mae(preds, truth);
}

namespace {

ModelConfig small_check_model() {
  ModelConfig mc;
  mc.d_a = 16;
  mc.d_s = 8;
  mc.d_l = 4;
  mc.mp_layers = 2;
  mc.rbf_count = 4;
  mc.decoder_layers = 1;
  mc.decoder_fc_layers = 3;
  mc.head_layers = 2;
  return mc;
}

// Random well-conditioned crystal: every perpendicular width >= 3 so a +-3
// image window covers an 8 angstrom cutoff.
Crystal random_small_crystal(Rng& rng, int max_atoms) {
  const std::vector<int> palette = {1, 6, 8, 11, 14, 17, 20, 22, 26, 79};
  for (int attempt = 0; attempt < 200; ++attempt) {
    Crystal c;
    double a = uniform(rng, 3.4, 6.5);
    double b = uniform(rng, 3.4, 6.5);
    double d = uniform(rng, 3.4, 6.5);
    c.lattice.rows = {{a, 0.0, 0.0},
                      {uniform(rng, -0.8, 0.8), b, 0.0},
                      {uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), d}};
    Vec3 widths = perpendicular_widths(c.lattice);
    if (widths.x < 3.0 || widths.y < 3.0 || widths.z < 3.0) continue;
    int n = 1 + static_cast<int>(uniform_int(rng, static_cast<uint64_t>(max_atoms)));
    for (int i = 0; i < n; ++i) {
      c.atoms.push_back(static_cast<int>(palette[uniform_int(rng, palette.size())]));
      c.frac.push_back({uniform01(rng), uniform01(rng), uniform01(rng)});
    }
    if (min_pairwise_distance(c) < 0.5) continue;
    validate(c);
    return c;
  }
  throw Error(ErrorKind::InvalidArgument, "failed to generate a random crystal");
}

Crystal check_crystal(Rng& rng, int trial, int max_random_atoms) {
  SyntheticParams sp;
  sp.cell_min = 3.4;
  sp.cell_max = 6.5;
  sp.perturbation = 0.05;
  switch (trial % 3) {
    case 0:
      sp.family = "rocksalt";
      return generate_synthetic(sp, rng());
    case 1:
      sp.family = "perovskite";
      return generate_synthetic(sp, rng());
    default:
      return random_small_crystal(rng, max_random_atoms);
  }
}

Mat3 random_orthogonal(Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Vec3 a{normal(rng), normal(rng), normal(rng)};
    double na = norm(a);
    if (na < 1e-6) continue;
    a = a * (1.0 / na);
    Vec3 b{normal(rng), normal(rng), normal(rng)};
    b = b - a * dot(a, b);
    double nb = norm(b);
    if (nb < 1e-6) continue;
    b = b * (1.0 / nb);
    Vec3 c = cross(a, b);
    if (uniform01(rng) < 0.5) c = c * -1.0;  // reflection, det -1
    return {a, b, c};
  }
  throw Error(ErrorKind::InvalidArgument, "failed to sample an orthogonal matrix");
}

std::vector<std::vector<double>> sorted_neighbor_lists(const Crystal& c, double cutoff,
                                                       int max_neighbors) {
  MultiGraph g = build_graph(c, cutoff, max_neighbors);
  std::vector<std::vector<double>> lists(c.size());
  for (const GraphEdge& e : g.edges) lists[static_cast<size_t>(e.src)].push_back(e.distance);
  for (auto& l : lists) std::sort(l.begin(), l.end());
  return lists;
}

}  // namespace

CheckReport check_invariance(uint64_t seed, int trials) {
  CheckReport rep;
  ModelConfig mc = small_check_model();
  ModelParams params = init_params(mc, seed);
  Rng rng = make_rng(seed, 0x696e76ull);
  constexpr double kTol = 1e-8;

  auto fail = [&](int trial, const char* mode, const Crystal& c, const std::string& why) {
    rep.ok = false;
    json j{{"suite", "invariance"}, {"trial", trial}, {"mode", mode},
           {"violation", why},      {"crystal", crystal_json(c)}};
    rep.counterexample = j.dump();
  };

  for (int t = 0; t < trials && rep.ok; ++t) {
    Crystal c = check_crystal(rng, t, 12);
    MultiGraph g = build_graph(c, mc.cutoff, mc.max_neighbors);
    BatchGraph bg = make_batch({&c}, {&g});
    Tensor h_s = encode_structure(bg, params, mc, true);
    Tensor h_l = encode_lattice(bg, params, mc);
    double pred = property_forward(bg, params, mc, true).item();
    auto lists = sorted_neighbor_lists(c, mc.cutoff, mc.max_neighbors);
    ++rep.cases_run;

    // Periodic invariance: re-choose the cell corner.
    {
      Vec3 beta{uniform01(rng), uniform01(rng), uniform01(rng)};
      Crystal s = wrap_to_cell(c, beta);
      auto lists2 = sorted_neighbor_lists(s, mc.cutoff, mc.max_neighbors);
      for (size_t i = 0; i < lists.size() && rep.ok; ++i) {
        if (lists[i].size() != lists2[i].size()) {
          fail(t, "periodic", c,
               "neighbor count changed for atom " + std::to_string(i) + ": " +
                   std::to_string(lists[i].size()) + " vs " + std::to_string(lists2[i].size()));
          break;
        }
        for (size_t k = 0; k < lists[i].size(); ++k) {
          if (!close_rel(lists[i][k], lists2[i][k], kTol)) {
            fail(t, "periodic", c,
                 "neighbor distance mismatch at atom " + std::to_string(i) + " rank " +
                     std::to_string(k) + ": " + fmt_exact(lists[i][k]) + " vs " +
                     fmt_exact(lists2[i][k]));
            break;
          }
        }
      }
      if (rep.ok) {
        MultiGraph g2 = build_graph(s, mc.cutoff, mc.max_neighbors);
        BatchGraph bg2 = make_batch({&s}, {&g2});
        Tensor h2 = encode_structure(bg2, params, mc, true);
        for (size_t i = 0; i < h_s.numel(); ++i) {
          if (!close_rel(h_s.value()[i], h2.value()[i], kTol)) {
            fail(t, "periodic", c,
                 "encoder output mismatch at component " + std::to_string(i) + ": " +
                     fmt_exact(h_s.value()[i]) + " vs " + fmt_exact(h2.value()[i]));
            break;
          }
        }
      }
    }
    if (!rep.ok) break;

    // E(3) invariance: rigid rotation/reflection plus translation.
    {
      EuclideanTransform tr{random_orthogonal(rng),
                            {normal(rng) * 2.0, normal(rng) * 2.0, normal(rng) * 2.0}};
      Crystal s = apply_euclidean(c, tr);
      MultiGraph g2 = build_graph(s, mc.cutoff, mc.max_neighbors);
      BatchGraph bg2 = make_batch({&s}, {&g2});
      Tensor h2 = encode_structure(bg2, params, mc, true);
      Tensor hl2 = encode_lattice(bg2, params, mc);
      double pred2 = property_forward(bg2, params, mc, true).item();
      for (size_t i = 0; i < h_s.numel() && rep.ok; ++i) {
        if (!close_rel(h_s.value()[i], h2.value()[i], kTol))
          fail(t, "euclidean", c, "structure embedding mismatch at component " +
                                      std::to_string(i) + ": " + fmt_exact(h_s.value()[i]) +
                                      " vs " + fmt_exact(h2.value()[i]));
      }
      for (size_t i = 0; i < h_l.numel() && rep.ok; ++i) {
        if (!close_rel(h_l.value()[i], hl2.value()[i], kTol))
          fail(t, "euclidean", c, "lattice embedding mismatch at component " +
                                      std::to_string(i) + ": " + fmt_exact(h_l.value()[i]) +
                                      " vs " + fmt_exact(hl2.value()[i]));
      }
      if (rep.ok && !close_rel(pred, pred2, kTol))
        fail(t, "euclidean", c,
             "prediction mismatch: " + fmt_exact(pred) + " vs " + fmt_exact(pred2));
    }
  }
  return rep;
}

CheckReport check_gradients(uint64_t seed) {
  CheckReport rep;
  Crystal c;
  c.atoms = {11, 17, 8};
  c.lattice.rows = {{4.1, 0.0, 0.0}, {0.3, 3.9, 0.0}, {0.2, -0.1, 4.3}};
  c.frac = {{0.05, 0.10, 0.00}, {0.50, 0.55, 0.45}, {0.30, 0.80, 0.60}};
  validate(c);

  RunConfig rc;
  rc.model = small_check_model();
  rc.model.d_a = 12;
  rc.model.d_l = 6;
  ModelParams params = init_params(rc.model, seed);
  MultiGraph g = build_graph(c, rc.model.cutoff, rc.model.max_neighbors);
  BatchGraph batch = make_batch({&c}, {&g});
  Rng mask_rng = make_rng(seed, 0x67726164ull);
  std::vector<MutexMasks> masks = {sample_mutex_masks(3, mask_rng)};

  const char* loss_names[8] = {"l_A", "l_X", "l_L", "l_BT", "l_Die", "l_Unit", "l_Dis", "total"};
  auto eval_all = [&]() {
    TotalLoss tl = batch_loss(batch, masks, params, rc);
    return std::array<double, 8>{tl.report.l_a,   tl.report.l_x,    tl.report.l_l,
                                 tl.report.l_bt,  tl.report.l_die,  tl.report.l_unit,
                                 tl.report.l_dis, tl.report.total};
  };

  TotalLoss tl = batch_loss(batch, masks, params, rc);
  const Tensor* comps[8] = {&tl.l_a,   &tl.l_x,    &tl.l_l,   &tl.l_bt,
                            &tl.l_die, &tl.l_unit, &tl.l_dis, &tl.total};
  std::map<std::string, std::array<std::vector<double>, 8>> analytic;
  for (int k = 0; k < 8; ++k) {
    zero_all_grads(params);
    comps[k]->backward();
    for (auto& [name, t] : params) analytic[name][k] = t.grad();
  }

  // The losses are piecewise smooth (relu, |.|), so no single step works for
  // every component: wide stencils straddle kinks while narrow ones drown
  // floor-magnitude gradients in subtraction roundoff. Each component accepts
  // the first step whose estimate matches its analytic value; a wrong
  // gradient disagrees with the entire ladder because every rung converges to
  // the same true derivative on its smooth piece.
  struct FdStep {
    double h;
    bool fourth_order;
  };
  constexpr FdStep kLadder[] = {{1e-6, false}, {1e-4, true}, {1e-5, true}, {3e-6, false}};
  // Refine an order of magnitude past the pass threshold so accepted
  // components carry real margin, not a lucky rung.
  constexpr double kSettle = 1e-5;
  double max_err = 0.0;
  std::string worst;
  for (auto& [name, t] : params) {
    auto& w = t.mutable_value();
    for (size_t i = 0; i < w.size(); ++i) {
      double orig = w[i];
      std::array<double, 8> best_err, best_fd{};
      best_err.fill(std::numeric_limits<double>::infinity());
      for (const FdStep& step : kLadder) {
        bool settled = true;
        for (int k = 0; k < 8; ++k) settled &= best_err[k] <= kSettle;
        if (settled) break;
        w[i] = orig + step.h;
        std::array<double, 8> fp = eval_all();
        w[i] = orig - step.h;
        std::array<double, 8> fm = eval_all();
        std::array<double, 8> fp2{}, fm2{};
        if (step.fourth_order) {
          w[i] = orig + 2.0 * step.h;
          fp2 = eval_all();
          w[i] = orig - 2.0 * step.h;
          fm2 = eval_all();
        }
        w[i] = orig;
        for (int k = 0; k < 8; ++k) {
          double fd = step.fourth_order
                          ? (8.0 * (fp[k] - fm[k]) - (fp2[k] - fm2[k])) / (12.0 * step.h)
                          : (fp[k] - fm[k]) / (2.0 * step.h);
          double ga = analytic[name][k][i];
          double err = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-4});
          if (err < best_err[k]) {
            best_err[k] = err;
            best_fd[k] = fd;
          }
        }
      }
      for (int k = 0; k < 8; ++k) {
        if (best_err[k] > max_err) {
          max_err = best_err[k];
          worst = std::string(name) + "[" + std::to_string(i) + "] on " + loss_names[k] +
                  ": analytic " + fmt_exact(analytic[name][k][i]) + " vs fd " +
                  fmt_exact(best_fd[k]);
        }
      }
      ++rep.cases_run;
    }
  }
  rep.ok = max_err < 1e-4;
  json j{{"suite", "gradients"},
         {"max_rel_err", max_err},
         {"components", rep.cases_run},
         {"worst", worst}};
  rep.counterexample = j.dump();
  return rep;
}

CheckReport check_oracle(uint64_t seed, int trials) {
  CheckReport rep;
  Rng rng = make_rng(seed, 0x6f7261ull);
  constexpr double kCutoff = 8.0;
  constexpr int kMaxNeighbors = 12;
  for (int t = 0; t < trials && rep.ok; ++t) {
    Crystal c = check_crystal(rng, t, 8);
    MultiGraph fast = build_graph(c, kCutoff, kMaxNeighbors);
    MultiGraph slow = brute_force_neighbors(c, kCutoff, 3, kMaxNeighbors);
    ++rep.cases_run;
    std::string why;
    if (fast.edges.size() != slow.edges.size()) {
      why = "edge count " + std::to_string(fast.edges.size()) + " vs " +
            std::to_string(slow.edges.size());
    } else {
      for (size_t i = 0; i < fast.edges.size(); ++i) {
        const GraphEdge& a = fast.edges[i];
        const GraphEdge& b = slow.edges[i];
        if (a.src != b.src || a.dst != b.dst || !(a.offset == b.offset) ||
            std::abs(a.distance - b.distance) > 1e-9) {
          why = "edge " + std::to_string(i) + " differs: (" + std::to_string(a.src) + "," +
                std::to_string(a.dst) + ",[" + std::to_string(a.offset.k1) + "," +
                std::to_string(a.offset.k2) + "," + std::to_string(a.offset.k3) + "]," +
                fmt_exact(a.distance) + ") vs (" + std::to_string(b.src) + "," +
                std::to_string(b.dst) + ",[" + std::to_string(b.offset.k1) + "," +
                std::to_string(b.offset.k2) + "," + std::to_string(b.offset.k3) + "]," +
                fmt_exact(b.distance) + ")";
          break;
        }
      }
    }
    if (!why.empty()) {
      rep.ok = false;
      json j{{"suite", "oracle"}, {"trial", t}, {"violation", why},
             {"crystal", crystal_json(c)}};
      rep.counterexample = j.dump();
    }
  }
  return rep;
}

CheckReport check_masks(uint64_t seed, int draws) {
  CheckReport rep;
  for (int n = 1; n <= 9 && rep.ok; ++n) {
    Rng rng = make_rng(seed, 0x6d61736bull + static_cast<uint64_t>(n));
    std::vector<long> hits(static_cast<size_t>(n), 0);
    for (int d = 0; d < draws && rep.ok; ++d) {
      MutexMasks mk = sample_mutex_masks(n, rng);
      ++rep.cases_run;
      std::string why;
      if (static_cast<int>(mk.m.size()) != n / 2) {
        why = "|M| = " + std::to_string(mk.m.size()) + ", expected " + std::to_string(n / 2);
      } else if (static_cast<int>(mk.m.size() + mk.m_bar.size()) != n) {
        why = "sizes do not cover all atoms";
      } else {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        for (int i : mk.m) {
          if (i < 0 || i >= n || seen[static_cast<size_t>(i)]) { why = "bad index in M"; break; }
          seen[static_cast<size_t>(i)] = 1;
        }
        for (int i : mk.m_bar) {
          if (!why.empty()) break;
          if (i < 0 || i >= n || seen[static_cast<size_t>(i)]) {
            why = "overlap or bad index in M_bar";
            break;
          }
          seen[static_cast<size_t>(i)] = 2;
        }
        if (why.empty())
          for (char s : seen)
            if (!s) { why = "coverage gap"; break; }
        if (why.empty() &&
            (!std::is_sorted(mk.m.begin(), mk.m.end()) ||
             !std::is_sorted(mk.m_bar.begin(), mk.m_bar.end())))
          why = "mask indices not sorted";
      }
      if (!why.empty()) {
        rep.ok = false;
        json j{{"suite", "masks"}, {"n", n},           {"draw", d},
               {"m", mk.m},        {"m_bar", mk.m_bar}, {"violation", why}};
        rep.counterexample = j.dump();
        break;
      }
      if (n == 6)
        for (int i : mk.m) ++hits[static_cast<size_t>(i)];
    }
    if (rep.ok && n == 6) {
      for (int i = 0; i < n; ++i) {
        double freq = static_cast<double>(hits[static_cast<size_t>(i)]) / draws;
        if (std::abs(freq - 0.5) > 0.02) {
          rep.ok = false;
          json j{{"suite", "masks"},
                 {"n", n},
                 {"index", i},
                 {"frequency", freq},
                 {"violation", "inclusion frequency outside 0.5 +- 0.02"}};
          rep.counterexample = j.dump();
          break;
        }
      }
    }
  }
  return rep;
}

}  // namespace mmpt
