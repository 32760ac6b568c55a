#include "mmpt/network.hpp"

#include <cmath>

#include "mmpt/attributes.hpp"
#include "mmpt/errors.hpp"
#include "mmpt/lattice.hpp"
#include "mmpt/rng.hpp"

namespace mmpt {

void validate_config(const ModelConfig& config) {
  if (config.d_a < 1 || config.d_s < 1 || config.d_l < 1)
    throw Error(ErrorKind::InvalidArgument, "widths must be positive");
  if (config.mp_layers < 1 || config.decoder_layers < 1 || config.decoder_fc_layers < 2 ||
      config.head_layers < 2)
    throw Error(ErrorKind::InvalidArgument, "layer counts out of range");
  if (config.rbf_count < 2) throw Error(ErrorKind::InvalidArgument, "rbf_count must be >= 2");
  if (config.rbf_cutoff != config.cutoff)
    throw Error(ErrorKind::InvalidArgument, "rbf_cutoff must equal the graph cutoff");
  if (config.attention_heads != 1)
    throw Error(ErrorKind::InvalidArgument, "only single-head attention is supported");
  if (config.mask_token_mode != "learnable" && config.mask_token_mode != "zero")
    throw Error(ErrorKind::InvalidArgument, "mask_token_mode must be learnable or zero");
}

namespace {

struct ParamBuilder {
  ModelParams params;
  Rng rng;

  explicit ParamBuilder(uint64_t seed) : rng(make_rng(seed, 0x1417ull)) {}

  void matrix(const std::string& name, size_t in, size_t out, double scale = 1.0) {
    double bound = scale * std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (double& x : w) x = uniform(rng, -bound, bound);
    params.emplace(name, Tensor::parameter({in, out}, std::move(w)));
  }

  void linear(const std::string& prefix, size_t in, size_t out, double scale = 1.0) {
    matrix(prefix + ".w", in, out, scale);
    params.emplace(prefix + ".b", Tensor::parameter({out}, std::vector<double>(out, 0.0)));
  }

  void gaussian(const std::string& name, std::vector<size_t> shape, double stddev) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> w(n);
    for (double& x : w) x = stddev * normal(rng);
    params.emplace(name, Tensor::parameter(std::move(shape), std::move(w)));
  }
};

}  // namespace

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  validate_config(config);
  ParamBuilder b(seed);
  size_t d_a = config.d_a, d_s = config.d_s, d_l = config.d_l;
  // Weights that consume a neighbor sum are shrunk so that sum-aggregated
  // activations stay O(1) at init even on dense ~12-neighbor graphs.
  const double sum_scale = 1.0 / 13.0;

  b.gaussian("encoder.embed", {static_cast<size_t>(kNumClasses), d_a}, 1.0);
  b.matrix("encoder.att.w", d_a, d_a);
  b.linear("encoder.att_score", 2 * d_a, 1);
  b.linear("encoder.att_fc", d_a, d_a);
  for (int l = 0; l < config.mp_layers; ++l) {
    std::string p = "encoder.mp" + std::to_string(l);
    b.linear(p + ".msg", d_a + static_cast<size_t>(config.rbf_count), d_a);
    b.linear(p + ".upd", d_a, d_a, sum_scale);
  }
  b.linear("encoder.out", d_a, d_s);
  b.linear("encoder.lat0", 6, d_l);
  b.linear("encoder.lat1", d_l, d_l);
  b.linear("encoder.lat2", d_l, d_l);

  if (config.mask_token_mode == "learnable") b.gaussian("mask_token", {d_s}, 0.02);

  for (int l = 0; l < config.decoder_layers; ++l) {
    b.linear("decoder.atom.gin" + std::to_string(l) + ".fc0", d_s, d_s, sum_scale);
    b.linear("decoder.atom.gin" + std::to_string(l) + ".fc1", d_s, d_s);
    b.linear("decoder.coord.gin" + std::to_string(l) + ".fc0", d_s, d_s, sum_scale);
    b.linear("decoder.coord.gin" + std::to_string(l) + ".fc1", d_s, d_s);
  }
  for (int l = 0; l < config.decoder_fc_layers; ++l) {
    size_t out = l + 1 == config.decoder_fc_layers ? static_cast<size_t>(kNumClasses) : d_s;
    b.linear("decoder.atom.fc" + std::to_string(l), d_s, out);
  }
  b.linear("decoder.coord.out", d_s, 1);
  for (int l = 0; l < config.decoder_fc_layers; ++l) {
    size_t out = l + 1 == config.decoder_fc_layers ? 6 : d_l;
    b.linear("decoder.lattice.fc" + std::to_string(l), d_l, out);
  }

  b.linear("pal.direction.fc0", 2 * d_s, d_s);
  b.linear("pal.direction.fc1", d_s, static_cast<size_t>(kNumDirectionClasses));
  b.linear("pal.unit.fc0", 2 * d_s, d_s);
  b.linear("pal.unit.fc1", d_s, 2);
  b.linear("pal.distance.fc0", 2 * d_s, d_s);
  b.linear("pal.distance.fc1", d_s, 1);

  size_t head_w = d_l + 2 * d_s;
  for (int l = 0; l < config.head_layers; ++l) {
    size_t out = l + 1 == config.head_layers ? 1 : head_w;
    b.linear("head.fc" + std::to_string(l), head_w, out);
  }
  return std::move(b.params);
}

bool is_encoder_param(const std::string& name) {
  return name.rfind("encoder.", 0) == 0 || name == "mask_token";
}

BatchGraph make_batch(const std::vector<const Crystal*>& crystals,
                      const std::vector<const MultiGraph*>& graphs) {
  if (crystals.empty() || crystals.size() != graphs.size())
    throw Error(ErrorKind::InvalidArgument, "batch needs one graph per crystal");
  BatchGraph b;
  b.num_crystals = crystals.size();
  b.node_offset.push_back(0);
  for (size_t ci = 0; ci < crystals.size(); ++ci) {
    const Crystal& c = *crystals[ci];
    const MultiGraph& g = *graphs[ci];
    if (static_cast<size_t>(g.num_nodes) != c.size())
      throw Error(ErrorKind::InvalidArgument, "graph does not match crystal");
    size_t base = b.num_nodes;

    std::vector<Vec3> cart(c.size());
    Vec3 center{};
    for (size_t i = 0; i < c.size(); ++i) {
      cart[i] = c.cart(i);
      center = center + cart[i];
    }
    center = center * (1.0 / static_cast<double>(c.size()));
    for (size_t i = 0; i < c.size(); ++i) {
      b.atom_z.push_back(c.atoms[i]);
      b.node_crystal.push_back(static_cast<int>(ci));
      b.center_distance.push_back(norm(cart[i] - center));
    }
    for (const GraphEdge& e : g.edges) {
      b.edge_src.push_back(static_cast<int>(base) + e.src);
      b.edge_dst.push_back(static_cast<int>(base) + e.dst);
      b.edge_distance.push_back(e.distance);
      b.edge_crystal.push_back(static_cast<int>(ci));
      b.edge_direction_label.push_back(direction_class(e.offset));
      b.edge_unit_label.push_back(unit_cell_label(e.offset));
    }
    SixParams sp = niggli_reduce(c.lattice).params;
    b.six_reduced.insert(b.six_reduced.end(), {sp.a, sp.b, sp.c, sp.alpha, sp.beta, sp.gamma});

    b.num_nodes += c.size();
    b.node_offset.push_back(b.num_nodes);
  }
  return b;
}

static Tensor linear(const Tensor& x, const ModelParams& params, const std::string& prefix) {
  return add_rowvec(matmul(x, params.at(prefix + ".w")), params.at(prefix + ".b"));
}

// Gaussian radial basis over [0, cutoff] with a smooth polynomial envelope
// that vanishes with zero slope at the cutoff.
static Tensor rbf_features(const std::vector<double>& distances, const ModelConfig& config) {
  size_t k = static_cast<size_t>(config.rbf_count);
  double cut = config.rbf_cutoff;
  double sigma = cut / static_cast<double>(k - 1);
  std::vector<double> v(distances.size() * k);
  for (size_t e = 0; e < distances.size(); ++e) {
    double d = distances[e];
    double x = std::min(d / cut, 1.0);
    double env = 1.0 + x * x * x * (-10.0 + x * (15.0 - 6.0 * x));
    for (size_t i = 0; i < k; ++i) {
      double mu = cut * static_cast<double>(i) / static_cast<double>(k - 1);
      double t = (d - mu) / sigma;
      v[e * k + i] = std::exp(-0.5 * t * t) * env;
    }
  }
  return Tensor::constant({distances.size(), k}, std::move(v));
}

AttentionResult attention_reweight(const Tensor& feats, const BatchGraph& batch,
                                   const ModelParams& params, const ModelConfig& config) {
  if (feats.shape().size() != 2 || feats.rows() != batch.num_nodes ||
      feats.cols() != config.d_a)
    throw Error(ErrorKind::ShapeMismatch, "attention expects N x d_a features");
  Tensor proj = matmul(feats, params.at("encoder.att.w"));
  Tensor src_p = gather_rows(proj, batch.edge_src);
  Tensor dst_p = gather_rows(proj, batch.edge_dst);
  Tensor scores = linear(concat({src_p, dst_p}, 1), params, "encoder.att_score");
  Tensor eps = segment_softmax(reshape(leaky_relu(scores, 0.01), {scores.rows()}),
                               batch.edge_src);
  const std::vector<int>& pick = config.attention_literal_self ? batch.edge_src : batch.edge_dst;
  Tensor neigh = gather_rows(feats, pick);
  Tensor pooled = scatter_add_rows(row_scale(neigh, eps), batch.edge_src, batch.num_nodes);
  return {linear(pooled, params, "encoder.att_fc"), eps};
}

Tensor encode_structure(const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& config, bool use_attention) {
  Tensor a = gather_rows(params.at("encoder.embed"), batch.atom_z);
  Tensor h = use_attention ? attention_reweight(a, batch, params, config).output : a;
  Tensor rbf = rbf_features(batch.edge_distance, config);
  for (int l = 0; l < config.mp_layers; ++l) {
    std::string p = "encoder.mp" + std::to_string(l);
    Tensor sender = gather_rows(h, batch.edge_dst);
    Tensor msg = swish(linear(concat({sender, rbf}, 1), params, p + ".msg"));
    Tensor agg = scatter_add_rows(msg, batch.edge_src, batch.num_nodes);
    h = add(h, linear(agg, params, p + ".upd"));
  }
  return linear(h, params, "encoder.out");
}

Tensor encode_lattice(const BatchGraph& batch, const ModelParams& params,
                      const ModelConfig& config) {
  (void)config;
  Tensor six = Tensor::constant({batch.num_crystals, 6}, batch.six_reduced);
  Tensor h = swish(linear(six, params, "encoder.lat0"));
  h = swish(linear(h, params, "encoder.lat1"));
  return linear(h, params, "encoder.lat2");
}

Tensor mask_token(const ModelParams& params, const ModelConfig& config) {
  if (config.mask_token_mode == "learnable") return params.at("mask_token");
  return Tensor::zeros({config.d_s});
}

Tensor apply_mask_rows(const Tensor& h, const std::vector<int>& rows, const Tensor& token) {
  if (h.shape().size() != 2) throw Error(ErrorKind::ShapeMismatch, "apply_mask needs rank 2");
  if (token.shape().size() != 1 || token.numel() != h.cols())
    throw Error(ErrorKind::ShapeMismatch, "token width must match features");
  size_t n = h.rows();
  std::vector<double> keep(n, 1.0), hit(n, 0.0);
  for (int r : rows) {
    if (r < 0 || static_cast<size_t>(r) >= n)
      throw Error(ErrorKind::IndexOutOfRange, "mask index out of range");
    keep[static_cast<size_t>(r)] = 0.0;
    hit[static_cast<size_t>(r)] = 1.0;
  }
  Tensor kept = row_scale(h, Tensor::constant({n}, std::move(keep)));
  Tensor placed = matmul(Tensor::constant({n, 1}, std::move(hit)), reshape(token, {1, token.numel()}));
  return add(kept, placed);
}

static Tensor gin_trunk(const Tensor& h, const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& config, const std::string& ns) {
  Tensor x = h;
  for (int l = 0; l < config.decoder_layers; ++l) {
    std::string p = ns + ".gin" + std::to_string(l);
    Tensor neigh = scatter_add_rows(gather_rows(x, batch.edge_dst), batch.edge_src,
                                    batch.num_nodes);
    Tensor z = add(x, neigh);  // (1 + eps) x + sum, eps fixed at 0
    x = linear(relu(linear(z, params, p + ".fc0")), params, p + ".fc1");
  }
  return x;
}

AtomDecode decode_atoms(const Tensor& h, const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& config) {
  AtomDecode out;
  out.p_a = gin_trunk(h, batch, params, config, "decoder.atom");
  Tensor y = out.p_a;
  for (int l = 0; l + 1 < config.decoder_fc_layers; ++l)
    y = relu(linear(y, params, "decoder.atom.fc" + std::to_string(l)));
  out.logits = linear(y, params, "decoder.atom.fc" + std::to_string(config.decoder_fc_layers - 1));
  return out;
}

Tensor decode_coords(const Tensor& h, const BatchGraph& batch, const ModelParams& params,
                     const ModelConfig& config) {
  Tensor x = gin_trunk(h, batch, params, config, "decoder.coord");
  return linear(x, params, "decoder.coord.out");
}

Tensor decode_lattice(const Tensor& h_l, const ModelParams& params, const ModelConfig& config) {
  Tensor y = h_l;
  for (int l = 0; l + 1 < config.decoder_fc_layers; ++l)
    y = relu(linear(y, params, "decoder.lattice.fc" + std::to_string(l)));
  return linear(y, params, "decoder.lattice.fc" + std::to_string(config.decoder_fc_layers - 1));
}

PalOutputs pal_heads(const Tensor& p_a, const BatchGraph& batch, const ModelParams& params,
                     const ModelConfig& config) {
  (void)config;
  Tensor pair = concat({gather_rows(p_a, batch.edge_src), gather_rows(p_a, batch.edge_dst)}, 1);
  PalOutputs out;
  out.direction_logits = linear(relu(linear(pair, params, "pal.direction.fc0")), params,
                                "pal.direction.fc1");
  out.unit_logits = linear(relu(linear(pair, params, "pal.unit.fc0")), params, "pal.unit.fc1");
  out.distance = linear(relu(linear(pair, params, "pal.distance.fc0")), params, "pal.distance.fc1");
  return out;
}

Tensor head_input(const Tensor& h_s, const Tensor& h_l, const BatchGraph& batch) {
  Tensor mx = segment_max(h_s, batch.node_crystal, batch.num_crystals);
  Tensor sums = scatter_add_rows(h_s, batch.node_crystal, batch.num_crystals);
  std::vector<double> inv(batch.num_crystals);
  for (size_t b = 0; b < batch.num_crystals; ++b)
    inv[b] = 1.0 / static_cast<double>(batch.node_offset[b + 1] - batch.node_offset[b]);
  Tensor mn = row_scale(sums, Tensor::constant({batch.num_crystals}, std::move(inv)));
  return concat({h_l, mx, mn}, 1);
}

Tensor finetune_head(const Tensor& h_s, const Tensor& h_l, const BatchGraph& batch,
                     const ModelParams& params, const ModelConfig& config) {
  Tensor y = head_input(h_s, h_l, batch);
  for (int l = 0; l + 1 < config.head_layers; ++l)
    y = relu(linear(y, params, "head.fc" + std::to_string(l)));
  return linear(y, params, "head.fc" + std::to_string(config.head_layers - 1));
}

}  // namespace mmpt
