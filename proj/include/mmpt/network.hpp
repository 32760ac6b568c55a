#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmpt/graph.hpp"
#include "mmpt/masking.hpp"
#include "mmpt/tensor.hpp"

namespace mmpt {

struct ModelConfig {
  size_t d_a = 128;  // atom feature width through attention and messages
  size_t d_s = 64;   // structure latent width
  size_t d_l = 16;   // lattice latent width
  int mp_layers = 4;
  int rbf_count = 6;
  double rbf_cutoff = 8.0;
  double cutoff = 8.0;  // graph cutoff; must equal rbf_cutoff
  int max_neighbors = 12;
  int decoder_layers = 2;     // GIN rounds in the atom/coordinate decoders
  int decoder_fc_layers = 5;  // linear stack depth in atom/lattice decoders
  int head_layers = 4;
  int attention_heads = 1;  // single-head only
  // Score-weighted self features (sum of eps * a_i) instead of neighbor
  // features (sum of eps * a_j).
  bool attention_literal_self = false;
  std::string mask_token_mode = "learnable";  // or "zero"
};

void validate_config(const ModelConfig& config);

using ModelParams = std::map<std::string, Tensor>;

// Deterministic seeded initialization; every tensor finite. Namespaces:
// encoder.*, decoder.atom.*, decoder.coord.*, decoder.lattice.*, pal.*,
// head.*, mask_token.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Crystals concatenated into one node set; nodes of crystal b occupy
// [node_offset[b], node_offset[b+1]) and edges stay grouped by src in each
// crystal's tie-break order. Geometry enters only through edge distances and
// per-crystal reduced-cell parameters.
struct BatchGraph {
  size_t num_nodes = 0;
  size_t num_crystals = 0;
  std::vector<int> atom_z;
  std::vector<int> node_crystal;
  std::vector<size_t> node_offset;  // size num_crystals + 1
  std::vector<int> edge_src, edge_dst;
  std::vector<double> edge_distance;
  std::vector<int> edge_crystal;
  std::vector<int> edge_direction_label;
  std::vector<int> edge_unit_label;
  std::vector<double> six_reduced;      // num_crystals x 6, reduced-cell params
  std::vector<double> center_distance;  // per node: |x_i - mean(X)| Cartesian
};

BatchGraph make_batch(const std::vector<const Crystal*>& crystals,
                      const std::vector<const MultiGraph*>& graphs);

struct AttentionResult {
  Tensor output;   // N x d_a
  Tensor weights;  // per-edge coefficients, rank 1
};

AttentionResult attention_reweight(const Tensor& feats, const BatchGraph& batch,
                                   const ModelParams& params, const ModelConfig& config);

// h_S for the whole batch (N x d_s).
Tensor encode_structure(const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& config, bool use_attention = true);

// h_L per crystal (B x d_l) from the reduced-cell parameters.
Tensor encode_lattice(const BatchGraph& batch, const ModelParams& params,
                      const ModelConfig& config);

// Replaces the given rows with the token (differentiable in both inputs);
// all other rows pass through bitwise.
Tensor apply_mask_rows(const Tensor& h, const std::vector<int>& rows, const Tensor& token);

// Token tensor per config mode: the trainable parameter or a frozen zero.
Tensor mask_token(const ModelParams& params, const ModelConfig& config);

struct AtomDecode {
  Tensor p_a;     // N x d_s, GIN trunk output
  Tensor logits;  // N x 119
};
AtomDecode decode_atoms(const Tensor& h, const BatchGraph& batch, const ModelParams& params,
                        const ModelConfig& config);

// Predicted center distance per node (N x 1).
Tensor decode_coords(const Tensor& h, const BatchGraph& batch, const ModelParams& params,
                     const ModelConfig& config);

// Six predicted cell parameters per crystal (B x 6).
Tensor decode_lattice(const Tensor& h_l, const ModelParams& params, const ModelConfig& config);

struct PalOutputs {
  Tensor direction_logits;  // E x 27
  Tensor unit_logits;       // E x 2
  Tensor distance;          // E x 1
};
PalOutputs pal_heads(const Tensor& p_a, const BatchGraph& batch, const ModelParams& params,
                     const ModelConfig& config);

// Pooled head input per crystal: concat(h_L, max-pool h_S, mean-pool h_S),
// shape B x (d_l + 2*d_s).
Tensor head_input(const Tensor& h_s, const Tensor& h_l, const BatchGraph& batch);

// Property prediction per crystal (B x 1) from the pooled head input.
Tensor finetune_head(const Tensor& h_s, const Tensor& h_l, const BatchGraph& batch,
                     const ModelParams& params, const ModelConfig& config);

// Parameter names prefixed by any of the encoder namespaces (encoder.,
// mask_token).
bool is_encoder_param(const std::string& name);

}  // namespace mmpt
